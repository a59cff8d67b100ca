#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kcforge {

// ─── Scoring interface ────────────────────────────────────────
// A scorer returns the total natural-log probability of `continuation`
// given `context`. Implementations must be deterministic: the result is a
// pure function of (model_id, context, continuation).

struct ScoreRequest {
    std::string context;        // may be empty; carried verbatim
    std::string continuation;   // may be empty -> (0, 0 tokens)
};

struct ScoreResult {
    double logprob = 0.0;            // <= 0
    std::int64_t token_count = 0;    // 0 iff continuation empty
    std::string model_id;

    friend bool operator==(const ScoreResult&, const ScoreResult&) = default;
};

class Scorer {
public:
    virtual ~Scorer() = default;

    virtual ScoreResult score(const ScoreRequest& req) = 0;
    /// Stable identifier of the backing model.
    virtual std::string model_id() = 0;
    /// How many concurrent score() calls the backend tolerates.
    virtual std::size_t parallelism() const { return 1; }
};

/// Lowercase hex SHA-256 of arbitrary bytes.
std::string sha256_hex(std::string_view bytes);

/// Cache key: sha256(model_id \0 context \0 continuation).
std::string score_cache_key(std::string_view model_id, std::string_view context,
                            std::string_view continuation);

// ─── Byte-bigram mock ─────────────────────────────────────────
// Exact, dependency-free stand-in for a language model:
//   P(b | prev) = (count(prev, b) + 1) / (count(prev) + 257)
// over 256 byte values plus a BEGIN symbol that only ever conditions.
// Training counts adjacent byte pairs of the training text.
//
// Per-byte terms are rounded to multiples of 2^-40 nats and summed in
// integers, so the chain rule score("", a + b) == score("", a) + score(a, b)
// holds bit for bit while |logprob| < 2^13.

class BigramMockScorer final : public Scorer {
public:
    static constexpr int kBegin = 256;
    static constexpr double kAlphabet = 257.0;
    static constexpr double kQuantum = 1.0 / 1099511627776.0;   // 2^-40

    explicit BigramMockScorer(std::string_view training_text = {});

    ScoreResult score(const ScoreRequest& req) override;
    std::string model_id() override { return model_id_; }
    std::size_t parallelism() const override { return parallelism_; }
    void set_parallelism(std::size_t n) { parallelism_ = n == 0 ? 1 : n; }

    /// Natural log of P(b | prev); prev in [0, 256], 256 = BEGIN.
    double log_prob(int prev, unsigned char b) const;
    std::uint64_t count(int prev, unsigned char b) const { return pair_[prev][b]; }
    std::uint64_t count(int prev) const { return row_[prev]; }

private:
    std::vector<std::vector<std::uint64_t>> pair_;   // [257][256]
    std::vector<std::uint64_t> row_;                 // [257]
    std::vector<std::int64_t> quantized_;            // [257 * 256], log_prob / kQuantum
    std::string model_id_;
    std::size_t parallelism_ = 1;
};

// ─── HTTP client ──────────────────────────────────────────────
// POST <endpoint>/v1/score {"context","continuation"} ->
//   {"logprob","token_count","model_id"} | status >= 400 {"error"}

struct HttpScorerConfig {
    std::string endpoint;                 // e.g. "http://127.0.0.1:8700"
    std::size_t parallelism = 4;
    int max_attempts = 3;
    std::chrono::milliseconds backoff{100};          // doubled after each failure
    std::chrono::milliseconds timeout{60000};
    std::optional<std::string> model_id;             // skip the probe when set
};

class HttpScorer final : public Scorer {
public:
    explicit HttpScorer(HttpScorerConfig config);

    ScoreResult score(const ScoreRequest& req) override;
    /// Configured id, or the id reported for an empty probe request.
    std::string model_id() override;
    std::size_t parallelism() const override { return config_.parallelism; }

    /// Number of HTTP requests actually sent, retries included.
    std::size_t requests_sent() const { return requests_.load(); }

private:
    ScoreResult post_once(const ScoreRequest& req);

    HttpScorerConfig config_;
    std::string scheme_host_port_;
    std::string path_prefix_;
    std::mutex id_mutex_;
    std::optional<std::string> model_id_;
    std::atomic<std::size_t> requests_{0};
};

// ─── Cache ────────────────────────────────────────────────────
// Append-only text file, one entry per line:
//   <key> <logprob shortest round-trip> <token_count> <model_id>

struct CacheEntry {
    std::string key;
    double logprob = 0.0;
    std::int64_t token_count = 0;
    std::string model_id;
};

/// Parses one cache line (without LF); nullopt when malformed.
std::optional<CacheEntry> parse_cache_line(std::string_view line);
std::string format_cache_line(const CacheEntry& e);

class ScoreCache {
public:
    /// Opens (creating if needed) and loads `path`. Malformed lines are
    /// skipped and logged unless `strict`, which throws ParseError instead.
    explicit ScoreCache(std::filesystem::path path, bool strict = false);

    std::optional<CacheEntry> find(const std::string& key) const;
    /// Appends one complete line and flushes; concurrent callers are serialized.
    void append(const CacheEntry& entry);

    std::size_t size() const;
    std::size_t skipped_lines() const { return skipped_; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, CacheEntry> entries_;
    std::ofstream out_;
    std::size_t skipped_ = 0;
};

/// Scorer that consults a ScoreCache before delegating to `inner`.
class CachedScorer final : public Scorer {
public:
    CachedScorer(Scorer& inner, ScoreCache& cache) : inner_(inner), cache_(cache) {}

    ScoreResult score(const ScoreRequest& req) override;
    std::string model_id() override { return inner_.model_id(); }
    std::size_t parallelism() const override { return inner_.parallelism(); }

    std::size_t hits() const { return hits_.load(); }
    std::size_t misses() const { return misses_.load(); }

private:
    Scorer& inner_;
    ScoreCache& cache_;
    std::atomic<std::size_t> hits_{0};
    std::atomic<std::size_t> misses_{0};
};

/// Pass-through that counts calls, split by empty vs non-empty context.
class CountingScorer final : public Scorer {
public:
    explicit CountingScorer(Scorer& inner) : inner_(inner) {}

    ScoreResult score(const ScoreRequest& req) override;
    std::string model_id() override { return inner_.model_id(); }
    std::size_t parallelism() const override { return inner_.parallelism(); }

    std::size_t calls() const { return unconditional_.load() + conditional_.load(); }
    std::size_t unconditional_calls() const { return unconditional_.load(); }
    std::size_t conditional_calls() const { return conditional_.load(); }

private:
    Scorer& inner_;
    std::atomic<std::size_t> unconditional_{0};
    std::atomic<std::size_t> conditional_{0};
};

} // namespace kcforge
