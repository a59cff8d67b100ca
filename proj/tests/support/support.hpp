#pragma once

// Independent oracles and fixtures shared by the unit and acceptance suites.
// Nothing here calls into the code path it is used to check.

#include "kcforge/afm.hpp"
#include "kcforge/clustering.hpp"
#include "kcforge/corpus.hpp"
#include "kcforge/scorer.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace kcforge::testing {

std::filesystem::path data_dir();

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

void write_text(const std::filesystem::path& p, const std::string& text);

/// Scores every continuation as if the context were empty.
class ContextFreeScorer final : public Scorer {
public:
    explicit ContextFreeScorer(Scorer& inner) : inner_(inner) {}
    ScoreResult score(const ScoreRequest& req) override { return inner_.score({"", req.continuation}); }
    std::string model_id() override { return "context-free:" + inner_.model_id(); }

private:
    Scorer& inner_;
};

/// Scorer built from a callback, for fault injection.
class LambdaScorer final : public Scorer {
public:
    using Fn = std::function<ScoreResult(const ScoreRequest&)>;
    LambdaScorer(std::string id, Fn fn) : id_(std::move(id)), fn_(std::move(fn)) {}
    ScoreResult score(const ScoreRequest& req) override { return fn_(req); }
    std::string model_id() override { return id_; }

private:
    std::string id_;
    Fn fn_;
};

/// Byte-bigram log-probability straight from the Laplace formula, summed in
/// double (no quantization).
double bigram_logprob_formula(const std::string& training, const std::string& context,
                              const std::string& continuation);

/// Bank of `texts.size()` stem-only questions with ids "t00", "t01", ...
QuestionBank bank_from_stems(const std::vector<std::string>& stems, const std::string& prefix = "t");

std::string random_text(std::mt19937_64& rng, std::size_t max_len, const std::string& alphabet = {});

// ─── Clustering oracles ───────────────────────────────────────

struct NaiveMerge {
    std::vector<std::size_t> left, right;   // member indices, ascending
    double height = 0.0;
};

/// UPGMA by recomputing every pairwise average linkage from scratch each
/// step; same tie rule (pair of smallest member ids, lexicographic).
std::vector<NaiveMerge> naive_upgma(const DistanceMatrix& d);

/// Members of each side of every merge in `dend`, ascending.
std::vector<NaiveMerge> merges_as_sets(const Dendrogram& dend);

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

/// Block-structured distances: `within` inside a block, `across` between.
DistanceMatrix planted_blocks(const std::vector<std::size_t>& block_sizes, double within, double across,
                              std::vector<int>* truth = nullptr, const std::string& prefix = "p");

DistanceMatrix random_distances(std::mt19937_64& rng, std::size_t n);

// ─── AFM oracles ──────────────────────────────────────────────

struct RandomAfmInstance {
    AfmData data;
    AFMParams params;
};

RandomAfmInstance random_afm_instance(std::mt19937_64& rng, std::size_t max_students, std::size_t max_kcs,
                                      std::size_t max_rows);

/// Max over components of |analytic - central difference| / max(1, |central difference|).
double gradient_check(const AFMParams& p, const AfmData& data, double lambda, double step);

// ─── HTTP ─────────────────────────────────────────────────────

/// In-process /v1/score server. The handler decides status and body.
class TestScoreServer {
public:
    struct Reply {
        int status = 200;
        std::string body;
    };
    using Handler = std::function<Reply(const std::string& request_body)>;

    explicit TestScoreServer(Handler handler);
    /// Serves `scorer` per the wire protocol.
    static std::unique_ptr<TestScoreServer> wrapping(Scorer& scorer);
    ~TestScoreServer();

    std::string endpoint() const;
    std::size_t requests() const { return requests_.load(); }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::atomic<std::size_t> requests_{0};
};

/// Runs the Python reference shim on an ephemeral port; stops it on destruction.
class PythonShim {
public:
    PythonShim(const std::filesystem::path& script, const std::filesystem::path& corpus);
    ~PythonShim();
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    int pid_ = -1;
    int port_ = 0;
};

} // namespace kcforge::testing
