#include "kcforge/scorer.hpp"

#include "kcforge/errors.hpp"

#include <cmath>
#include <cstdio>

#include <openssl/evp.h>

namespace kcforge {

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw InvariantError("SHA-256 digest failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out += kHex[digest[i] >> 4];
        out += kHex[digest[i] & 0xF];
    }
    return out;
}

std::string score_cache_key(std::string_view model_id, std::string_view context,
                            std::string_view continuation) {
    std::string buf;
    buf.reserve(model_id.size() + context.size() + continuation.size() + 2);
    buf.append(model_id);
    buf += '\0';
    buf.append(context);
    buf += '\0';
    buf.append(continuation);
    return sha256_hex(buf);
}

// ─── BigramMockScorer ─────────────────────────────────────────

BigramMockScorer::BigramMockScorer(std::string_view training_text)
    : pair_(257, std::vector<std::uint64_t>(256, 0)), row_(257, 0),
      model_id_("mock-bigram:" + sha256_hex(training_text)) {
    for (std::size_t i = 1; i < training_text.size(); ++i) {
        auto prev = static_cast<unsigned char>(training_text[i - 1]);
        auto cur = static_cast<unsigned char>(training_text[i]);
        ++pair_[prev][cur];
        ++row_[prev];
    }
    quantized_.resize(257 * 256);
    for (int prev = 0; prev <= kBegin; ++prev) {
        for (int b = 0; b < 256; ++b)
            quantized_[prev * 256 + b] = std::llround(log_prob(prev, static_cast<unsigned char>(b)) / kQuantum);
    }
}

double BigramMockScorer::log_prob(int prev, unsigned char b) const {
    return std::log((static_cast<double>(pair_[prev][b]) + 1.0) /
                    (static_cast<double>(row_[prev]) + kAlphabet));
}

ScoreResult BigramMockScorer::score(const ScoreRequest& req) {
    ScoreResult out;
    out.model_id = model_id_;
    out.token_count = static_cast<std::int64_t>(req.continuation.size());
    int prev = req.context.empty() ? kBegin : static_cast<unsigned char>(req.context.back());
    std::int64_t units = 0;
    for (char c : req.continuation) {
        auto b = static_cast<unsigned char>(c);
        units += quantized_[prev * 256 + b];
        prev = b;
    }
    out.logprob = static_cast<double>(units) * kQuantum;
    return out;
}

// ─── CountingScorer ───────────────────────────────────────────

ScoreResult CountingScorer::score(const ScoreRequest& req) {
    (req.context.empty() ? unconditional_ : conditional_).fetch_add(1);
    return inner_.score(req);
}

// ─── CachedScorer ─────────────────────────────────────────────

ScoreResult CachedScorer::score(const ScoreRequest& req) {
    const std::string id = inner_.model_id();
    const std::string key = score_cache_key(id, req.context, req.continuation);
    if (auto hit = cache_.find(key)) {
        hits_.fetch_add(1);
        return {hit->logprob, hit->token_count, hit->model_id};
    }
    misses_.fetch_add(1);
    ScoreResult result = inner_.score(req);
    cache_.append({key, result.logprob, result.token_count, result.model_id});
    return result;
}

} // namespace kcforge
