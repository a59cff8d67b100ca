#include "kcforge/errors.hpp"
#include "kcforge/scorer.hpp"

#include <cmath>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace kcforge {

namespace {

bool retryable_status(int status) {
    return status == 429 || status == 502 || status == 503 || status == 504;
}

std::string backend_message(const std::string& body) {
    try {
        auto doc = nlohmann::json::parse(body);
        if (doc.is_object() && doc.contains("error") && doc["error"].is_string())
            return doc["error"].get<std::string>();
    } catch (const nlohmann::json::exception&) {
    }
    return body.substr(0, 200);
}

} // namespace

HttpScorer::HttpScorer(HttpScorerConfig config) : config_(std::move(config)) {
    const auto& url = config_.endpoint;
    auto scheme_end = url.find("://");
    if (url.empty() || scheme_end == std::string::npos)
        throw InputError("scorer endpoint must look like http://host:port, got '" + url + "'");
    auto path_start = url.find('/', scheme_end + 3);
    scheme_host_port_ = url.substr(0, path_start);
    if (path_start != std::string::npos) {
        path_prefix_ = url.substr(path_start);
        while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    }
    if (config_.max_attempts < 1) throw InputError("scorer retry count must be >= 1");
    if (config_.parallelism == 0) config_.parallelism = 1;
    if (config_.model_id) model_id_ = config_.model_id;
}

ScoreResult HttpScorer::post_once(const ScoreRequest& req) {
    httplib::Client client(scheme_host_port_);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    nlohmann::json body{{"context", req.context}, {"continuation", req.continuation}};
    requests_.fetch_add(1);
    auto res = client.Post(path_prefix_ + "/v1/score", body.dump(), "application/json");
    if (!res) throw TransportError("POST " + config_.endpoint + "/v1/score: " + httplib::to_string(res.error()));
    if (retryable_status(res->status))
        throw TransportError("backend status " + std::to_string(res->status) + ": " + backend_message(res->body));
    if (res->status < 200 || res->status >= 300)
        throw ProtocolError("backend status " + std::to_string(res->status) + ": " + backend_message(res->body));

    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
        throw ProtocolError(std::string("backend response is not JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ProtocolError("backend response is not a JSON object");
    if (!doc.contains("logprob") || !doc["logprob"].is_number())
        throw ProtocolError("backend response lacks numeric 'logprob'");
    if (!doc.contains("token_count") || !doc["token_count"].is_number_integer())
        throw ProtocolError("backend response lacks integer 'token_count'");
    if (!doc.contains("model_id") || !doc["model_id"].is_string() || doc["model_id"].get<std::string>().empty())
        throw ProtocolError("backend response lacks 'model_id'");

    ScoreResult out{doc["logprob"].get<double>(), doc["token_count"].get<std::int64_t>(),
                    doc["model_id"].get<std::string>()};
    if (!std::isfinite(out.logprob) || out.logprob > 0.0)
        throw ProtocolError("backend logprob out of range: " + std::to_string(out.logprob));
    if (out.token_count < 0) throw ProtocolError("backend token_count is negative");
    if (out.token_count == 0 && !req.continuation.empty())
        throw ProtocolError("backend reported 0 tokens for a non-empty continuation");
    return out;
}

ScoreResult HttpScorer::score(const ScoreRequest& req) {
    auto delay = config_.backoff;
    for (int attempt = 1;; ++attempt) {
        try {
            return post_once(req);
        } catch (const TransportError& e) {
            if (attempt >= config_.max_attempts)
                throw TransportError(std::string(e.what()) + " (after " + std::to_string(attempt) + " attempts)");
            spdlog::debug("scorer attempt {} failed: {}; retrying in {} ms", attempt, e.what(), delay.count());
            std::this_thread::sleep_for(delay);
            delay *= 2;
        }
    }
}

std::string HttpScorer::model_id() {
    std::lock_guard lock(id_mutex_);
    if (!model_id_) model_id_ = score({}).model_id;
    return *model_id_;
}

} // namespace kcforge
