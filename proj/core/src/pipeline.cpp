#include "kcforge/pipeline.hpp"

#include "kcforge/errors.hpp"
#include "kcforge/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <tuple>
#include <cstdlib>
#include <ostream>

#include <nlohmann/json.hpp>

namespace kcforge {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

int exit_code_for(std::exception_ptr e) {
    try {
        std::rethrow_exception(e);
    } catch (const InputError&) {
        return kExitInput;
    } catch (const BackendError&) {
        return kExitBackend;
    } catch (const fs::filesystem_error&) {
        return kExitInput;
    } catch (...) {
        return kExitInternal;
    }
}

std::pair<int, int> parse_k_range(std::string_view text) {
    auto dots = text.find("..");
    if (dots == std::string_view::npos) throw InputError("k range must look like a..b, got '" + std::string(text) + "'");
    int a = static_cast<int>(io::parse_int(text.substr(0, dots), "k range"));
    int b = static_cast<int>(io::parse_int(text.substr(dots + 2), "k range"));
    if (a > b) throw InputError("k range '" + std::string(text) + "' is empty");
    return {a, b};
}

std::string to_string(KPolicyKind kind) {
    switch (kind) {
    case KPolicyKind::fixed: return "fixed";
    case KPolicyKind::silhouette: return "silhouette";
    case KPolicyKind::afm: return "afm";
    }
    return "?";
}

KPolicyKind parse_k_policy(std::string_view text) {
    if (text == "silhouette") return KPolicyKind::silhouette;
    if (text == "afm") return KPolicyKind::afm;
    if (text == "fixed") return KPolicyKind::fixed;
    throw InputError("unknown k policy '" + std::string(text) + "' (silhouette|afm|fixed)");
}

// ─── Configuration ────────────────────────────────────────────

PipelineConfig parse_pipeline_config(std::string_view json_text, const fs::path& base_dir) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError("config: expected a JSON object");

    static const std::vector<std::string> kKeys{"bank",    "step_log",  "kc_models",   "cache",   "out",
                                                "matrix",  "endpoint",  "mock_corpus", "model_id", "retries",
                                                "strict_cache", "separator", "k",     "k_range", "k_policy",
                                                "folds",   "seed",      "lambda_theta", "parallelism"};
    for (const auto& [key, _] : doc.items()) {
        if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) throw ParseError("config: unknown key '" + key + "'");
    }
    auto path = [&](const std::string& s) { fs::path p(s); return p.is_absolute() ? p : base_dir / p; };

    PipelineConfig cfg;
    try {
        if (doc.contains("bank")) cfg.bank = path(doc["bank"].get<std::string>());
        if (doc.contains("step_log")) cfg.step_log = path(doc["step_log"].get<std::string>());
        if (doc.contains("kc_models"))
            for (const auto& m : doc["kc_models"]) cfg.kc_models.push_back(path(m.get<std::string>()));
        if (doc.contains("cache")) cfg.cache = path(doc["cache"].get<std::string>());
        if (doc.contains("out")) cfg.out_dir = path(doc["out"].get<std::string>());
        if (doc.contains("matrix")) cfg.matrix = path(doc["matrix"].get<std::string>());
        if (doc.contains("endpoint")) cfg.endpoint = doc["endpoint"].get<std::string>();
        if (doc.contains("mock_corpus")) cfg.mock_corpus = path(doc["mock_corpus"].get<std::string>());
        if (doc.contains("model_id")) cfg.scorer_model_id = doc["model_id"].get<std::string>();
        if (doc.contains("retries")) cfg.retries = doc["retries"].get<int>();
        if (doc.contains("strict_cache")) cfg.strict_cache = doc["strict_cache"].get<bool>();
        if (doc.contains("separator")) cfg.separator = doc["separator"].get<std::string>();
        if (doc.contains("k") && doc.contains("k_range")) throw ParseError("config: set only one of 'k' and 'k_range'");
        if (doc.contains("k_policy")) cfg.k_policy.kind = parse_k_policy(doc["k_policy"].get<std::string>());
        if (doc.contains("k")) {
            cfg.k_policy.kind = KPolicyKind::fixed;
            cfg.k_policy.k = doc["k"].get<int>();
        }
        if (doc.contains("k_range")) {
            std::tie(cfg.k_policy.k_min, cfg.k_policy.k_max) = parse_k_range(doc["k_range"].get<std::string>());
            if (cfg.k_policy.kind == KPolicyKind::fixed) throw ParseError("config: k_range given with fixed k policy");
        }
        if (doc.contains("folds")) cfg.folds = doc["folds"].get<int>();
        if (doc.contains("seed")) cfg.seed = doc["seed"].get<std::uint64_t>();
        if (doc.contains("lambda_theta")) cfg.lambda_theta = doc["lambda_theta"].get<double>();
        if (doc.contains("parallelism")) cfg.parallelism = doc["parallelism"].get<std::size_t>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    return cfg;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    return parse_pipeline_config(io::read_file(path), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

std::string pipeline_config_json(const PipelineConfig& cfg) {
    json doc;
    doc["bank"] = cfg.bank.string();
    doc["step_log"] = cfg.step_log.string();
    json models = json::array();
    for (const auto& m : cfg.kc_models) models.push_back(m.string());
    doc["kc_models"] = models;
    doc["cache"] = cfg.cache_path().string();
    doc["out"] = cfg.out_dir.string();
    doc["matrix"] = cfg.matrix_path().string();
    if (cfg.endpoint) doc["endpoint"] = *cfg.endpoint;
    if (cfg.mock_corpus) doc["mock_corpus"] = cfg.mock_corpus->string();
    if (cfg.scorer_model_id) doc["model_id"] = *cfg.scorer_model_id;
    doc["retries"] = cfg.retries;
    doc["separator"] = cfg.separator;
    doc["k_policy"] = to_string(cfg.k_policy.kind);
    if (cfg.k_policy.kind == KPolicyKind::fixed) {
        doc["k"] = cfg.k_policy.k;
    } else {
        doc["k_range"] = std::to_string(cfg.k_policy.k_min) + ".." + std::to_string(cfg.k_policy.k_max);
    }
    doc["folds"] = cfg.folds;
    doc["seed"] = cfg.seed;
    doc["lambda_theta"] = cfg.lambda_theta;
    doc["parallelism"] = cfg.parallelism;
    return doc.dump(2);
}

std::unique_ptr<Scorer> make_scorer(const PipelineConfig& cfg) {
    if (cfg.endpoint && cfg.mock_corpus) throw InputError("configure exactly one scorer: --endpoint or --mock-corpus");
    if (cfg.mock_corpus) {
        auto mock = std::make_unique<BigramMockScorer>(io::read_file(*cfg.mock_corpus));
        mock->set_parallelism(cfg.parallelism);
        return mock;
    }
    if (cfg.endpoint) {
        HttpScorerConfig hc;
        hc.endpoint = *cfg.endpoint;
        hc.parallelism = cfg.parallelism;
        hc.max_attempts = cfg.retries;
        hc.model_id = cfg.scorer_model_id;
        return std::make_unique<HttpScorer>(hc);
    }
    throw InputError("no scorer configured: pass --endpoint, --mock-corpus, or set KCFORGE_ENDPOINT");
}

// ─── Stages ───────────────────────────────────────────────────

namespace {

FitConfig fit_config(const PipelineConfig& cfg) {
    FitConfig fc;
    fc.lambda_theta = cfg.lambda_theta;
    fc.seed = cfg.seed;
    fc.parallelism = cfg.parallelism;
    return fc;
}

void require(const fs::path& p, const char* what) {
    if (p.empty()) throw InputError(std::string("no ") + what + " configured");
}

std::string fmt(double v) { return io::format_g17(v); }

/// Bank for the cluster stage: the configured one (which must match the
/// matrix) or placeholder questions named after the matrix ids.
QuestionBank bank_for_matrix(const PipelineConfig& cfg, const CongruityMatrix& m) {
    if (cfg.bank.empty()) {
        std::vector<Question> qs;
        for (const auto& id : m.ids()) qs.push_back({id, id, {}, {}});
        return QuestionBank(std::move(qs));
    }
    auto bank = load_question_bank(cfg.bank);
    if (bank.ids() != m.ids()) throw InputError("congruity matrix ids do not match the question bank");
    return bank;
}

struct Range {
    int lo, hi;
};

Range resolve_range(const KPolicy& policy, std::size_t n) {
    return {policy.k_min, policy.k_max == 0 ? static_cast<int>(n) - 1 : policy.k_max};
}

std::vector<SweepRow> sweep(const PipelineConfig& cfg, const DistanceMatrix& d, const Dendrogram& dend,
                            const QuestionBank& bank, Range range) {
    require(cfg.step_log, "step log");
    const auto n = static_cast<int>(d.size());
    if (range.lo < 1 || range.lo > range.hi || range.hi > n)
        throw InputError("k range [" + std::to_string(range.lo) + ", " + std::to_string(range.hi) +
                         "] infeasible for " + std::to_string(n) + " questions");
    const auto log = load_step_log(cfg.step_log);
    std::vector<SweepRow> rows;
    for (int k = range.lo; k <= range.hi; ++k) {
        const auto part = cut(dend, k);
        SweepRow row;
        row.k = k;
        if (k >= 2 && k <= n - 1) row.silhouette = silhouette(d, part);
        row.cv_rmse = cross_validate(log, to_kc_model(part, bank, d), bank, cfg.folds, fit_config(cfg)).cv_rmse;
        rows.push_back(row);
    }
    return rows;
}

int best_by_cv(const std::vector<SweepRow>& rows) {
    const SweepRow* best = &rows.front();
    for (const auto& r : rows) {
        if (r.cv_rmse < best->cv_rmse) best = &r;
    }
    return best->k;
}

std::string format_sweep(const std::vector<SweepRow>& rows) {
    std::string out = "k,silhouette,cv_rmse\n";
    for (const auto& r : rows)
        out += std::to_string(r.k) + "," + (r.silhouette ? fmt(*r.silhouette) : std::string()) + "," + fmt(r.cv_rmse) + "\n";
    return out;
}

} // namespace

CongruityStats cmd_congruity(const PipelineConfig& cfg, std::ostream& log) {
    require(cfg.bank, "question bank");
    const auto bank = load_question_bank(cfg.bank);
    auto backend = make_scorer(cfg);
    ScoreCache cache(cfg.cache_path(), cfg.strict_cache);
    CachedScorer cached(*backend, cache);
    CountingScorer counting(cached);

    CongruityOptions opts;
    opts.separator = cfg.separator;
    opts.parallelism = cfg.parallelism;
    const auto matrix = congruity_matrix(bank, counting, opts);
    save_congruity_csv(matrix, cfg.matrix_path());

    CongruityStats stats;
    stats.n = bank.size();
    stats.unconditional_calls = counting.unconditional_calls();
    stats.conditional_calls = counting.conditional_calls();
    stats.backend_calls = cached.misses();
    stats.cache_hits = cached.hits();
    stats.model_id = matrix.scorer_model_id();

    const std::size_t total = stats.unconditional_calls + stats.conditional_calls;
    log << "questions: " << stats.n << "\n"
        << "score calls: " << stats.unconditional_calls << " unconditional + " << stats.conditional_calls
        << " conditional\n"
        << "backend calls: " << stats.backend_calls << "\n"
        << "cache hits: " << stats.cache_hits << " (hit rate "
        << (total ? fmt(static_cast<double>(stats.cache_hits) / static_cast<double>(total)) : std::string("0")) << ")\n"
        << "model: " << stats.model_id << "\n"
        << "wrote " << cfg.matrix_path().string() << "\n";
    return stats;
}

ClusterOutcome cmd_cluster(const PipelineConfig& cfg, std::ostream& log) {
    const auto matrix = load_congruity_csv(cfg.matrix_path());
    const auto bank = bank_for_matrix(cfg, matrix);
    const auto d = to_distance(matrix);
    const auto dend = agglomerate(d);
    const auto n = static_cast<int>(d.size());

    ClusterOutcome out;
    switch (cfg.k_policy.kind) {
    case KPolicyKind::fixed:
        if (cfg.k_policy.k < 1 || cfg.k_policy.k > n)
            throw InputError("k = " + std::to_string(cfg.k_policy.k) + " outside [1, " + std::to_string(n) + "]");
        out.k = cfg.k_policy.k;
        break;
    case KPolicyKind::silhouette: {
        auto r = resolve_range(cfg.k_policy, d.size());
        out.k = select_k(d, r.lo, r.hi);
        break;
    }
    case KPolicyKind::afm: {
        auto rows = sweep(cfg, d, dend, bank, resolve_range(cfg.k_policy, d.size()));
        io::write_file_atomic(cfg.sweep_path(), format_sweep(rows));
        out.k = best_by_cv(rows);
        break;
    }
    }
    const auto part = cut(dend, out.k);
    if (out.k >= 2 && out.k <= n - 1) out.silhouette = silhouette(d, part);
    out.model = to_kc_model(part, bank, d, "clustered");
    save_kc_model(out.model, cfg.model_path());
    save_dendrogram(dend, cfg.dendrogram_path());

    log << "k: " << out.k << " (" << to_string(cfg.k_policy.kind) << ")\n"
        << "silhouette: " << (out.silhouette ? fmt(*out.silhouette) : std::string("n/a")) << "\n"
        << "wrote " << cfg.model_path().string() << "\n";
    return out;
}

std::vector<EvalReport> cmd_eval(const PipelineConfig& cfg, std::ostream& log) {
    require(cfg.bank, "question bank");
    require(cfg.step_log, "step log");
    if (cfg.kc_models.empty()) throw InputError("no KC model files given");
    const auto bank = load_question_bank(cfg.bank);
    const auto steps = load_step_log(cfg.step_log);
    std::vector<KCModel> models;
    for (const auto& p : cfg.kc_models) models.push_back(load_kc_model(p, bank));
    auto reports = compare(models, steps, bank, cfg.folds, fit_config(cfg));
    save_eval_reports(reports, cfg.report_path());

    log << "model                     KCs    cv_rmse    train_rmse\n";
    for (const auto& r : reports) {
        char line[256];
        std::snprintf(line, sizeof line, "%-24s %5zu   %.4f     %.4f%s\n", r.model_name.c_str(), r.n_kcs, r.cv_rmse,
                      r.train_rmse, r.converged ? "" : "  (not converged)");
        log << line;
    }
    log << "wrote " << cfg.report_path().string() << "\n";
    return reports;
}

std::vector<SweepRow> cmd_sweep_k(const PipelineConfig& cfg, std::ostream& log) {
    require(cfg.bank, "question bank");
    const auto matrix = load_congruity_csv(cfg.matrix_path());
    const auto bank = bank_for_matrix(cfg, matrix);
    const auto d = to_distance(matrix);
    const auto dend = agglomerate(d);
    auto r = resolve_range(cfg.k_policy.kind == KPolicyKind::fixed ? KPolicy{} : cfg.k_policy, d.size());
    if (cfg.k_policy.kind == KPolicyKind::fixed) r = {cfg.k_policy.k, cfg.k_policy.k};
    auto rows = sweep(cfg, d, dend, bank, r);
    io::write_file_atomic(cfg.sweep_path(), format_sweep(rows));
    log << "k    silhouette   cv_rmse\n";
    for (const auto& row : rows) {
        char line[128];
        std::snprintf(line, sizeof line, "%-4d %-12s %.6f\n", row.k,
                      row.silhouette ? fmt(*row.silhouette).substr(0, 10).c_str() : "n/a", row.cv_rmse);
        log << line;
    }
    log << "best k by cv_rmse: " << best_by_cv(rows) << "\n"
        << "wrote " << cfg.sweep_path().string() << "\n";
    return rows;
}

// ─── Pipeline ─────────────────────────────────────────────────

namespace {

std::string file_digest(const fs::path& p) { return sha256_hex(io::read_file(p)); }

std::string stage_key(std::initializer_list<std::string> parts) {
    std::string buf;
    for (const auto& p : parts) {
        buf += p;
        buf += '\0';
    }
    return sha256_hex(buf);
}

json read_manifest(const fs::path& p) {
    if (!fs::exists(p)) return json::object();
    try {
        return json::parse(io::read_file(p));
    } catch (const json::exception&) {
        return json::object();
    }
}

bool up_to_date(const json& manifest, const char* stage, const std::string& key, const fs::path& output) {
    return manifest.contains("stages") && manifest["stages"].contains(stage) &&
           manifest["stages"][stage] == key && fs::exists(output);
}

} // namespace

std::vector<EvalReport> cmd_pipeline(const PipelineConfig& cfg, std::ostream& log) {
    require(cfg.bank, "question bank");
    require(cfg.step_log, "step log");
    const auto previous = read_manifest(cfg.manifest_path());
    json stages = json::object();

    const std::string model_id = make_scorer(cfg)->model_id();
    const auto congruity_key = stage_key({"congruity", file_digest(cfg.bank), model_id, cfg.separator});
    if (!cfg.force && up_to_date(previous, "congruity", congruity_key, cfg.matrix_path())) {
        log << "[congruity] up to date\n";
    } else {
        log << "[congruity]\n";
        cmd_congruity(cfg, log);
    }
    stages["congruity"] = congruity_key;

    const std::string policy = pipeline_config_json(cfg);   // covers k policy, folds, seed, lambda
    const auto cluster_key = stage_key({"cluster", file_digest(cfg.matrix_path()), file_digest(cfg.bank),
                                        file_digest(cfg.step_log), policy});
    int chosen_k = 0;
    if (!cfg.force && up_to_date(previous, "cluster", cluster_key, cfg.model_path()) && previous.contains("k")) {
        log << "[cluster] up to date\n";
        chosen_k = previous["k"].get<int>();
    } else {
        log << "[cluster]\n";
        chosen_k = cmd_cluster(cfg, log).k;
    }
    stages["cluster"] = cluster_key;

    PipelineConfig eval_cfg = cfg;
    eval_cfg.kc_models.clear();
    eval_cfg.kc_models.push_back(cfg.model_path());
    eval_cfg.kc_models.insert(eval_cfg.kc_models.end(), cfg.kc_models.begin(), cfg.kc_models.end());
    std::string model_digests;
    for (const auto& m : eval_cfg.kc_models) model_digests += file_digest(m) + ";";
    const auto eval_key = stage_key({"eval", model_digests, file_digest(cfg.bank), file_digest(cfg.step_log), policy});
    std::vector<EvalReport> reports;
    if (!cfg.force && up_to_date(previous, "eval", eval_key, cfg.report_path())) {
        log << "[eval] up to date\n";
    } else {
        log << "[eval]\n";
        reports = cmd_eval(eval_cfg, log);
    }
    stages["eval"] = eval_key;

    json manifest;
    manifest["config"] = json::parse(pipeline_config_json(cfg));
    manifest["scorer_model_id"] = model_id;
    manifest["seed"] = cfg.seed;
    manifest["k"] = chosen_k;
    manifest["stages"] = stages;
    io::write_file_atomic(cfg.manifest_path(), manifest.dump(2) + "\n");
    log << "wrote " << cfg.manifest_path().string() << "\n";
    return reports;
}

} // namespace kcforge
