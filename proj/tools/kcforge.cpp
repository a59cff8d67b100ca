// kcforge: knowledge-component discovery and evaluation from the command line.
//
//   kcforge congruity --bank bank.json --mock-corpus corpus.txt --out out/
//   kcforge cluster   --out out/ --k-range 2..8
//   kcforge eval      --bank bank.json --step-log steps.csv expert.csv out/kc_model.csv
//   kcforge pipeline  --config run.json
//   kcforge sweep-k   --config run.json --k-range 2..10

#include "kcforge/errors.hpp"
#include "kcforge/io.hpp"
#include "kcforge/pipeline.hpp"

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

namespace {

struct Flags {
    std::optional<std::string> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    bool force = false;
    std::optional<std::string> endpoint;
    std::optional<std::string> mock_corpus;
    std::optional<std::string> model_id;
    std::optional<int> retries;
    bool strict_cache = false;
    std::optional<std::string> bank;
    std::optional<std::string> step_log;
    std::vector<std::string> kc_models;
    std::optional<std::string> cache;
    std::optional<std::string> matrix;
    std::optional<std::string> sep;
    std::optional<int> folds;
    std::optional<int> k;
    std::optional<std::string> k_range;
    std::optional<std::string> k_policy;
    std::optional<double> lambda_theta;
    std::optional<std::size_t> parallelism;
    bool verbose = false;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "JSON run configuration; flags override its fields");
    cmd->add_option("--seed", f.seed, "Seed for fold assignment");
    cmd->add_option("--out", f.out, "Output directory");
    cmd->add_flag("--force", f.force, "Rerun stages even when outputs are up to date");
    cmd->add_option("--bank", f.bank, "Question bank (JSON)");
    cmd->add_option("--step-log", f.step_log, "Student-step log (CSV)");
    cmd->add_option("--matrix", f.matrix, "Congruity matrix CSV (default <out>/congruity.csv)");
    cmd->add_option("--parallelism", f.parallelism, "Concurrent scoring calls / parallel folds");
    cmd->add_flag("-v,--verbose", f.verbose, "Debug logging");
}

void add_scorer(CLI::App* cmd, Flags& f) {
    auto* ep = cmd->add_option("--endpoint", f.endpoint, "Scoring service URL (default $KCFORGE_ENDPOINT)");
    auto* mc = cmd->add_option("--mock-corpus", f.mock_corpus, "Train the byte-bigram mock scorer on this text file");
    ep->excludes(mc);
    cmd->add_option("--model-id", f.model_id, "Backend model id (skips the probe request)");
    cmd->add_option("--retries", f.retries, "Attempts per request on transport errors");
    cmd->add_option("--cache", f.cache, "Score cache file (default <out>/score_cache.txt)");
    cmd->add_flag("--strict-cache", f.strict_cache, "Fail on malformed cache lines instead of skipping them");
    cmd->add_option("--sep", f.sep, "Separator between context and target question (escapes: \\n \\t \\\\)");
}

void add_k(CLI::App* cmd, Flags& f) {
    auto* k = cmd->add_option("--k", f.k, "Fixed number of KCs");
    auto* r = cmd->add_option("--k-range", f.k_range, "Candidate KC counts a..b");
    k->excludes(r);
    cmd->add_option("--k-policy", f.k_policy, "silhouette|afm")->check(CLI::IsMember({"silhouette", "afm"}));
}

void add_afm(CLI::App* cmd, Flags& f) {
    cmd->add_option("--folds", f.folds, "Cross-validation folds");
    cmd->add_option("--lambda-theta", f.lambda_theta, "L2 penalty on student proficiency");
}

kcforge::PipelineConfig resolve(const Flags& f) {
    kcforge::PipelineConfig cfg = f.config ? kcforge::load_pipeline_config(*f.config) : kcforge::PipelineConfig{};
    if (f.bank) cfg.bank = *f.bank;
    if (f.step_log) cfg.step_log = *f.step_log;
    if (!f.kc_models.empty()) cfg.kc_models.assign(f.kc_models.begin(), f.kc_models.end());
    if (f.out) cfg.out_dir = *f.out;
    if (f.cache) cfg.cache = *f.cache;
    if (f.matrix) cfg.matrix = *f.matrix;
    if (f.endpoint) {
        cfg.endpoint = *f.endpoint;
        cfg.mock_corpus.reset();
    }
    if (f.mock_corpus) {
        cfg.mock_corpus = *f.mock_corpus;
        cfg.endpoint.reset();
    }
    if (!cfg.endpoint && !cfg.mock_corpus) {
        if (const char* env = std::getenv("KCFORGE_ENDPOINT"); env && *env) cfg.endpoint = env;
    }
    if (f.model_id) cfg.scorer_model_id = *f.model_id;
    if (f.retries) cfg.retries = *f.retries;
    if (f.strict_cache) cfg.strict_cache = true;
    if (f.sep) cfg.separator = kcforge::io::unescape_text(*f.sep);
    if (f.seed) cfg.seed = *f.seed;
    if (f.folds) cfg.folds = *f.folds;
    if (f.lambda_theta) cfg.lambda_theta = *f.lambda_theta;
    if (f.parallelism) cfg.parallelism = *f.parallelism;
    cfg.force = f.force;

    if (f.k) {
        if (f.k_policy) throw kcforge::InputError("--k fixes the KC count; drop --k-policy");
        cfg.k_policy = {kcforge::KPolicyKind::fixed, *f.k, 2, 0};
    } else {
        if (f.k_range) {
            std::tie(cfg.k_policy.k_min, cfg.k_policy.k_max) = kcforge::parse_k_range(*f.k_range);
            if (cfg.k_policy.kind == kcforge::KPolicyKind::fixed) cfg.k_policy.kind = kcforge::KPolicyKind::silhouette;
        }
        if (f.k_policy) {
            cfg.k_policy.kind = kcforge::parse_k_policy(*f.k_policy);
            if (!f.k_range && cfg.k_policy.k_max == 0) cfg.k_policy.k_min = 2;
        }
    }
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"kcforge: knowledge-component discovery with language-model congruity"};
    app.require_subcommand(1);
    Flags f;

    auto* congruity = app.add_subcommand("congruity", "Score all question pairs and write the congruity matrix");
    add_common(congruity, f);
    add_scorer(congruity, f);

    auto* cluster = app.add_subcommand("cluster", "Cluster the congruity matrix into a KC model");
    add_common(cluster, f);
    add_k(cluster, f);
    add_afm(cluster, f);

    auto* eval = app.add_subcommand("eval", "Cross-validate AFM fits for KC models and rank them by RMSE");
    add_common(eval, f);
    add_afm(eval, f);
    eval->add_option("models", f.kc_models, "KC model CSV files");

    auto* pipeline = app.add_subcommand("pipeline", "congruity -> cluster -> eval, with a run manifest");
    add_common(pipeline, f);
    add_scorer(pipeline, f);
    add_k(pipeline, f);
    add_afm(pipeline, f);
    pipeline->add_option("--kc-model", f.kc_models, "Baseline KC models to compare against");

    auto* sweep = app.add_subcommand("sweep-k", "Tabulate silhouette and AFM cv_rmse over a range of k");
    add_common(sweep, f);
    add_k(sweep, f);
    add_afm(sweep, f);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kcforge::kExitInput;
    }
    spdlog::set_level(f.verbose ? spdlog::level::debug : spdlog::level::warn);

    try {
        const auto cfg = resolve(f);
        if (congruity->parsed()) kcforge::cmd_congruity(cfg, std::cout);
        else if (cluster->parsed()) kcforge::cmd_cluster(cfg, std::cout);
        else if (eval->parsed()) kcforge::cmd_eval(cfg, std::cout);
        else if (pipeline->parsed()) kcforge::cmd_pipeline(cfg, std::cout);
        else if (sweep->parsed()) kcforge::cmd_sweep_k(cfg, std::cout);
        return kcforge::kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "kcforge: " << e.what() << "\n";
        return kcforge::exit_code_for(std::current_exception());
    }
}
