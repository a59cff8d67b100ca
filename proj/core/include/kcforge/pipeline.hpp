#pragma once

#include "kcforge/afm.hpp"
#include "kcforge/clustering.hpp"
#include "kcforge/congruity.hpp"

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace kcforge {

// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitBackend = 3;
inline constexpr int kExitInternal = 4;

/// Maps an in-flight exception to the exit code family above.
int exit_code_for(std::exception_ptr e);

enum class KPolicyKind { fixed, silhouette, afm };

struct KPolicy {
    KPolicyKind kind = KPolicyKind::silhouette;
    int k = 0;          // fixed
    int k_min = 2;      // silhouette / afm
    int k_max = 0;      // 0 -> n - 1
};

/// "a..b" -> (a, b).
std::pair<int, int> parse_k_range(std::string_view text);
std::string to_string(KPolicyKind kind);
KPolicyKind parse_k_policy(std::string_view text);

struct PipelineConfig {
    std::filesystem::path bank;
    std::filesystem::path step_log;
    std::vector<std::filesystem::path> kc_models;   // extra models for eval (experts, baselines)
    std::filesystem::path cache;                    // default: <out>/score_cache.txt
    std::filesystem::path out_dir = "out";
    std::filesystem::path matrix;                   // default: <out>/congruity.csv

    std::optional<std::string> endpoint;
    std::optional<std::filesystem::path> mock_corpus;
    std::optional<std::string> scorer_model_id;
    int retries = 3;
    bool strict_cache = false;

    std::string separator = "\n\n";
    KPolicy k_policy;
    int folds = 10;
    std::uint64_t seed = 0;
    double lambda_theta = 0.1;
    std::size_t parallelism = 1;
    bool force = false;

    std::filesystem::path matrix_path() const { return matrix.empty() ? out_dir / "congruity.csv" : matrix; }
    std::filesystem::path cache_path() const { return cache.empty() ? out_dir / "score_cache.txt" : cache; }
    std::filesystem::path model_path() const { return out_dir / "kc_model.csv"; }
    std::filesystem::path dendrogram_path() const { return out_dir / "dendrogram.txt"; }
    std::filesystem::path report_path() const { return out_dir / "report.csv"; }
    std::filesystem::path sweep_path() const { return out_dir / "sweep.csv"; }
    std::filesystem::path manifest_path() const { return out_dir / "manifest.json"; }
};

/// JSON config; relative paths resolve against `base_dir`.
PipelineConfig parse_pipeline_config(std::string_view json_text, const std::filesystem::path& base_dir);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
/// Deterministic JSON snapshot (used in the run manifest).
std::string pipeline_config_json(const PipelineConfig& cfg);

/// Requires exactly one scorer.
std::unique_ptr<Scorer> make_scorer(const PipelineConfig& cfg);

struct CongruityStats {
    std::size_t n = 0;
    std::size_t unconditional_calls = 0;
    std::size_t conditional_calls = 0;
    std::size_t backend_calls = 0;
    std::size_t cache_hits = 0;
    std::string model_id;
};

struct ClusterOutcome {
    int k = 0;
    std::optional<double> silhouette;   // defined for 2 <= k <= n - 1
    KCModel model;
};

struct SweepRow {
    int k = 0;
    std::optional<double> silhouette;
    double cv_rmse = 0.0;
};

// Stage commands. Each throws on failure (see exit_code_for) and writes its
// outputs atomically; `log` receives the human-readable summary.

CongruityStats cmd_congruity(const PipelineConfig& cfg, std::ostream& log);
ClusterOutcome cmd_cluster(const PipelineConfig& cfg, std::ostream& log);
std::vector<EvalReport> cmd_eval(const PipelineConfig& cfg, std::ostream& log);
std::vector<SweepRow> cmd_sweep_k(const PipelineConfig& cfg, std::ostream& log);
/// congruity -> cluster -> eval, skipping stages whose recorded inputs are
/// unchanged (unless cfg.force); writes manifest.json.
std::vector<EvalReport> cmd_pipeline(const PipelineConfig& cfg, std::ostream& log);

} // namespace kcforge
