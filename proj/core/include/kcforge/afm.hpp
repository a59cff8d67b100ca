#pragma once

#include "kcforge/corpus.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace kcforge {

// ─── Additive Factors Model ───────────────────────────────────
//   P(correct) = sigma(theta_student + sum_k q_jk (beta_k + gamma_k t_k))
// theta: student proficiency, beta: KC easiness, gamma >= 0: KC learning
// rate, t_k: prior opportunities the student had on KC k.

/// Binary question x KC incidence, stored sparsely.
struct QMatrix {
    std::vector<std::string> question_ids;          // bank order
    std::vector<std::string> kc_labels;             // sorted distinct labels
    std::vector<std::vector<std::size_t>> kcs_of;   // per question: ascending KC columns
    std::unordered_map<std::string, std::size_t> row_of;

    bool at(std::size_t question, std::size_t kc) const;
    std::size_t row(const std::string& question_id) const;
};

QMatrix build_q_matrix(const KCModel& model, const QuestionBank& bank);

struct KcOpportunity {
    std::size_t kc = 0;
    std::int64_t t = 0;

    friend bool operator==(const KcOpportunity&, const KcOpportunity&) = default;
};

/// Per StepLog row, one entry per KC of its question (ascending KC).
struct OpportunityTable {
    std::vector<std::vector<KcOpportunity>> rows;
};

/// Counts, for every row, how many earlier rows of the same student touched
/// each KC. Always computed over the whole log.
OpportunityTable opportunities(const StepLog& log, const QMatrix& q);

struct AFMParams {
    std::vector<double> theta;   // per student
    std::vector<double> beta;    // per KC
    std::vector<double> gamma;   // per KC, >= 0

    static AFMParams zeros(std::size_t n_students, std::size_t n_kcs);
    std::size_t n_students() const { return theta.size(); }
    std::size_t n_kcs() const { return beta.size(); }

    friend bool operator==(const AFMParams&, const AFMParams&) = default;
};

double sigmoid(double z);

/// sigma(theta_i + sum over features (beta_k + gamma_k t_k)).
double predict(const AFMParams& p, std::size_t student, std::span<const KcOpportunity> features);

/// One observation in model-ready form.
struct AfmRow {
    std::size_t student = 0;
    std::vector<KcOpportunity> features;
    int y = 0;
};

struct AfmData {
    std::vector<std::string> students;   // sorted ids; AfmRow::student indexes this
    std::vector<std::string> kc_labels;
    std::vector<AfmRow> rows;            // StepLog order

    AfmData subset(std::span<const std::size_t> row_indices) const;
};

AfmData make_afm_data(const StepLog& log, const QMatrix& q, const OpportunityTable& opp);

struct Objective {
    double value = 0.0;
    AFMParams gradient;
};

/// Penalized negative log-likelihood
///   -sum[y ln p + (1-y) ln(1-p)] + lambda_theta/2 * |theta|^2
/// and its gradient. p is clamped to [1e-12, 1-1e-12] inside the logs.
Objective nll_and_gradient(const AFMParams& p, std::span<const AfmRow> rows, double lambda_theta);

/// Unpenalized log-likelihood (same clamping).
double log_likelihood(const AFMParams& p, std::span<const AfmRow> rows);

struct FitConfig {
    double lambda_theta = 0.1;
    int max_iter = 500;
    double tol = 1e-8;          // relative objective change
    std::uint64_t seed = 0;     // fold shuffling
    std::size_t parallelism = 1;
};

struct FitResult {
    AFMParams params;
    bool converged = false;
    int iterations = 0;
    double objective = 0.0;
    std::vector<double> trace;   // objective after each accepted step, starting at the initial point
};

/// Projected gradient descent from all-zero parameters: Barzilai-Borwein
/// trial step, backtracking to sufficient decrease, gamma clipped at 0.
FitResult fit(const AfmData& data, const FitConfig& cfg);
FitResult fit(const StepLog& log, const QMatrix& q, const OpportunityTable& opp, const FitConfig& cfg);

double rmse(std::span<const double> predictions, std::span<const double> labels);

// ─── Evaluation ───────────────────────────────────────────────

struct EvalReport {
    std::string model_name;
    std::size_t n_kcs = 0;
    std::size_t n_params = 0;   // students + 2 * KCs
    double train_rmse = 0.0;
    double cv_rmse = 0.0;       // pooled over all held-out predictions
    std::vector<double> fold_rmses;
    double log_likelihood = 0.0;
    double aic = 0.0;
    double bic = 0.0;
    std::size_t n_rows = 0;
    std::uint64_t fold_fingerprint = 0;   // identical across paired comparisons
    bool converged = true;                // every fit converged
};

/// Fold of every log row: each student's rows (students in id order) are
/// shuffled with `seed`, then dealt round-robin with one running counter.
std::vector<int> fold_assignment(const StepLog& log, int folds, std::uint64_t seed);
std::uint64_t fold_fingerprint(std::span<const int> folds);

EvalReport cross_validate(const StepLog& log, const KCModel& model, const QuestionBank& bank, int folds,
                          const FitConfig& cfg);

/// One report per model, sorted ascending by cv_rmse (stable).
std::vector<EvalReport> compare(const std::vector<KCModel>& models, const StepLog& log, const QuestionBank& bank,
                                int folds, const FitConfig& cfg);

/// `model,n_kcs,n_params,train_rmse,cv_rmse,log_likelihood,aic,bic,fold_rmse_1,...`
std::string format_eval_reports(const std::vector<EvalReport>& reports);
void save_eval_reports(const std::vector<EvalReport>& reports, const std::filesystem::path& path);

// ─── Simulation ───────────────────────────────────────────────

struct SimulationSpec {
    std::size_t n_students = 200;
    double theta_sd = 1.0;
    double beta_min = -1.0, beta_max = 1.0;
    double gamma_min = 0.0, gamma_max = 0.3;
    std::uint64_t seed = 0;
};

struct SimulatedResponses {
    StepLog log;
    AFMParams truth;   // students "s001".. in id order, KCs in label order
};

/// Every student answers every bank question once, in a random order, with
/// responses drawn from the AFM under `model`.
SimulatedResponses simulate_responses(const QuestionBank& bank, const KCModel& model, const SimulationSpec& spec);

/// Bank of `n` questions "q01".. with neutral stems.
QuestionBank synthetic_bank(std::size_t n);
/// Question i gets label "kc<i mod n_kcs>".
KCModel round_robin_model(const QuestionBank& bank, std::size_t n_kcs, std::string name = "true");
/// Same multiset of label sets, randomly reassigned across questions.
KCModel shuffle_labels(const KCModel& model, std::uint64_t seed, std::string name = "shuffled");

} // namespace kcforge
