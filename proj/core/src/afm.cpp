#include "kcforge/afm.hpp"

#include "kcforge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace kcforge {

namespace {

constexpr double kClamp = 1e-12;

double clamped_log_term(double p, int y) {
    p = std::clamp(p, kClamp, 1.0 - kClamp);
    return y ? std::log(p) : std::log1p(-p);
}

// Flat layout: [theta (S) | beta (K) | gamma (K)].
struct Layout {
    std::size_t students;
    std::size_t kcs;
    std::size_t size() const { return students + 2 * kcs; }
    std::size_t beta(std::size_t k) const { return students + k; }
    std::size_t gamma(std::size_t k) const { return students + kcs + k; }
};

double linear_term(const Layout& L, const std::vector<double>& x, const AfmRow& row) {
    double z = x[row.student];
    for (const auto& f : row.features) z += x[L.beta(f.kc)] + x[L.gamma(f.kc)] * static_cast<double>(f.t);
    return z;
}

// Objective value, and the gradient into `grad` when non-null.
double evaluate(const Layout& L, const std::vector<double>& x, std::span<const AfmRow> rows, double lambda,
                std::vector<double>* grad) {
    if (grad) grad->assign(L.size(), 0.0);
    double nll = 0.0;
    for (const auto& row : rows) {
        const double p = sigmoid(linear_term(L, x, row));
        nll -= clamped_log_term(p, row.y);
        if (!grad) continue;
        const double r = p - static_cast<double>(row.y);
        auto& g = *grad;
        g[row.student] += r;
        for (const auto& f : row.features) {
            g[L.beta(f.kc)] += r;
            g[L.gamma(f.kc)] += r * static_cast<double>(f.t);
        }
    }
    double penalty = 0.0;
    for (std::size_t i = 0; i < L.students; ++i) {
        penalty += x[i] * x[i];
        if (grad) (*grad)[i] += lambda * x[i];
    }
    return nll + 0.5 * lambda * penalty;
}

std::vector<double> flatten(const AFMParams& p) {
    std::vector<double> x;
    x.reserve(p.theta.size() + 2 * p.beta.size());
    x.insert(x.end(), p.theta.begin(), p.theta.end());
    x.insert(x.end(), p.beta.begin(), p.beta.end());
    x.insert(x.end(), p.gamma.begin(), p.gamma.end());
    return x;
}

AFMParams unflatten(const Layout& L, const std::vector<double>& x) {
    AFMParams p;
    p.theta.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(L.students));
    p.beta.assign(x.begin() + static_cast<std::ptrdiff_t>(L.beta(0)), x.begin() + static_cast<std::ptrdiff_t>(L.gamma(0)));
    p.gamma.assign(x.begin() + static_cast<std::ptrdiff_t>(L.gamma(0)), x.end());
    return p;
}

} // namespace

// ─── Q-matrix and opportunities ───────────────────────────────

bool QMatrix::at(std::size_t question, std::size_t kc) const {
    const auto& ks = kcs_of.at(question);
    return std::binary_search(ks.begin(), ks.end(), kc);
}

std::size_t QMatrix::row(const std::string& question_id) const {
    auto it = row_of.find(question_id);
    if (it == row_of.end()) throw InputError("question '" + question_id + "' is not in the Q-matrix");
    return it->second;
}

QMatrix build_q_matrix(const KCModel& model, const QuestionBank& bank) {
    auto missing = uncovered_questions(model, bank);
    if (!missing.empty())
        throw InputError("KC model '" + model.name + "' does not label question '" + missing.front() + "'");
    QMatrix q;
    q.kc_labels = model.labels();
    std::map<std::string, std::size_t> column;
    for (std::size_t k = 0; k < q.kc_labels.size(); ++k) column[q.kc_labels[k]] = k;
    for (const auto& question : bank) {
        q.row_of[question.id] = q.question_ids.size();
        q.question_ids.push_back(question.id);
        std::vector<std::size_t> ks;
        for (const auto& label : model.assignment.at(question.id)) ks.push_back(column.at(label));
        std::sort(ks.begin(), ks.end());
        q.kcs_of.push_back(std::move(ks));
    }
    return q;
}

OpportunityTable opportunities(const StepLog& log, const QMatrix& q) {
    OpportunityTable table;
    table.rows.resize(log.size());
    std::vector<std::int64_t> seen(q.kc_labels.size(), 0);
    for (const auto& [student, indices] : log.student_index()) {
        std::fill(seen.begin(), seen.end(), 0);
        // Row indices are in file order, which is chronological per student.
        for (std::size_t r : indices) {
            const auto& ks = q.kcs_of[q.row(log[r].question_id)];
            auto& out = table.rows[r];
            out.reserve(ks.size());
            for (std::size_t k : ks) out.push_back({k, seen[k]++});
        }
    }
    return table;
}

// ─── Model ────────────────────────────────────────────────────

AFMParams AFMParams::zeros(std::size_t n_students, std::size_t n_kcs) {
    return {std::vector<double>(n_students, 0.0), std::vector<double>(n_kcs, 0.0), std::vector<double>(n_kcs, 0.0)};
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double predict(const AFMParams& p, std::size_t student, std::span<const KcOpportunity> features) {
    double z = p.theta.at(student);
    for (const auto& f : features) z += p.beta.at(f.kc) + p.gamma.at(f.kc) * static_cast<double>(f.t);
    return sigmoid(z);
}

AfmData AfmData::subset(std::span<const std::size_t> row_indices) const {
    AfmData out;
    out.students = students;
    out.kc_labels = kc_labels;
    out.rows.reserve(row_indices.size());
    for (std::size_t r : row_indices) out.rows.push_back(rows.at(r));
    return out;
}

AfmData make_afm_data(const StepLog& log, const QMatrix& q, const OpportunityTable& opp) {
    if (opp.rows.size() != log.size()) throw InputError("opportunity table does not match the step log");
    AfmData data;
    data.kc_labels = q.kc_labels;
    std::map<std::string, std::size_t> student_col;
    for (const auto& [id, _] : log.student_index()) {
        student_col[id] = data.students.size();
        data.students.push_back(id);
    }
    data.rows.reserve(log.size());
    for (std::size_t r = 0; r < log.size(); ++r)
        data.rows.push_back({student_col.at(log[r].student_id), opp.rows[r], log[r].correct});
    return data;
}

Objective nll_and_gradient(const AFMParams& p, std::span<const AfmRow> rows, double lambda_theta) {
    const Layout L{p.n_students(), p.n_kcs()};
    std::vector<double> g;
    Objective out;
    out.value = evaluate(L, flatten(p), rows, lambda_theta, &g);
    out.gradient = unflatten(L, g);
    return out;
}

double log_likelihood(const AFMParams& p, std::span<const AfmRow> rows) {
    double ll = 0.0;
    for (const auto& row : rows) ll += clamped_log_term(predict(p, row.student, row.features), row.y);
    return ll;
}

FitResult fit(const AfmData& data, const FitConfig& cfg) {
    if (data.rows.empty()) throw InputError("cannot fit AFM on an empty log");
    if (cfg.lambda_theta < 0 || cfg.max_iter < 1 || !(cfg.tol > 0))
        throw InputError("invalid fit configuration");

    const Layout L{data.students.size(), data.kc_labels.size()};
    const std::span<const AfmRow> rows(data.rows);

    // Diagonal scaling: bound on each Hessian diagonal entry (sigma' <= 1/4).
    // Without it gamma, whose features grow with t, dominates the step size.
    std::vector<double> scale(L.size(), 0.0);
    for (const auto& row : rows) {
        scale[row.student] += 0.25;
        for (const auto& f : row.features) {
            const double t = static_cast<double>(f.t);
            scale[L.beta(f.kc)] += 0.25;
            scale[L.gamma(f.kc)] += 0.25 * t * t;
        }
    }
    for (std::size_t i = 0; i < L.students; ++i) scale[i] += cfg.lambda_theta;
    for (double& v : scale) v = std::max(v, 1e-8);

    std::vector<double> x(L.size(), 0.0), g, x_new(L.size()), g_new;
    double f = evaluate(L, x, rows, cfg.lambda_theta, &g);

    FitResult result;
    result.trace.push_back(f);
    double step = 1.0;

    auto project = [&](std::vector<double>& v) {
        for (std::size_t k = 0; k < L.kcs; ++k) v[L.gamma(k)] = std::max(0.0, v[L.gamma(k)]);
    };

    for (int iter = 1; iter <= cfg.max_iter; ++iter) {
        result.iterations = iter;
        double f_new = 0.0;
        double decrease = 0.0;
        bool accepted = false;
        for (int backtrack = 0; backtrack < 60; ++backtrack) {
            for (std::size_t i = 0; i < x.size(); ++i) x_new[i] = x[i] - step * g[i] / scale[i];
            project(x_new);
            decrease = 0.0;   // g . (x_new - x) <= 0 for a projected step
            for (std::size_t i = 0; i < x.size(); ++i) decrease += g[i] * (x_new[i] - x[i]);
            if (decrease == 0.0) break;
            f_new = evaluate(L, x_new, rows, cfg.lambda_theta, &g_new);
            if (f_new <= f + 1e-4 * decrease) { accepted = true; break; }
            step *= 0.5;
        }
        if (!accepted) {
            // No descent direction left at working precision: stationary.
            result.converged = decrease == 0.0 || step < 1e-15;
            break;
        }

        // Barzilai-Borwein step in the scaled metric.
        double ss = 0.0, sy = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double s = x_new[i] - x[i];
            ss += scale[i] * s * s;
            sy += s * (g_new[i] - g[i]);
        }
        const double rel = (f - f_new) / std::max(1.0, std::abs(f));
        x.swap(x_new);
        g.swap(g_new);
        f = f_new;
        result.trace.push_back(f);
        step = sy > 0.0 ? std::clamp(ss / sy, 1e-10, 1e10) : std::min(step * 2.0, 1e10);
        if (rel < cfg.tol) {
            result.converged = true;
            break;
        }
    }
    result.params = unflatten(L, x);
    result.objective = f;
    return result;
}

FitResult fit(const StepLog& log, const QMatrix& q, const OpportunityTable& opp, const FitConfig& cfg) {
    return fit(make_afm_data(log, q, opp), cfg);
}

double rmse(std::span<const double> predictions, std::span<const double> labels) {
    if (predictions.empty()) throw InputError("rmse of an empty sample");
    if (predictions.size() != labels.size()) throw InputError("rmse: length mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double e = labels[i] - predictions[i];
        sum += e * e;
    }
    return std::sqrt(sum / static_cast<double>(predictions.size()));
}

} // namespace kcforge
