#include "kcforge/afm.hpp"
#include "kcforge/errors.hpp"
#include "kcforge/io.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <random>
#include <thread>

namespace kcforge {

std::vector<int> fold_assignment(const StepLog& log, int folds, std::uint64_t seed) {
    if (folds < 2) throw InputError("need at least 2 folds");
    if (log.size() < static_cast<std::size_t>(folds))
        throw InputError("step log has " + std::to_string(log.size()) + " rows, fewer than " + std::to_string(folds) +
                         " folds");
    std::mt19937_64 rng(seed);
    std::vector<int> fold(log.size(), -1);
    std::size_t dealt = 0;
    for (const auto& [student, indices] : log.student_index()) {
        std::vector<std::size_t> rows(indices);
        // Fisher-Yates; std::shuffle's draw sequence is implementation-defined.
        for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[rng() % i]);
        for (std::size_t r : rows) fold[r] = static_cast<int>(dealt++ % static_cast<std::size_t>(folds));
    }
    return fold;
}

std::uint64_t fold_fingerprint(std::span<const int> folds) {
    std::uint64_t h = 1469598103934665603ull;   // FNV-1a
    for (int f : folds) {
        for (int b = 0; b < 4; ++b) {
            h ^= static_cast<std::uint64_t>((static_cast<unsigned>(f) >> (8 * b)) & 0xFFu);
            h *= 1099511628211ull;
        }
    }
    return h;
}

EvalReport cross_validate(const StepLog& log, const KCModel& model, const QuestionBank& bank, int folds,
                          const FitConfig& cfg) {
    const auto fold = fold_assignment(log, folds, cfg.seed);
    const auto q = build_q_matrix(model, bank);
    const auto opp = opportunities(log, q);
    const auto data = make_afm_data(log, q, opp);

    std::vector<double> labels(log.size());
    for (std::size_t r = 0; r < log.size(); ++r) labels[r] = data.rows[r].y;

    std::vector<double> held_out(log.size(), 0.0);
    std::vector<double> fold_rmses(static_cast<std::size_t>(folds), 0.0);
    std::vector<char> fold_converged(static_cast<std::size_t>(folds), 1);

    auto run_fold = [&](int f) {
        std::vector<std::size_t> train, test;
        for (std::size_t r = 0; r < fold.size(); ++r) (fold[r] == f ? test : train).push_back(r);
        // Students or KCs absent from `train` get zero gradient throughout
        // and keep their zero initialization: theta = 0, beta = gamma = 0.
        const auto result = fit(data.subset(train), cfg);
        std::vector<double> pred, truth;
        for (std::size_t r : test) {
            const double p = predict(result.params, data.rows[r].student, data.rows[r].features);
            held_out[r] = p;
            pred.push_back(p);
            truth.push_back(labels[r]);
        }
        fold_rmses[static_cast<std::size_t>(f)] = rmse(pred, truth);
        fold_converged[static_cast<std::size_t>(f)] = result.converged;
    };

    const std::size_t workers = std::clamp<std::size_t>(cfg.parallelism, 1, static_cast<std::size_t>(folds));
    std::atomic<int> next{0};
    std::mutex err_mutex;
    std::exception_ptr err;
    auto loop = [&] {
        for (int f = next.fetch_add(1); f < folds; f = next.fetch_add(1)) {
            try {
                run_fold(f);
            } catch (...) {
                std::lock_guard lock(err_mutex);
                if (!err) err = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(loop);
    loop();
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);

    const auto full = fit(data, cfg);
    std::vector<double> train_pred(log.size());
    for (std::size_t r = 0; r < log.size(); ++r)
        train_pred[r] = predict(full.params, data.rows[r].student, data.rows[r].features);

    EvalReport report;
    report.model_name = model.name;
    report.n_kcs = q.kc_labels.size();
    report.n_params = data.students.size() + 2 * q.kc_labels.size();
    report.n_rows = log.size();
    report.train_rmse = rmse(train_pred, labels);
    report.cv_rmse = rmse(held_out, labels);
    report.fold_rmses = std::move(fold_rmses);
    report.log_likelihood = log_likelihood(full.params, data.rows);
    const double p = static_cast<double>(report.n_params);
    report.aic = 2.0 * p - 2.0 * report.log_likelihood;
    report.bic = p * std::log(static_cast<double>(report.n_rows)) - 2.0 * report.log_likelihood;
    report.fold_fingerprint = fold_fingerprint(fold);
    report.converged = full.converged &&
                       std::all_of(fold_converged.begin(), fold_converged.end(), [](char c) { return c != 0; });
    return report;
}

std::vector<EvalReport> compare(const std::vector<KCModel>& models, const StepLog& log, const QuestionBank& bank,
                                int folds, const FitConfig& cfg) {
    if (models.empty()) throw InputError("compare needs at least one KC model");
    for (const auto& m : models) {
        auto missing = uncovered_questions(m, bank);
        if (!missing.empty()) {
            std::string list;
            for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
            throw InputError("KC model '" + m.name + "' does not label: [" + list + "]");
        }
    }
    for (const auto& [qid, _] : log.question_index()) {
        if (!bank.contains(qid)) throw InputError("step log question '" + qid + "' is not in the bank");
    }
    std::vector<EvalReport> reports;
    reports.reserve(models.size());
    for (const auto& m : models) reports.push_back(cross_validate(log, m, bank, folds, cfg));
    for (const auto& r : reports) {
        if (r.fold_fingerprint != reports.front().fold_fingerprint)
            throw InvariantError("fold assignment differs between models");
    }
    std::stable_sort(reports.begin(), reports.end(),
                     [](const EvalReport& a, const EvalReport& b) { return a.cv_rmse < b.cv_rmse; });
    return reports;
}

std::string format_eval_reports(const std::vector<EvalReport>& reports) {
    const std::size_t folds = reports.empty() ? 0 : reports.front().fold_rmses.size();
    std::vector<std::string> header{"model", "n_kcs", "n_params", "train_rmse", "cv_rmse", "log_likelihood", "aic", "bic"};
    for (std::size_t f = 0; f < folds; ++f) header.push_back("fold_rmse_" + std::to_string(f + 1));
    std::string out = io::csv_join(header) + "\n";
    for (const auto& r : reports) {
        if (r.fold_rmses.size() != folds) throw InvariantError("reports disagree on the number of folds");
        std::vector<std::string> row{r.model_name,
                                     std::to_string(r.n_kcs),
                                     std::to_string(r.n_params),
                                     io::format_g17(r.train_rmse),
                                     io::format_g17(r.cv_rmse),
                                     io::format_g17(r.log_likelihood),
                                     io::format_g17(r.aic),
                                     io::format_g17(r.bic)};
        for (double v : r.fold_rmses) row.push_back(io::format_g17(v));
        out += io::csv_join(row) + "\n";
    }
    return out;
}

void save_eval_reports(const std::vector<EvalReport>& reports, const std::filesystem::path& path) {
    io::write_file_atomic(path, format_eval_reports(reports));
}

} // namespace kcforge
