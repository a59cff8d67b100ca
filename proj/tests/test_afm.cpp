#include "kcforge/afm.hpp"
#include "kcforge/errors.hpp"
#include "kcforge/io.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <set>

using namespace kcforge;

namespace {

QuestionBank bank3() {
    return QuestionBank({{"q1", "one", {}, {}}, {"q2", "two", {}, {}}, {"q3", "three", {}, {}}});
}

KCModel model_aab() { return KCModel{"m", {{"q1", {"A"}}, {"q2", {"A"}}, {"q3", {"B"}}}}; }

// Penalized NLL written out directly for one student and one KC.
double tiny_objective(double theta, double beta, double gamma, const std::vector<int>& y, double lambda) {
    double v = lambda / 2.0 * theta * theta;
    for (std::size_t t = 0; t < y.size(); ++t) {
        const double z = theta + beta + gamma * static_cast<double>(t);
        const double p = 1.0 / (1.0 + std::exp(-z));
        v -= y[t] ? std::log(p) : std::log(1.0 - p);
    }
    return v;
}

AfmData tiny_data(const std::vector<int>& y) {
    AfmData data;
    data.students = {"s"};
    data.kc_labels = {"k"};
    for (std::size_t t = 0; t < y.size(); ++t) data.rows.push_back({0, {{0, static_cast<std::int64_t>(t)}}, y[t]});
    return data;
}

} // namespace

TEST_CASE("Q-matrix examples") {
    auto q = build_q_matrix(model_aab(), bank3());
    CHECK(q.kc_labels == std::vector<std::string>{"A", "B"});
    CHECK(q.at(0, 0));
    CHECK_FALSE(q.at(0, 1));
    CHECK(q.at(1, 0));
    CHECK(q.at(2, 1));
    CHECK_FALSE(q.at(2, 0));

    KCModel multi{"m", {{"q1", {"A", "B"}}, {"q2", {"A"}}, {"q3", {"B"}}}};
    auto qm = build_q_matrix(multi, bank3());
    CHECK(qm.kcs_of[0] == std::vector<std::size_t>{0, 1});

    KCModel singleton{"m", {{"q1", {"x1"}}, {"q2", {"x2"}}, {"q3", {"x3"}}}};
    auto qs = build_q_matrix(singleton, bank3());
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 3; ++k) CHECK(qs.at(i, k) == (i == k));

    KCModel partial{"partial", {{"q1", {"A"}}}};
    CHECK_THROWS_AS(build_q_matrix(partial, bank3()), InputError);
}

TEST_CASE("opportunity counting") {
    auto q = build_q_matrix(model_aab(), bank3());
    SUBCASE("repeated KC") {
        StepLog log({{"s1", "q1", 1, 1}, {"s1", "q2", 2, 0}, {"s1", "q1", 3, 1}});
        auto opp = opportunities(log, q);
        CHECK(opp.rows[0] == std::vector<KcOpportunity>{{0, 0}});
        CHECK(opp.rows[1] == std::vector<KcOpportunity>{{0, 1}});
        CHECK(opp.rows[2] == std::vector<KcOpportunity>{{0, 2}});
    }
    SUBCASE("interleaved KCs") {
        StepLog log({{"s1", "q1", 1, 1}, {"s1", "q3", 2, 0}, {"s1", "q2", 3, 1}});
        auto opp = opportunities(log, q);
        CHECK(opp.rows[0] == std::vector<KcOpportunity>{{0, 0}});
        CHECK(opp.rows[1] == std::vector<KcOpportunity>{{1, 0}});
        CHECK(opp.rows[2] == std::vector<KcOpportunity>{{0, 1}});
    }
    SUBCASE("students are independent") {
        StepLog log({{"a", "q1", 1, 1}, {"b", "q1", 1, 0}, {"a", "q2", 2, 1}, {"b", "q2", 5, 1}});
        auto opp = opportunities(log, q);
        CHECK(opp.rows[0] == opp.rows[1]);
        CHECK(opp.rows[2] == opp.rows[3]);
    }
    SUBCASE("unknown question") {
        StepLog log({{"a", "q9", 1, 1}});
        CHECK_THROWS_AS(opportunities(log, q), InputError);
    }
}

TEST_CASE("predict") {
    auto zero = AFMParams::zeros(1, 1);
    const std::vector<KcOpportunity> f{{0, 3}};
    CHECK(predict(zero, 0, f) == 0.5);

    AFMParams p{{1.0}, {0.5}, {0.25}};
    const std::vector<KcOpportunity> t2{{0, 2}};
    CHECK(std::abs(predict(p, 0, t2) - 0.8807970779778823) <= 1e-15);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-2, 2), g(0, 1);
    for (int trial = 0; trial < 200; ++trial) {
        AFMParams r{{u(rng)}, {u(rng), u(rng)}, {g(rng), g(rng)}};
        double prev = 0.0;
        for (std::int64_t t = 0; t < 20; ++t) {
            const std::vector<KcOpportunity> feat{{0, t}, {1, 3}};
            double cur = predict(r, 0, feat);
            CHECK(cur >= prev);
            CHECK(cur > 0.0);
            CHECK(cur < 1.0);
            prev = cur;
        }
    }
    CHECK(sigmoid(-800.0) >= 0.0);
    CHECK(sigmoid(800.0) == 1.0);
}

TEST_CASE("objective at the origin") {
    auto data = tiny_data({1});
    auto obj = nll_and_gradient(AFMParams::zeros(1, 1), data.rows, 0.1);
    CHECK(std::abs(obj.value - std::log(2.0)) <= 1e-15);
    CHECK(obj.gradient.theta[0] == -0.5);
    CHECK(obj.gradient.beta[0] == -0.5);
    CHECK(obj.gradient.gamma[0] == 0.0);
}

TEST_CASE("objective matches the closed form on one student and one KC") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-2, 2);
    const std::vector<int> y{0, 1, 0, 1, 1};
    auto data = tiny_data(y);
    for (int trial = 0; trial < 50; ++trial) {
        AFMParams p{{u(rng)}, {u(rng)}, {std::abs(u(rng))}};
        CHECK(nll_and_gradient(p, data.rows, 0.3).value ==
              doctest::Approx(tiny_objective(p.theta[0], p.beta[0], p.gamma[0], y, 0.3)).epsilon(1e-13));
    }
}

TEST_CASE("gradient agrees with central differences") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        auto inst = testing::random_afm_instance(rng, 10, 5, 20);
        CHECK(testing::gradient_check(inst.params, inst.data, 0.1, 1e-5) <= 1e-4);
    }
}

TEST_CASE("duplicating every row doubles objective and gradient") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        auto inst = testing::random_afm_instance(rng, 8, 4, 30);
        auto doubled = inst.data.rows;
        doubled.insert(doubled.end(), inst.data.rows.begin(), inst.data.rows.end());
        auto once = nll_and_gradient(inst.params, inst.data.rows, 0.0);
        auto twice = nll_and_gradient(inst.params, doubled, 0.0);
        CHECK(twice.value == doctest::Approx(2 * once.value).epsilon(1e-13));
        for (std::size_t i = 0; i < once.gradient.theta.size(); ++i)
            CHECK(twice.gradient.theta[i] == doctest::Approx(2 * once.gradient.theta[i]).epsilon(1e-12).scale(1));
        for (std::size_t k = 0; k < once.gradient.beta.size(); ++k) {
            CHECK(twice.gradient.beta[k] == doctest::Approx(2 * once.gradient.beta[k]).epsilon(1e-12).scale(1));
            CHECK(twice.gradient.gamma[k] == doctest::Approx(2 * once.gradient.gamma[k]).epsilon(1e-12).scale(1));
        }
    }
}

TEST_CASE("fit: all-correct student") {
    auto data = tiny_data(std::vector<int>(10, 1));
    auto res = fit(data, FitConfig{});
    std::vector<double> preds, labels;
    for (const auto& r : data.rows) {
        preds.push_back(predict(res.params, r.student, r.features));
        labels.push_back(1.0);
        CHECK(preds.back() >= 0.9);
    }
    CHECK(rmse(preds, labels) <= 0.1);
    CHECK(std::isfinite(res.params.theta[0]));
}

TEST_CASE("fit: objective trace is monotone and gamma stays nonnegative") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 25; ++trial) {
        auto inst = testing::random_afm_instance(rng, 15, 6, 200);
        auto res = fit(inst.data, FitConfig{});
        REQUIRE(!res.trace.empty());
        for (std::size_t i = 1; i < res.trace.size(); ++i) CHECK(res.trace[i] <= res.trace[i - 1]);
        for (double g : res.params.gamma) CHECK(g >= 0.0);
        CHECK(res.objective == res.trace.back());
        CHECK(res.objective <= nll_and_gradient(AFMParams::zeros(inst.data.students.size(), inst.data.kc_labels.size()),
                                                inst.data.rows, 0.1).value);
    }
}

TEST_CASE("fit reaches the grid-search minimum on a three-parameter instance") {
    for (const auto& y : {std::vector<int>{0, 1, 0, 1}, std::vector<int>{1, 0, 1, 1}, std::vector<int>{1, 0, 0, 1}}) {
        double best = std::numeric_limits<double>::infinity();
        for (int a = -60; a <= 60; ++a)
            for (int b = -60; b <= 60; ++b)
                for (int c = 0; c <= 60; ++c)
                    best = std::min(best, tiny_objective(a * 0.05, b * 0.05, c * 0.05, y, 0.1));
        auto res = fit(tiny_data(y), FitConfig{});
        const auto& p = res.params;
        CHECK(res.converged);
        CHECK(p.gamma[0] >= 0.0);
        CHECK(tiny_objective(p.theta[0], p.beta[0], p.gamma[0], y, 0.1) <= best + 1e-2);
    }
}

TEST_CASE("fit is deterministic") {
    std::mt19937_64 rng(3);
    auto inst = testing::random_afm_instance(rng, 20, 5, 150);
    auto a = fit(inst.data, FitConfig{});
    auto b = fit(inst.data, FitConfig{});
    CHECK(a.params == b.params);
    CHECK(a.trace == b.trace);
}

TEST_CASE("non-convergence is reported, not thrown") {
    std::mt19937_64 rng(3);
    auto inst = testing::random_afm_instance(rng, 20, 5, 150);
    FitConfig cfg;
    cfg.max_iter = 1;
    auto res = fit(inst.data, cfg);
    CHECK_FALSE(res.converged);
    CHECK(res.iterations == 1);
}

TEST_CASE("rmse") {
    const std::vector<double> p{0.8, 0.6, 0.3, 0.9}, y{1, 1, 0, 1};
    CHECK(std::abs(rmse(p, y) - std::sqrt(0.075)) <= 1e-12);
    CHECK(std::abs(rmse(p, y) - 0.2738612787525830) <= 1e-12);
    CHECK(rmse(y, y) == 0.0);
    const std::vector<double> half(4, 0.5), bal{0, 1, 0, 1};
    CHECK(rmse(half, bal) == 0.5);
    CHECK_THROWS_AS(rmse(std::vector<double>{}, std::vector<double>{}), InputError);
    CHECK_THROWS_AS(rmse(p, std::vector<double>{0.5}), InputError);
}

// ─── Cross-validation and comparison ──────────────────────────

namespace {

StepLog six_row_log() {
    return StepLog({{"a", "q1", 1, 1}, {"a", "q2", 2, 1}, {"a", "q3", 3, 0},
                    {"b", "q1", 1, 0}, {"b", "q3", 2, 1}, {"b", "q2", 3, 1}});
}

} // namespace

TEST_CASE("fold assignment is stratified and seeded") {
    auto log = six_row_log();
    auto f = fold_assignment(log, 3, 11);
    REQUIRE(f.size() == 6);
    std::map<std::string, std::vector<int>> per;
    for (std::size_t i = 0; i < log.size(); ++i) per[log.rows()[i].student_id].push_back(f[i]);
    for (auto& [_, folds] : per) {
        std::sort(folds.begin(), folds.end());
        CHECK(folds == std::vector<int>{0, 1, 2});
    }
    CHECK(fold_assignment(log, 3, 11) == f);
    CHECK(fold_fingerprint(f) == fold_fingerprint(fold_assignment(log, 3, 11)));

    // Across seeds the assignment changes at least sometimes.
    bool differs = false;
    for (std::uint64_t s = 0; s < 20 && !differs; ++s) differs = fold_assignment(log, 3, s) != f;
    CHECK(differs);
    CHECK_THROWS_AS(fold_assignment(log, 1, 0), InputError);
    CHECK_THROWS_AS(fold_assignment(log, 7, 0), InputError);
}

TEST_CASE("leave-one-out on six rows") {
    auto report = cross_validate(six_row_log(), model_aab(), bank3(), 6, FitConfig{});
    CHECK(report.cv_rmse >= 0.0);
    CHECK(report.cv_rmse <= 1.0);
    CHECK(report.fold_rmses.size() == 6);
    CHECK(report.n_rows == 6);
    CHECK(report.n_kcs == 2);
    CHECK(report.n_params == 2 + 2 * 2);
}

TEST_CASE("cross-validation report is reproducible and self-consistent") {
    SimulationSpec spec;
    spec.n_students = 30;
    spec.seed = 4;
    auto bank = synthetic_bank(10);
    auto model = round_robin_model(bank, 3);
    auto sim = simulate_responses(bank, model, spec);
    FitConfig cfg;
    cfg.seed = 8;
    auto a = cross_validate(sim.log, model, bank, 5, cfg);
    auto b = cross_validate(sim.log, model, bank, 5, cfg);
    CHECK(format_eval_reports({a}) == format_eval_reports({b}));
    CHECK(a.fold_fingerprint == b.fold_fingerprint);

    const double p = static_cast<double>(a.n_params), n = static_cast<double>(a.n_rows);
    CHECK(a.n_params == 30 + 2 * 3);
    CHECK(a.aic == 2 * p - 2 * a.log_likelihood);
    CHECK(a.bic == p * std::log(n) - 2 * a.log_likelihood);
    CHECK(a.train_rmse <= a.cv_rmse);

    cfg.parallelism = 3;
    auto par = cross_validate(sim.log, model, bank, 5, cfg);
    CHECK(format_eval_reports({par}) == format_eval_reports({a}));
}

TEST_CASE("unseen student in a fold falls back to theta = 0") {
    // Student "z" has a single row, so its fold trains without them.
    StepLog log({{"a", "q1", 1, 1}, {"a", "q2", 2, 1}, {"a", "q3", 3, 0}, {"a", "q1", 4, 1},
                 {"b", "q1", 1, 0}, {"b", "q3", 2, 1}, {"b", "q2", 3, 1}, {"b", "q1", 4, 0},
                 {"z", "q2", 1, 1}});
    auto report = cross_validate(log, model_aab(), bank3(), 2, FitConfig{});
    CHECK(std::isfinite(report.cv_rmse));
}

TEST_CASE("compare: duplicates, coverage and fold pairing") {
    auto log = six_row_log();
    auto m1 = model_aab();
    auto m2 = m1;
    m2.name = "copy";
    auto reports = compare({m1, m2}, log, bank3(), 3, FitConfig{});
    REQUIRE(reports.size() == 2);
    CHECK(reports[0].model_name == "m");
    CHECK(reports[1].model_name == "copy");
    CHECK(reports[0].cv_rmse == reports[1].cv_rmse);
    CHECK(reports[0].fold_fingerprint == reports[1].fold_fingerprint);

    KCModel partial{"partial", {{"q1", {"A"}}, {"q2", {"A"}}}};
    try {
        compare({m1, partial}, log, bank3(), 3, FitConfig{});
        FAIL("expected InputError");
    } catch (const InputError& e) {
        const std::string what = e.what();
        CHECK(what.find("partial") != std::string::npos);
        CHECK(what.find("q3") != std::string::npos);
    }
    CHECK_THROWS_AS(compare({}, log, bank3(), 3, FitConfig{}), InputError);
}

TEST_CASE("report CSV layout") {
    auto reports = compare({model_aab()}, six_row_log(), bank3(), 3, FitConfig{});
    auto text = format_eval_reports(reports);
    auto records = io::csv_parse(text);
    REQUIRE(records.size() == 2);
    CHECK(records[0].fields == std::vector<std::string>{"model", "n_kcs", "n_params", "train_rmse", "cv_rmse",
                                                        "log_likelihood", "aic", "bic", "fold_rmse_1", "fold_rmse_2",
                                                        "fold_rmse_3"});
    CHECK(records[1].fields[0] == "m");
    CHECK(io::parse_double(records[1].fields[4], "cv") == reports[0].cv_rmse);
}

TEST_CASE("simulation: true KC model beats shuffled labels") {
    auto bank = synthetic_bank(50);
    auto truth = round_robin_model(bank, 5);
    int wins = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        SimulationSpec spec;
        spec.seed = seed;
        auto sim = simulate_responses(bank, truth, spec);
        FitConfig cfg;
        cfg.seed = seed;
        auto reports = compare({truth, shuffle_labels(truth, seed)}, sim.log, bank, 10, cfg);
        wins += reports[0].model_name == "true" && reports[0].cv_rmse < reports[1].cv_rmse;
    }
    CHECK(wins >= 2);
}

TEST_CASE("simulation helpers") {
    auto bank = synthetic_bank(12);
    CHECK(bank.size() == 12);
    CHECK(bank[0].id == "q01");
    auto m = round_robin_model(bank, 5);
    CHECK(m.n_kcs() == 5);
    CHECK(m.assignment.at("q01") == std::set<std::string>{"kc0"});
    CHECK(m.assignment.at("q06") == std::set<std::string>{"kc0"});
    auto s = shuffle_labels(m, 3);
    std::map<std::string, int> before, after;
    for (auto& [_, ls] : m.assignment) before[*ls.begin()]++;
    for (auto& [_, ls] : s.assignment) after[*ls.begin()]++;
    CHECK(before == after);

    SimulationSpec spec;
    spec.n_students = 7;
    auto sim = simulate_responses(bank, m, spec);
    CHECK(sim.log.size() == 7 * 12);
    CHECK(sim.truth.theta.size() == 7);
    for (double g : sim.truth.gamma) CHECK((g >= 0.0 && g <= 0.3));
}
