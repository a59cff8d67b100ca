#include "kcforge/afm.hpp"
#include "kcforge/errors.hpp"

#include <cstdio>
#include <numeric>
#include <random>

namespace kcforge {

namespace {

std::string padded(char prefix, std::size_t value, std::size_t total) {
    const int width = static_cast<int>(std::to_string(total).size());
    char buf[32];
    std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width < 2 ? 2 : width, value);
    return buf;
}

} // namespace

QuestionBank synthetic_bank(std::size_t n) {
    std::vector<Question> qs;
    for (std::size_t i = 1; i <= n; ++i) qs.push_back({padded('q', i, n), "Synthetic question " + std::to_string(i), {}, {}});
    return QuestionBank(std::move(qs));
}

KCModel round_robin_model(const QuestionBank& bank, std::size_t n_kcs, std::string name) {
    if (n_kcs == 0) throw InputError("need at least one KC");
    KCModel m;
    m.name = std::move(name);
    for (std::size_t i = 0; i < bank.size(); ++i) m.assignment[bank[i].id] = {"kc" + std::to_string(i % n_kcs)};
    return m;
}

KCModel shuffle_labels(const KCModel& model, std::uint64_t seed, std::string name) {
    std::vector<std::set<std::string>> sets;
    for (const auto& [_, labels] : model.assignment) sets.push_back(labels);
    std::mt19937_64 rng(seed);
    for (std::size_t i = sets.size(); i > 1; --i) std::swap(sets[i - 1], sets[rng() % i]);
    KCModel out;
    out.name = std::move(name);
    std::size_t i = 0;
    for (const auto& [qid, _] : model.assignment) out.assignment[qid] = sets[i++];
    return out;
}

SimulatedResponses simulate_responses(const QuestionBank& bank, const KCModel& model, const SimulationSpec& spec) {
    if (bank.empty() || spec.n_students == 0) throw InputError("simulation needs questions and students");
    const auto q = build_q_matrix(model, bank);
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> theta_dist(0.0, spec.theta_sd);
    std::uniform_real_distribution<double> beta_dist(spec.beta_min, spec.beta_max);
    std::uniform_real_distribution<double> gamma_dist(spec.gamma_min, spec.gamma_max);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    SimulatedResponses out;
    out.truth = AFMParams::zeros(spec.n_students, q.kc_labels.size());
    for (auto& b : out.truth.beta) b = beta_dist(rng);
    for (auto& g : out.truth.gamma) g = gamma_dist(rng);
    for (auto& t : out.truth.theta) t = theta_dist(rng);

    std::vector<StudentStep> rows;
    rows.reserve(spec.n_students * bank.size());
    std::vector<std::size_t> order(bank.size());
    std::vector<std::int64_t> seen(q.kc_labels.size());
    for (std::size_t s = 0; s < spec.n_students; ++s) {
        const std::string sid = padded('s', s + 1, spec.n_students);
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
        std::fill(seen.begin(), seen.end(), 0);
        std::int64_t position = 0;
        for (std::size_t j : order) {
            std::vector<KcOpportunity> features;
            for (std::size_t k : q.kcs_of[j]) features.push_back({k, seen[k]++});
            const double p = predict(out.truth, s, features);
            rows.push_back({sid, bank[j].id, position++, unit(rng) < p ? 1 : 0});
        }
    }
    out.log = StepLog(std::move(rows));
    return out;
}

} // namespace kcforge
