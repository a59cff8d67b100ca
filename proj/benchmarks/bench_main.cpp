#include "kcforge/afm.hpp"
#include "kcforge/clustering.hpp"
#include "kcforge/congruity.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace kcforge;

namespace {

std::string random_words(std::mt19937_64& rng, std::size_t words) {
    static const char* kAlphabet = "abcdefghijklmnop";
    std::string out;
    for (std::size_t w = 0; w < words; ++w) {
        if (w) out += ' ';
        for (std::size_t c = 3 + rng() % 5; c > 0; --c) out += kAlphabet[rng() % 16];
    }
    return out;
}

void BM_CongruityMatrixMock(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(1);
    BigramMockScorer mock(random_words(rng, 5000));
    std::vector<Question> qs;
    for (std::size_t i = 0; i < n; ++i)
        qs.push_back({"q" + std::to_string(i), random_words(rng, 30), {random_words(rng, 3), random_words(rng, 3)}, {}});
    QuestionBank bank(qs);
    for (auto _ : state) benchmark::DoNotOptimize(congruity_matrix(bank, mock));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}
BENCHMARK(BM_CongruityMatrixMock)->Arg(20)->Arg(60)->Unit(benchmark::kMillisecond);

void BM_Agglomerate(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::string> ids;
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        ids.push_back("q" + std::to_string(i));
        for (std::size_t j = i + 1; j < n; ++j) v[i * n + j] = v[j * n + i] = u(rng);
    }
    DistanceMatrix d(ids, v);
    for (auto _ : state) benchmark::DoNotOptimize(agglomerate(d));
}
BENCHMARK(BM_Agglomerate)->Arg(100)->Arg(630)->Unit(benchmark::kMillisecond);

void BM_AfmFit(benchmark::State& state) {
    auto bank = synthetic_bank(50);
    auto model = round_robin_model(bank, 5);
    SimulationSpec spec;
    spec.n_students = static_cast<std::size_t>(state.range(0));
    spec.seed = 3;
    auto sim = simulate_responses(bank, model, spec);
    auto q = build_q_matrix(model, bank);
    auto data = make_afm_data(sim.log, q, opportunities(sim.log, q));
    for (auto _ : state) benchmark::DoNotOptimize(fit(data, FitConfig{}));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.rows.size()));
}
BENCHMARK(BM_AfmFit)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

} // namespace
BENCHMARK_MAIN();
