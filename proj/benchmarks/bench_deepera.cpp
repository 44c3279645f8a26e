#include <benchmark/benchmark.h>

#include <random>

#include "deepera/embed.hpp"
#include "deepera/metrics.hpp"
#include "deepera/reranker.hpp"
#include "deepera/synthetic.hpp"
#include "deepera/vector_index.hpp"

using namespace deepera;

namespace {

EmbeddingVector random_vector(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> g;
    EmbeddingVector v;
    v.values.resize(dim);
    for (auto& x : v.values) x = g(rng);
    return v;
}

void BM_TopK(benchmark::State& state) {
    std::mt19937_64 rng(1);
    const auto n = static_cast<std::size_t>(state.range(0));
    VectorIndex index(64);
    for (std::size_t i = 0; i < n; ++i) index.add("p" + std::to_string(i), random_vector(rng, 64));
    const auto q = random_vector(rng, 64);
    for (auto _ : state) benchmark::DoNotOptimize(top_k(q, index, 30));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_TopK)->Arg(1000)->Arg(10000)->Arg(100000);

void BM_EmbedText(benchmark::State& state) {
    const std::string text =
        "The Yale Peabody mammal collection holds over 720 species from 21 orders, collected across five continents.";
    const EmbedProviderConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(embed_text(text, cfg));
}
BENCHMARK(BM_EmbedText);

void BM_TokenPrf(benchmark::State& state) {
    const std::string pred = "Approximately 82% of the collection was catalogued before 1950, about 720 species.";
    const std::string gold = "Over 720 mammal species, 82 percent of collection catalogued.";
    for (auto _ : state) benchmark::DoNotOptimize(token_prf(pred, gold));
}
BENCHMARK(BM_TokenPrf);

void BM_RankAndFilter(benchmark::State& state) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<ScoredPassage> scored;
    for (std::size_t i = 0; i < 30; ++i) {
        scored.push_back({Passage{"p" + std::to_string(i), "t", PassageLabel::natural, std::nullopt, std::nullopt},
                          u(rng), i + 1});
    }
    const PipelineConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(rank_and_filter(scored, cfg));
}
BENCHMARK(BM_RankAndFilter);

// One 30-passage query through intent, scoring, filtering and summarization
// under the mock provider.
void BM_MockRerank30(benchmark::State& state) {
    const auto scenario = make_separation_scenario(1, 9);
    const auto& inst = scenario.ssli[0];
    Gateway gateway(ProviderConfig{}, oracle_fixtures(scenario.ssli, ScoreProfile::faithful()));
    const PipelineConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(rerank(inst.question, inst.contexts, cfg, gateway));
}
BENCHMARK(BM_MockRerank30)->Unit(benchmark::kMicrosecond);

void BM_CosineBaseline30(benchmark::State& state) {
    const auto scenario = make_separation_scenario(1, 9);
    const auto& inst = scenario.ssli[0];
    const Embedder embedder;
    for (auto _ : state) benchmark::DoNotOptimize(baseline_cosine_rerank(inst.question, inst.contexts, embedder));
}
BENCHMARK(BM_CosineBaseline30)->Unit(benchmark::kMicrosecond);

void BM_RankingMetrics(benchmark::State& state) {
    const auto scenario = make_separation_scenario(200, 5);
    std::vector<RankingRecord> records;
    for (const auto& inst : scenario.ssli) records.push_back(make_ranking_record(inst, inst.contexts));
    for (auto _ : state) {
        benchmark::DoNotOptimize(hit_rate_at_k(records, 5));
        benchmark::DoNotOptimize(relative_position(records));
        benchmark::DoNotOptimize(noise_robustness(records, 5));
        benchmark::DoNotOptimize(context_discrimination(records));
    }
}
BENCHMARK(BM_RankingMetrics);

}  // namespace

BENCHMARK_MAIN();
