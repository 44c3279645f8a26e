#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deepera/corpus.hpp"
#include "deepera/gateway.hpp"

namespace deepera {

// Deterministic demo and test data. Everything here is a pure function of its
// arguments and seed.

struct SyntheticCorpus {
    std::vector<Document> docs;
    FixtureBook fixtures;  // extract / qa / guidance / distractor replies for the forge
};

// `docs` abstracts of six sentences each, grouped by topic. Every fourth
// question's first distractor batch contains one passage that leaks the
// answer, so the forge's regeneration path is exercised.
SyntheticCorpus make_synthetic_corpus(std::size_t docs, std::uint64_t seed,
                                      std::size_t max_chunk_chars = 600,
                                      std::size_t distractor_count = 6);

struct SeparationScenario {
    std::vector<QAInstance> ssli;  // golden + naturals + tail distractors
    std::vector<QAInstance> base;  // same pools with naturals in the distractor slots
};

// Distractors restate the question nearly verbatim while the golden passage
// answers it in different words, so embedding similarity prefers the
// distractors.
SeparationScenario make_separation_scenario(std::size_t instances, std::uint64_t seed,
                                            std::size_t pool_size = 30, std::size_t distractors = 6);

// Relevance score returned by the oracle for each passage label.
struct ScoreProfile {
    double golden = 0.95;
    double natural = 0.5;
    double distractor = 0.05;
    double distractor_step = 0.0;  // added per distractor position within an instance

    static ScoreProfile faithful() { return {0.95, 0.5, 0.05, 0.0}; }
    // Distractors outscore naturals but stay below the default threshold.
    static ScoreProfile adversarial() { return {0.95, 0.3, 0.6, 0.02}; }
};

// Label-driven replies for intent, score, summarize, generate and judge. The
// generator returns the golden answer exactly when the golden passage's
// summary is in its evidence; the judge returns 5 for the golden answer and
// 1 otherwise.
FixtureBook oracle_fixtures(std::span<const QAInstance> instances, const ScoreProfile& profile);

// Summary the oracle returns for a passage: its first two sentences.
std::string oracle_summary(const Passage& p);

// Answer the oracle generator gives when the golden evidence is missing.
inline constexpr std::string_view kOracleWrongAnswer = "The evidence does not settle the question.";

}  // namespace deepera
