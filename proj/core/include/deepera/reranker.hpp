#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deepera/corpus.hpp"
#include "deepera/embed.hpp"
#include "deepera/gateway.hpp"

namespace deepera {

enum class IntentKind { definition, mechanism, comparison, causal, factual, functional_role };

std::string_view to_string(IntentKind k);
// Case-insensitive; spaces and hyphens count as underscores ("Functional role").
std::optional<IntentKind> parse_intent_kind(std::string_view s);

struct StructuredIntent {
    std::string topic;
    std::string entity_type;
    IntentKind intent = IntentKind::factual;
    std::string expected_answer_type;

    bool valid() const { return !topic.empty() && !entity_type.empty() && !expected_answer_type.empty(); }
    bool operator==(const StructuredIntent&) const = default;
};

// Used when intent recognition fails or is ablated.
StructuredIntent fallback_intent();

const SchemaSpec& intent_schema();

struct IntentResult {
    StructuredIntent intent;
    bool fallback = false;
    std::string detail;  // why the fallback fired
};

// Never throws on bad model output; auth and unreachable errors propagate.
IntentResult recognize_intent(std::string_view question, Gateway& gateway);

struct ScoreResult {
    double score = 0.0;
    std::optional<double> raw;  // first decimal literal in the reply
    bool parse_error = false;
    bool clamped = false;
    bool provider_error = false;
};

// First decimal literal in `content`, clamped to [0, 1]. No literal => 0 with parse_error.
ScoreResult parse_score(std::string_view content);

// Without an intent the raw-question template is used (ablation v1).
ScoreResult score_relevance(const std::optional<StructuredIntent>& intent, std::string_view question,
                            const Passage& passage, Gateway& gateway);

struct ScoredPassage {
    Passage passage;
    double score = 0.0;
    std::size_t rank = 1;
};

struct PipelineConfig {
    double tau = 0.8;
    std::size_t top_n = 30;
    std::size_t k_out = 5;
    bool ablate_intent = false;     // v1
    bool ablate_filter = false;     // v2
    bool ablate_summarize = false;  // v3

    void validate() const;  // throws ConfigError
};

struct FilterResult {
    std::vector<ScoredPassage> kept;
    bool fallback = false;  // nothing reached tau; the top passage was kept
};

// Stable sort by score (descending), threshold at tau unless ablate_filter,
// truncate to k_out, ranks 1..m.
FilterResult rank_and_filter(std::span<const ScoredPassage> scored, const PipelineConfig& cfg);

struct EvidenceSummary {
    std::string passage_id;
    std::string summary;
    std::size_t sentence_count = 0;
    bool truncated = false;
    bool fallback = false;  // model output was empty or failed; passage head used

    bool operator==(const EvidenceSummary&) const = default;
};

inline constexpr std::size_t kMaxSummarySentences = 2;

EvidenceSummary summarize_evidence(const Passage& passage, const StructuredIntent& intent,
                                   std::string_view question, Gateway& gateway);

// First `max_sentences` sentences of `text`, as a verbatim substring.
std::string head_sentences(std::string_view text, std::size_t max_sentences);

struct RerankResult {
    std::optional<IntentResult> intent;  // unset under v1
    std::vector<ScoredPassage> scored;   // input order, rank = retrieval position
    std::vector<ScoreResult> score_details;
    std::vector<ScoredPassage> ranked;  // kept passages in rank order
    std::vector<EvidenceSummary> evidence;
    bool filter_fallback = false;

    std::size_t score_parse_errors() const;
    std::size_t score_clamps() const;
    std::size_t summaries_truncated() const;
    std::size_t summary_fallbacks() const;
};

// Intent, per-passage scoring, ranking and filtering, summarization. Scoring
// and summarization calls are issued concurrently.
RerankResult rerank(std::string_view question, std::span<const Passage> passages,
                    const PipelineConfig& cfg, Gateway& gateway);

// Cosine similarity between question and passage embeddings, sorted
// descending (stable), unfiltered.
std::vector<ScoredPassage> baseline_cosine_rerank(std::string_view question,
                                                  std::span<const Passage> passages,
                                                  const Embedder& embedder);

}  // namespace deepera
