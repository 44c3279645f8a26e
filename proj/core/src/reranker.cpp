#include "deepera/reranker.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <regex>

#include "deepera/parallel.hpp"
#include "deepera/prompts.hpp"
#include "deepera/text.hpp"

namespace deepera {

namespace {

std::string field_string(const FieldMap& fields, const std::string& name) {
    auto it = fields.find(name);
    if (it == fields.end() || !it->second.is_string()) return {};
    return std::string(trim(it->second.get<std::string>()));
}

std::map<std::string, std::string> intent_values(const StructuredIntent& intent, std::string_view question,
                                                 const Passage& passage) {
    return {{"query", std::string(question)},
            {"topic", intent.topic},
            {"entity_type", intent.entity_type},
            {"intent", std::string(to_string(intent.intent))},
            {"expected_answer_type", intent.expected_answer_type},
            {"passage_id", passage.id},
            {"passage", passage.text}};
}

std::size_t workers_for(const Gateway& gateway) {
    return static_cast<std::size_t>(std::max(1, gateway.config().concurrency_limit));
}

}  // namespace

std::string_view to_string(IntentKind k) {
    switch (k) {
        case IntentKind::definition: return "definition";
        case IntentKind::mechanism: return "mechanism";
        case IntentKind::comparison: return "comparison";
        case IntentKind::causal: return "causal";
        case IntentKind::factual: return "factual";
        case IntentKind::functional_role: return "functional_role";
    }
    return "factual";
}

std::optional<IntentKind> parse_intent_kind(std::string_view s) {
    std::string t;
    for (char c : trim(s)) {
        if (c == ' ' || c == '-') {
            t.push_back('_');
        } else {
            t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (t == "definition") return IntentKind::definition;
    if (t == "mechanism") return IntentKind::mechanism;
    if (t == "comparison") return IntentKind::comparison;
    if (t == "causal" || t == "causal_inference") return IntentKind::causal;
    if (t == "factual") return IntentKind::factual;
    if (t == "functional_role") return IntentKind::functional_role;
    return std::nullopt;
}

StructuredIntent fallback_intent() { return StructuredIntent{"", "", IntentKind::factual, ""}; }

const SchemaSpec& intent_schema() {
    static const SchemaSpec s{{{"topic", FieldKind::string, {}},
                               {"entity_type", FieldKind::string, {}},
                               {"intent", FieldKind::string, {}},
                               {"expected_answer_type", FieldKind::string, {}}}};
    return s;
}

IntentResult recognize_intent(std::string_view question, Gateway& gateway) {
    if (trim(question).empty()) throw std::invalid_argument("recognize_intent: empty question");
    ChatRequest req;
    req.tag = "intent";
    req.response_schema = intent_schema();
    req.messages = prompt("intent").render({{"query", std::string(question)}});

    IntentResult out{fallback_intent(), true, {}};
    FieldMap fields;
    try {
        fields = gateway.complete_structured(req, intent_schema());
    } catch (const SchemaParseError& e) {
        out.detail = e.what();
        return out;
    } catch (const ExhaustedRetries& e) {
        out.detail = e.what();
        return out;
    } catch (const ProviderRejected& e) {
        out.detail = e.what();
        return out;
    }

    auto kind = parse_intent_kind(field_string(fields, "intent"));
    if (!kind) {
        out.detail = "intent outside the category set: " + fields.at("intent").dump();
        return out;
    }
    StructuredIntent intent{field_string(fields, "topic"), field_string(fields, "entity_type"), *kind,
                            field_string(fields, "expected_answer_type")};
    if (!intent.valid()) {
        out.detail = "intent has an empty field";
        return out;
    }
    return IntentResult{std::move(intent), false, {}};
}

ScoreResult parse_score(std::string_view content) {
    static const std::regex number(R"([-+]?(?:\d+(?:\.\d*)?|\.\d+))");
    std::match_results<std::string_view::const_iterator> m;
    ScoreResult out;
    if (!std::regex_search(content.begin(), content.end(), m, number)) {
        out.parse_error = true;
        return out;
    }
    std::string literal = m.str();
    if (!literal.empty() && literal.front() == '+') literal.erase(0, 1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(literal.data(), literal.data() + literal.size(), value);
    if (ec != std::errc() || ptr != literal.data() + literal.size()) {
        out.parse_error = true;
        return out;
    }
    out.raw = value;
    out.score = std::clamp(value, 0.0, 1.0);
    out.clamped = out.score != value;
    return out;
}

ScoreResult score_relevance(const std::optional<StructuredIntent>& intent, std::string_view question,
                            const Passage& passage, Gateway& gateway) {
    if (passage.text.empty()) throw std::invalid_argument("score_relevance: empty passage " + passage.id);
    ChatRequest req;
    req.tag = "score";
    if (intent) {
        req.messages = prompt("score").render(intent_values(*intent, question, passage));
    } else {
        req.messages = prompt("score_raw").render(
            {{"query", std::string(question)}, {"passage_id", passage.id}, {"passage", passage.text}});
    }
    try {
        return parse_score(gateway.complete_chat(req).content);
    } catch (const ExhaustedRetries&) {
    } catch (const ProviderRejected&) {
    }
    ScoreResult failed;
    failed.provider_error = true;
    return failed;
}

void PipelineConfig::validate() const {
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("pipeline.tau must be in (0, 1]");
    if (top_n < 1) throw ConfigError("pipeline.top_n must be >= 1");
    if (k_out < 1) throw ConfigError("pipeline.k_out must be >= 1");
    if (k_out > top_n) throw ConfigError("pipeline.k_out must be <= pipeline.top_n");
}

FilterResult rank_and_filter(std::span<const ScoredPassage> scored, const PipelineConfig& cfg) {
    if (scored.empty()) throw std::invalid_argument("rank_and_filter: no scored passages");
    std::vector<ScoredPassage> sorted(scored.begin(), scored.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const ScoredPassage& a, const ScoredPassage& b) { return a.score > b.score; });

    FilterResult out;
    if (cfg.ablate_filter) {
        out.kept = std::move(sorted);
    } else {
        for (auto& s : sorted) {
            if (s.score >= cfg.tau) out.kept.push_back(std::move(s));
        }
        if (out.kept.empty()) {
            out.kept.push_back(std::move(sorted.front()));
            out.fallback = true;
        }
    }
    if (out.kept.size() > cfg.k_out) out.kept.resize(cfg.k_out);
    for (std::size_t i = 0; i < out.kept.size(); ++i) out.kept[i].rank = i + 1;
    return out;
}

std::string head_sentences(std::string_view text, std::size_t max_sentences) {
    const auto spans = split_sentences(text);
    if (spans.empty()) return std::string(trim(text));
    const std::size_t last = std::min(max_sentences, spans.size()) - 1;
    return std::string(text.substr(spans.front().begin, spans[last].end - spans.front().begin));
}

EvidenceSummary summarize_evidence(const Passage& passage, const StructuredIntent& intent,
                                   std::string_view question, Gateway& gateway) {
    ChatRequest req;
    req.tag = "summarize";
    req.messages = prompt("summarize").render(intent_values(intent, question, passage));

    EvidenceSummary out;
    out.passage_id = passage.id;
    std::string content;
    try {
        content = std::string(trim(gateway.complete_chat(req).content));
    } catch (const ExhaustedRetries&) {
    } catch (const ProviderRejected&) {
    }

    if (content.empty()) {
        out.summary = head_sentences(passage.text, kMaxSummarySentences);
        out.fallback = true;
    } else {
        out.summary = head_sentences(content, kMaxSummarySentences);
        out.truncated = split_sentences(content).size() > kMaxSummarySentences;
    }
    out.sentence_count = std::max<std::size_t>(1, split_sentences(out.summary).size());
    return out;
}

std::size_t RerankResult::score_parse_errors() const {
    return static_cast<std::size_t>(
        std::count_if(score_details.begin(), score_details.end(), [](const auto& s) { return s.parse_error; }));
}

std::size_t RerankResult::score_clamps() const {
    return static_cast<std::size_t>(
        std::count_if(score_details.begin(), score_details.end(), [](const auto& s) { return s.clamped; }));
}

std::size_t RerankResult::summaries_truncated() const {
    return static_cast<std::size_t>(
        std::count_if(evidence.begin(), evidence.end(), [](const auto& e) { return e.truncated; }));
}

std::size_t RerankResult::summary_fallbacks() const {
    return static_cast<std::size_t>(
        std::count_if(evidence.begin(), evidence.end(), [](const auto& e) { return e.fallback; }));
}

RerankResult rerank(std::string_view question, std::span<const Passage> passages,
                    const PipelineConfig& cfg, Gateway& gateway) {
    cfg.validate();
    if (passages.empty()) throw std::invalid_argument("rerank: no passages");
    const auto pool = passages.first(std::min(cfg.top_n, passages.size()));

    RerankResult out;
    std::optional<StructuredIntent> intent;
    if (!cfg.ablate_intent) {
        out.intent = recognize_intent(question, gateway);
        intent = out.intent->intent;
    }

    const std::size_t workers = workers_for(gateway);
    out.score_details.resize(pool.size());
    parallel_for(pool.size(), workers, [&](std::size_t i) {
        out.score_details[i] = score_relevance(intent, question, pool[i], gateway);
    });
    out.scored.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        out.scored.push_back({pool[i], out.score_details[i].score, i + 1});
    }

    FilterResult filtered = rank_and_filter(out.scored, cfg);
    out.ranked = std::move(filtered.kept);
    out.filter_fallback = filtered.fallback;

    out.evidence.resize(out.ranked.size());
    if (cfg.ablate_summarize) {
        for (std::size_t i = 0; i < out.ranked.size(); ++i) {
            const Passage& p = out.ranked[i].passage;
            out.evidence[i] = EvidenceSummary{p.id, p.text, split_sentences(p.text).size(), false, false};
        }
    } else {
        const StructuredIntent summary_intent = intent.value_or(fallback_intent());
        parallel_for(out.ranked.size(), workers, [&](std::size_t i) {
            out.evidence[i] = summarize_evidence(out.ranked[i].passage, summary_intent, question, gateway);
        });
    }
    return out;
}

std::vector<ScoredPassage> baseline_cosine_rerank(std::string_view question,
                                                  std::span<const Passage> passages,
                                                  const Embedder& embedder) {
    if (passages.empty()) throw std::invalid_argument("baseline_cosine_rerank: no passages");
    const EmbeddingVector q = embedder.embed(question);
    std::vector<std::string> texts;
    texts.reserve(passages.size());
    for (const auto& p : passages) texts.push_back(p.text);
    const auto vectors = embedder.embed_batch(texts);

    std::vector<ScoredPassage> out;
    out.reserve(passages.size());
    for (std::size_t i = 0; i < passages.size(); ++i) {
        out.push_back({passages[i], cosine_similarity(q, vectors[i]), 0});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const ScoredPassage& a, const ScoredPassage& b) { return a.score > b.score; });
    for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = i + 1;
    return out;
}

}  // namespace deepera
