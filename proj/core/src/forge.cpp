#include "deepera/forge.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "deepera/metrics.hpp"
#include "deepera/parallel.hpp"
#include "deepera/prompts.hpp"
#include "deepera/text.hpp"

namespace deepera {

using nlohmann::json;

namespace {

constexpr std::size_t kEmbedBatch = 64;

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string field_string(const FieldMap& fields, const std::string& name) {
    auto it = fields.find(name);
    if (it == fields.end() || !it->second.is_string()) return {};
    return std::string(trim(it->second.get<std::string>()));
}

bool has_deictic_reference(std::string_view question) {
    static constexpr std::string_view kPhrases[] = {"this passage", "the passage", "this study",
                                                    "the study", "this paper", "the authors"};
    const std::string q = lower(question);
    return std::any_of(std::begin(kPhrases), std::end(kPhrases),
                       [&](std::string_view p) { return q.find(p) != std::string::npos; });
}

std::vector<EmbeddingVector> embed_all(const Embedder& embedder, const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (std::size_t i = 0; i < texts.size(); i += kEmbedBatch) {
        const std::size_t n = std::min(kEmbedBatch, texts.size() - i);
        auto batch = embedder.embed_batch(std::span<const std::string>(texts).subspan(i, n));
        std::move(batch.begin(), batch.end(), std::back_inserter(out));
    }
    return out;
}

// Parses a {"passages": [...]} reply into nonempty candidate texts.
std::vector<std::string> distractor_candidates(Gateway& gateway, const DistractorGuidance& g,
                                               std::size_t count, int attempt, ForgeLog* log) {
    ChatRequest req;
    req.tag = "distractor";
    req.response_schema = distractor_schema();
    req.messages = prompt("distractor").render({{"doc_id", g.doc_id},
                                                {"target_type", std::string(to_string(g.target_type))},
                                                {"main_idea", g.main_idea},
                                                {"answer_avoidance", g.answer_avoidance},
                                                {"count", std::to_string(count)},
                                                {"attempt", std::to_string(attempt)}});
    std::vector<std::string> out;
    try {
        const FieldMap fields = gateway.complete_structured(req, distractor_schema());
        for (const auto& item : fields.at("passages")) {
            if (!item.is_string()) continue;
            std::string text(trim(item.get<std::string>()));
            if (!text.empty()) out.push_back(std::move(text));
        }
    } catch (const SchemaParseError& e) {
        if (log) log->record("distractor_parse_error", g.doc_id, e.what());
    }
    return out;
}

}  // namespace

std::string_view to_string(QuestionType t) {
    switch (t) {
        case QuestionType::method: return "method";
        case QuestionType::result: return "result";
        case QuestionType::significance_or_hypothesis: return "significance_or_hypothesis";
    }
    return "result";
}

std::optional<QuestionType> parse_question_type(std::string_view s) {
    const std::string t = lower(trim(s));
    if (t == "method" || t == "methods" || t == "method-type") return QuestionType::method;
    if (t == "result" || t == "results" || t == "result-type") return QuestionType::result;
    if (t == "significance" || t == "hypothesis" || t == "significance_or_hypothesis" ||
        t == "hypothesis/significance" || t == "significance/hypothesis") {
        return QuestionType::significance_or_hypothesis;
    }
    return std::nullopt;
}

std::string_view to_string(TargetType t) {
    switch (t) {
        case TargetType::misleading: return "misleading";
        case TargetType::background: return "background";
        case TargetType::irrelevant: return "irrelevant";
    }
    return "misleading";
}

std::optional<TargetType> parse_target_type(std::string_view s) {
    if (s == "misleading") return TargetType::misleading;
    if (s == "background") return TargetType::background;
    if (s == "irrelevant") return TargetType::irrelevant;
    return std::nullopt;
}

SentenceTooLong::SentenceTooLong(std::size_t index, std::size_t length, std::size_t max_chars)
    : ForgeError("sentence " + std::to_string(index) + " has " + std::to_string(length) +
                 " characters, more than max_chars=" + std::to_string(max_chars)),
      index_(index) {}

ExtractFailed::ExtractFailed(std::string doc_id, const std::string& reason)
    : ForgeError("structured extraction failed for " + doc_id + ": " + reason), doc_id_(std::move(doc_id)) {}

GenerationFailed::GenerationFailed(std::string doc_id, const std::string& reason)
    : ForgeError("QA generation failed for " + doc_id + ": " + reason), doc_id_(std::move(doc_id)) {}

void ForgeLog::record(std::string kind, std::string subject, std::string detail) {
    std::lock_guard lock(mu_);
    events_.push_back(json{{"kind", std::move(kind)}, {"subject", std::move(subject)}, {"detail", std::move(detail)}});
}

void ForgeLog::append(const ForgeLog& other) {
    auto theirs = other.events();
    std::lock_guard lock(mu_);
    std::move(theirs.begin(), theirs.end(), std::back_inserter(events_));
}

std::vector<json> ForgeLog::events() const {
    std::lock_guard lock(mu_);
    return events_;
}

std::size_t ForgeLog::count(std::string_view kind) const {
    std::lock_guard lock(mu_);
    return static_cast<std::size_t>(std::count_if(events_.begin(), events_.end(), [&](const json& e) {
        return e.at("kind").get<std::string>() == kind;
    }));
}

void ForgeLog::write_jsonl(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write forge log: " + path);
    for (const auto& e : events()) out << e.dump() << '\n';
}

std::vector<Chunk> segment_abstract(const Document& doc, std::size_t max_chars) {
    const std::string_view text = doc.abstract;
    const auto spans = split_sentences(text);
    for (std::size_t i = 0; i < spans.size(); ++i) {
        const std::size_t len = utf8_length(text.substr(spans[i].begin, spans[i].size()));
        if (len > max_chars) throw SentenceTooLong(i, len, max_chars);
    }

    std::vector<Chunk> chunks;
    auto emit = [&](std::size_t first, std::size_t last) {
        const std::size_t b = spans[first].begin;
        const std::size_t e = spans[last - 1].end;
        chunks.push_back({doc.id, chunks.size(), std::string(text.substr(b, e - b)), {first, last}});
    };
    std::size_t first = 0;
    for (std::size_t j = 1; j < spans.size(); ++j) {
        const std::size_t b = spans[first].begin;
        if (utf8_length(text.substr(b, spans[j].end - b)) > max_chars) {
            emit(first, j);
            first = j;
        }
    }
    if (!spans.empty()) emit(first, spans.size());
    return chunks;
}

Passage ChunkCorpus::passage(const std::string& passage_id) const {
    const Chunk& c = chunks.at(passage_id);
    return Passage{passage_id, c.text, PassageLabel::natural, c.doc_id, std::nullopt};
}

ChunkCorpus build_chunk_corpus(std::span<const Document> docs, const Embedder& embedder,
                               std::size_t max_chars) {
    std::vector<Chunk> all;
    for (const auto& d : docs) {
        auto chunks = segment_abstract(d, max_chars);
        std::move(chunks.begin(), chunks.end(), std::back_inserter(all));
    }
    std::vector<std::string> texts;
    texts.reserve(all.size());
    for (const auto& c : all) texts.push_back(c.text);
    auto vectors = embed_all(embedder, texts);

    ChunkCorpus corpus;
    corpus.index = VectorIndex(vectors.empty() ? embedder.config().dim : vectors.front().dim());
    for (std::size_t i = 0; i < all.size(); ++i) {
        std::string id = all[i].passage_id();
        corpus.index.add(id, std::move(vectors[i]));
        corpus.chunks.emplace(std::move(id), std::move(all[i]));
    }
    return corpus;
}

std::vector<ClusterAssignment> cluster_corpus(const VectorIndex& doc_index, double sim_threshold,
                                              std::size_t min_size) {
    if (!(sim_threshold > 0.0 && sim_threshold < 1.0)) {
        throw std::invalid_argument("cluster_corpus: sim_threshold must be in (0, 1)");
    }
    if (min_size < 1) throw std::invalid_argument("cluster_corpus: min_size must be >= 1");
    if (doc_index.empty()) throw EmptyIndex();

    const auto& entries = doc_index.entries();
    std::vector<std::size_t> leaders;  // entry index of each cluster's leader
    std::vector<std::size_t> sizes;
    std::vector<ClusterAssignment> out;
    out.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        std::optional<std::size_t> joined;
        for (std::size_t c = 0; c < leaders.size(); ++c) {
            if (cosine_similarity(entries[i].vector, entries[leaders[c]].vector) >= sim_threshold) {
                joined = c;
                break;
            }
        }
        if (!joined) {
            joined = leaders.size();
            leaders.push_back(i);
            sizes.push_back(0);
        }
        ++sizes[*joined];
        out.push_back({entries[i].passage_id, *joined, false});
    }
    for (auto& a : out) a.kept = sizes[a.cluster_id] >= min_size;
    return out;
}

const SchemaSpec& extract_schema() {
    static const SchemaSpec s{{{"methods", FieldKind::string, {}},
                               {"results", FieldKind::string, {}},
                               {"significance", FieldKind::string, {}}}};
    return s;
}

const SchemaSpec& qa_schema() {
    static const SchemaSpec s{{{"pairs", FieldKind::list, {}}}};
    return s;
}

const SchemaSpec& guidance_schema() {
    static const SchemaSpec s{{{"doc_id", FieldKind::string, {}},
                               {"target_type", FieldKind::enumeration, {"misleading", "background", "irrelevant"}},
                               {"main_idea", FieldKind::string, {}},
                               {"answer_avoidance", FieldKind::string, {}}}};
    return s;
}

const SchemaSpec& distractor_schema() {
    static const SchemaSpec s{{{"passages", FieldKind::list, {}}}};
    return s;
}

StructuredInfo extract_structured(const Document& doc, Gateway& gateway) {
    if (doc.abstract.empty()) throw std::invalid_argument("extract_structured: empty abstract");
    ChatRequest req;
    req.tag = "extract";
    req.response_schema = extract_schema();
    req.messages = prompt("extract").render(
        {{"title", doc.title}, {"doc_id", doc.id}, {"abstract", doc.abstract}});

    FieldMap fields;
    try {
        fields = gateway.complete_structured(req, extract_schema());
    } catch (const SchemaParseError& e) {
        throw ExtractFailed(doc.id, e.what());
    }
    StructuredInfo info{doc.id, field_string(fields, "methods"), field_string(fields, "results"),
                        field_string(fields, "significance")};
    if (!info.valid()) throw ExtractFailed(doc.id, "methods, results and significance are all empty");
    return info;
}

std::vector<QAPair> generate_qa(const StructuredInfo& info, const Chunk& chunk, Gateway& gateway,
                                ForgeLog* log) {
    if (!info.valid()) throw std::invalid_argument("generate_qa: structured info is empty");
    std::ostringstream notes;
    notes << "methods: " << info.methods << "\nresults: " << info.results
          << "\nsignificance: " << info.significance;

    ChatRequest req;
    req.tag = "qa";
    req.response_schema = qa_schema();
    req.messages = prompt("qa").render({{"reader_notes", notes.str()}, {"chunk_text", chunk.text}});

    FieldMap fields;
    try {
        fields = gateway.complete_structured(req, qa_schema());
    } catch (const SchemaParseError& e) {
        throw GenerationFailed(info.doc_id, e.what());
    }

    const std::string source = chunk.passage_id();
    std::vector<QAPair> pairs;
    for (const auto& item : fields.at("pairs")) {
        if (!item.is_object()) continue;
        auto str = [&](const char* key) -> std::string {
            auto it = item.find(key);
            return (it != item.end() && it->is_string()) ? std::string(trim(it->get<std::string>())) : "";
        };
        QAPair p{str("question"), str("answer"), QuestionType::result, source};
        auto qtype = parse_question_type(str("type"));
        if (p.question.empty() || p.answer.empty() || !qtype) {
            if (log) log->record("qa_pair_dropped", source, item.dump());
            continue;
        }
        p.qtype = *qtype;
        if (log && has_deictic_reference(p.question)) {
            log->record("qa_deictic_question", source, p.question);
        }
        pairs.push_back(std::move(p));
    }
    if (pairs.empty()) throw GenerationFailed(info.doc_id, "no usable question-answer pairs");
    if (pairs.size() > kMaxQAPairs) {
        if (log) {
            log->record("qa_truncated", source,
                        std::to_string(pairs.size()) + " pairs returned, kept first " +
                            std::to_string(kMaxQAPairs));
        }
        pairs.resize(kMaxQAPairs);
    }
    return pairs;
}

QAInstance build_base_instance(const QAPair& pair, const ChunkCorpus& corpus,
                               const Embedder& embedder, std::size_t pool_size,
                               std::string instance_id) {
    if (pool_size < 3) throw std::invalid_argument("build_base_instance: pool_size must be >= 3");
    const auto retrieved = top_k(embedder.embed(pair.question), corpus.index, pool_size);

    QAInstance inst;
    inst.id = std::move(instance_id);
    inst.question = pair.question;
    inst.golden_answer = pair.answer;
    inst.setting = Setting::base;
    bool golden_found = false;
    for (const auto& hit : retrieved.ranked) {
        Passage p = corpus.passage(hit.passage_id);
        if (hit.passage_id == pair.source_chunk) {
            p.label = PassageLabel::golden;
            golden_found = true;
        }
        inst.contexts.push_back(std::move(p));
    }
    inst.meta["qtype"] = std::string(to_string(pair.qtype));
    inst.meta["source_chunk"] = pair.source_chunk;
    if (!golden_found) inst.meta[std::string(kGoldenAbsentKey)] = "true";
    return inst;
}

DistractorGuidance create_guidance(std::string_view question, std::string_view answer,
                                   std::span<const Passage> top3, Gateway& gateway) {
    if (top3.size() > 3) throw std::invalid_argument("create_guidance: at most 3 contexts");
    std::string contexts;
    for (const auto& p : top3) contexts += "[passage " + p.id + "] " + p.text + "\n\n";

    ChatRequest req;
    req.tag = "guidance";
    req.response_schema = guidance_schema();
    req.messages = prompt("guidance").render({{"query", std::string(question)},
                                              {"answer", std::string(answer)},
                                              {"contexts", std::string(trim(contexts))}});
    const FieldMap fields = gateway.complete_structured(req, guidance_schema());

    DistractorGuidance g;
    g.doc_id = field_string(fields, "doc_id");
    g.target_type = *parse_target_type(fields.at("target_type").get<std::string>());
    g.main_idea = field_string(fields, "main_idea");
    g.answer_avoidance = field_string(fields, "answer_avoidance");
    if (g.doc_id.empty() || g.main_idea.empty() || g.answer_avoidance.empty()) {
        throw GuidanceFailed("guidance has an empty doc_id, main_idea or answer_avoidance");
    }
    // The pairing must point at one of the contexts the guidance was built from.
    const bool known = std::any_of(top3.begin(), top3.end(), [&](const Passage& p) { return p.id == g.doc_id; });
    if (!known && !top3.empty()) {
        auto golden = std::find_if(top3.begin(), top3.end(),
                                   [](const Passage& p) { return p.label == PassageLabel::golden; });
        g.doc_id = golden != top3.end() ? golden->id : top3.front().id;
    }
    return g;
}

std::vector<Passage> generate_distractors(const DistractorGuidance& guidance, std::size_t count,
                                          std::string_view golden_answer, Gateway& gateway,
                                          ForgeLog* log) {
    if (count < 1) throw std::invalid_argument("generate_distractors: count must be >= 1");

    std::vector<std::string> accepted;
    auto screen = [&](std::vector<std::string> candidates, int attempt) {
        std::size_t leaked = 0;
        for (auto& text : candidates) {
            if (accepted.size() == count) break;
            if (leaks_answer(text, golden_answer)) {
                ++leaked;
                if (log) {
                    log->record(attempt == 1 ? "distractor_leak_regenerated" : "distractor_leak_dropped",
                                guidance.doc_id, text);
                }
                continue;
            }
            accepted.push_back(std::move(text));
        }
        return leaked;
    };

    screen(distractor_candidates(gateway, guidance, count, 1, log), 1);
    if (accepted.size() < count) {
        screen(distractor_candidates(gateway, guidance, count - accepted.size(), 2, log), 2);
    }
    if (accepted.empty()) {
        throw AllDistractorsRejected("every distractor candidate for " + guidance.doc_id +
                                     " leaked the golden answer or was unusable");
    }
    if (log && accepted.size() < count) {
        log->record("distractor_short", guidance.doc_id,
                    std::to_string(accepted.size()) + " of " + std::to_string(count) + " accepted");
    }

    std::vector<Passage> out;
    out.reserve(accepted.size());
    for (std::size_t i = 0; i < accepted.size(); ++i) {
        out.push_back(Passage{guidance.doc_id + "~d" + std::to_string(i + 1), std::move(accepted[i]),
                              PassageLabel::distractor, std::nullopt, guidance.doc_id});
    }
    return out;
}

QAInstance assemble_ssli_instance(const QAInstance& base, std::span<const Passage> distractors) {
    if (base.setting != Setting::base) throw std::invalid_argument("assemble_ssli_instance: base setting required");
    if (distractors.empty()) throw std::invalid_argument("assemble_ssli_instance: no distractors");
    if (distractors.size() >= base.contexts.size()) {
        throw TooManyDistractors(std::to_string(distractors.size()) + " distractors for " +
                                 std::to_string(base.contexts.size()) + " contexts");
    }
    std::vector<std::size_t> natural;
    for (std::size_t i = 0; i < base.contexts.size(); ++i) {
        if (base.contexts[i].label == PassageLabel::natural) natural.push_back(i);
    }
    if (distractors.size() > natural.size()) {
        throw TooManyDistractors(std::to_string(distractors.size()) + " distractors but only " +
                                 std::to_string(natural.size()) + " natural contexts to replace");
    }

    QAInstance out = base;
    out.setting = Setting::ssli;
    const std::size_t offset = natural.size() - distractors.size();
    for (std::size_t d = 0; d < distractors.size(); ++d) {
        out.contexts[natural[offset + d]] = distractors[d];
    }
    return out;
}

void ForgeConfig::validate() const {
    if (max_chunk_chars < 1) throw ConfigError("forge.max_chunk_chars must be >= 1");
    if (pool_size < 3) throw ConfigError("forge.pool_size must be >= 3");
    if (distractor_count < 1) throw ConfigError("forge.distractor_count must be >= 1");
    if (distractor_count >= pool_size) throw ConfigError("forge.distractor_count must be < pool_size");
    if (!(cluster_threshold > 0.0 && cluster_threshold < 1.0)) {
        throw ConfigError("forge.cluster_threshold must be in (0, 1)");
    }
    if (min_cluster < 1) throw ConfigError("forge.min_cluster must be >= 1");
    if (guidance_top < 1 || guidance_top > 3) throw ConfigError("forge.guidance_top must be in [1, 3]");
    if (workers < 1) throw ConfigError("forge.workers must be >= 1");
}

ForgeOutput run_forge(std::span<const Document> docs, const ForgeConfig& cfg,
                      const Embedder& embedder, Gateway& gateway, ForgeLog& log) {
    cfg.validate();
    std::vector<Document> sorted(docs.begin(), docs.end());
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

    // Step 1: segmentation and chunk embedding.
    std::vector<Document> segmentable;
    std::unordered_map<std::string, std::vector<Chunk>> chunks_by_doc;
    for (const auto& d : sorted) {
        try {
            chunks_by_doc[d.id] = segment_abstract(d, cfg.max_chunk_chars);
            segmentable.push_back(d);
        } catch (const SentenceTooLong& e) {
            log.record("segment_skipped", d.id, e.what());
        }
    }
    ForgeOutput out;
    if (segmentable.empty()) return out;
    const ChunkCorpus corpus = build_chunk_corpus(segmentable, embedder, cfg.max_chunk_chars);

    // Step 2: clustering over document vectors.
    std::vector<std::string> abstracts;
    for (const auto& d : segmentable) abstracts.push_back(d.abstract);
    auto doc_vectors = embed_all(embedder, abstracts);
    VectorIndex doc_index(doc_vectors.front().dim());
    for (std::size_t i = 0; i < segmentable.size(); ++i) doc_index.add(segmentable[i].id, std::move(doc_vectors[i]));
    out.clusters = cluster_corpus(doc_index, cfg.cluster_threshold, cfg.min_cluster);

    std::vector<const Document*> kept;
    for (std::size_t i = 0; i < segmentable.size(); ++i) {
        if (out.clusters[i].kept) {
            kept.push_back(&segmentable[i]);
        } else {
            log.record("cluster_filtered", segmentable[i].id,
                       "cluster " + std::to_string(out.clusters[i].cluster_id) + " below min_cluster");
        }
    }

    // Steps 3-5 per document; results are merged in doc order.
    struct DocResult {
        std::vector<QAInstance> base;
        std::vector<QAInstance> ssli;
        ForgeLog log;
    };
    std::vector<DocResult> results(kept.size());
    parallel_for(kept.size(), cfg.workers, [&](std::size_t i) {
        const Document& doc = *kept[i];
        DocResult& r = results[i];
        StructuredInfo info;
        try {
            info = extract_structured(doc, gateway);
        } catch (const ExtractFailed& e) {
            r.log.record("extract_failed", doc.id, e.what());
            return;
        }
        for (const Chunk& chunk : chunks_by_doc.at(doc.id)) {
            std::vector<QAPair> pairs;
            try {
                pairs = generate_qa(info, chunk, gateway, &r.log);
            } catch (const GenerationFailed& e) {
                r.log.record("generation_failed", chunk.passage_id(), e.what());
                continue;
            }
            for (std::size_t k = 0; k < pairs.size(); ++k) {
                const std::string id = chunk.passage_id() + "/q" + std::to_string(k + 1);
                QAInstance base = build_base_instance(pairs[k], corpus, embedder, cfg.pool_size, id);
                if (base.golden_absent()) r.log.record("golden_absent", id, "source chunk outside the pool");

                const std::size_t top = std::min(cfg.guidance_top, base.contexts.size());
                try {
                    auto guidance = create_guidance(base.question, base.golden_answer,
                                                    std::span<const Passage>(base.contexts).first(top), gateway);
                    auto distractors = generate_distractors(guidance, cfg.distractor_count,
                                                            base.golden_answer, gateway, &r.log);
                    if (distractors.size() < cfg.distractor_count) {
                        r.log.record("ssli_skipped", id, "fewer distractors than configured");
                    } else {
                        r.ssli.push_back(assemble_ssli_instance(base, distractors));
                    }
                } catch (const SchemaParseError& e) {
                    r.log.record("guidance_failed", id, e.what());
                } catch (const GuidanceFailed& e) {
                    r.log.record("guidance_failed", id, e.what());
                } catch (const AllDistractorsRejected& e) {
                    r.log.record("distractors_rejected", id, e.what());
                } catch (const TooManyDistractors& e) {
                    r.log.record("ssli_skipped", id, e.what());
                }
                r.base.push_back(std::move(base));
            }
        }
    });

    for (auto& r : results) {
        std::move(r.base.begin(), r.base.end(), std::back_inserter(out.base));
        std::move(r.ssli.begin(), r.ssli.end(), std::back_inserter(out.ssli));
        log.append(r.log);
    }
    return out;
}

}  // namespace deepera
