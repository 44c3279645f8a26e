#pragma once

#include <cstddef>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "deepera/corpus.hpp"
#include "deepera/embed.hpp"
#include "deepera/gateway.hpp"
#include "deepera/vector_index.hpp"

namespace deepera {

struct StructuredInfo {
    std::string doc_id;
    std::string methods;
    std::string results;
    std::string significance;

    bool valid() const { return !methods.empty() || !results.empty() || !significance.empty(); }
};

enum class QuestionType { method, result, significance_or_hypothesis };

std::string_view to_string(QuestionType t);
// Accepts "method(s)", "result(s)", "significance", "hypothesis", ...
std::optional<QuestionType> parse_question_type(std::string_view s);

struct QAPair {
    std::string question;
    std::string answer;
    QuestionType qtype = QuestionType::result;
    std::string source_chunk;  // passage id of the chunk the pair was generated from
};

enum class TargetType { misleading, background, irrelevant };

std::string_view to_string(TargetType t);
std::optional<TargetType> parse_target_type(std::string_view s);

struct DistractorGuidance {
    std::string doc_id;  // passage the distractors are paired with
    TargetType target_type = TargetType::misleading;
    std::string main_idea;
    std::string answer_avoidance;
};

struct ClusterAssignment {
    std::string doc_id;
    std::size_t cluster_id = 0;
    bool kept = false;

    bool operator==(const ClusterAssignment&) const = default;
};

class ForgeError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class SentenceTooLong : public ForgeError {
public:
    SentenceTooLong(std::size_t index, std::size_t length, std::size_t max_chars);
    std::size_t index() const { return index_; }

private:
    std::size_t index_;
};

class ExtractFailed : public ForgeError {
public:
    ExtractFailed(std::string doc_id, const std::string& reason);
    const std::string& doc_id() const { return doc_id_; }

private:
    std::string doc_id_;
};

class GenerationFailed : public ForgeError {
public:
    GenerationFailed(std::string doc_id, const std::string& reason);
    const std::string& doc_id() const { return doc_id_; }

private:
    std::string doc_id_;
};

class GuidanceFailed : public ForgeError {
    using ForgeError::ForgeError;
};

class AllDistractorsRejected : public ForgeError {
    using ForgeError::ForgeError;
};

class TooManyDistractors : public ForgeError {
    using ForgeError::ForgeError;
};

// Thread-safe audit trail of skips, leaks and truncations (forge_log.jsonl).
class ForgeLog {
public:
    void record(std::string kind, std::string subject, std::string detail);
    void append(const ForgeLog& other);

    std::vector<nlohmann::json> events() const;
    std::size_t count(std::string_view kind) const;
    void write_jsonl(const std::string& path) const;

private:
    mutable std::mutex mu_;
    std::vector<nlohmann::json> events_;
};

// Greedy packing of whole sentences into chunks of at most max_chars code
// points. Throws SentenceTooLong.
std::vector<Chunk> segment_abstract(const Document& doc, std::size_t max_chars);

// Chunk passages of a corpus together with their embedding index.
struct ChunkCorpus {
    VectorIndex index{0};
    std::unordered_map<std::string, Chunk> chunks;  // by passage id

    Passage passage(const std::string& passage_id) const;
};

ChunkCorpus build_chunk_corpus(std::span<const Document> docs, const Embedder& embedder,
                               std::size_t max_chars);

// Single-pass leader clustering in index order. Clusters smaller than
// min_size are marked kept=false. Throws EmptyIndex.
std::vector<ClusterAssignment> cluster_corpus(const VectorIndex& doc_index, double sim_threshold,
                                              std::size_t min_size);

const SchemaSpec& extract_schema();
const SchemaSpec& qa_schema();
const SchemaSpec& guidance_schema();
const SchemaSpec& distractor_schema();

StructuredInfo extract_structured(const Document& doc, Gateway& gateway);

inline constexpr std::size_t kMaxQAPairs = 3;

// 1..3 pairs; overflow is truncated (logged), zero pairs throws GenerationFailed.
std::vector<QAPair> generate_qa(const StructuredInfo& info, const Chunk& chunk, Gateway& gateway,
                                ForgeLog* log = nullptr);

// Contexts are the top pool_size chunks by cosine to the question. The
// source chunk is labeled golden, or meta.golden_absent is set.
QAInstance build_base_instance(const QAPair& pair, const ChunkCorpus& corpus,
                               const Embedder& embedder, std::size_t pool_size,
                               std::string instance_id);

// An unknown doc_id falls back to the golden passage among top3, else the
// first one. Unparseable replies propagate SchemaParseError.
DistractorGuidance create_guidance(std::string_view question, std::string_view answer,
                                   std::span<const Passage> top3, Gateway& gateway);

// Each candidate is checked for an answer leak; leaking candidates are
// regenerated once and dropped if they leak again. May return fewer than
// `count` passages. Throws AllDistractorsRejected when none survive.
std::vector<Passage> generate_distractors(const DistractorGuidance& guidance, std::size_t count,
                                          std::string_view golden_answer, Gateway& gateway,
                                          ForgeLog* log = nullptr);

// Replaces the lowest-ranked natural contexts with the distractors, keeping
// the context count fixed. Throws TooManyDistractors.
QAInstance assemble_ssli_instance(const QAInstance& base, std::span<const Passage> distractors);

struct ForgeConfig {
    std::size_t max_chunk_chars = 600;
    std::size_t pool_size = 30;
    std::size_t distractor_count = 6;
    double cluster_threshold = 0.35;
    std::size_t min_cluster = 2;
    std::size_t guidance_top = 3;
    std::size_t workers = 4;

    void validate() const;  // throws ConfigError
};

struct ForgeOutput {
    std::vector<QAInstance> base;
    std::vector<QAInstance> ssli;
    std::vector<ClusterAssignment> clusters;
};

// End-to-end construction: segment, embed, cluster, extract, generate QA,
// assemble base and SSLI instances. Output order is deterministic.
ForgeOutput run_forge(std::span<const Document> docs, const ForgeConfig& cfg,
                      const Embedder& embedder, Gateway& gateway, ForgeLog& log);

}  // namespace deepera
