#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace deepera {

using StringMap = std::map<std::string, std::string>;

enum class Setting { base, ssli };
enum class PassageLabel { natural, golden, distractor };

std::string_view to_string(Setting s);
std::string_view to_string(PassageLabel l);
std::optional<Setting> parse_setting(std::string_view s);
std::optional<PassageLabel> parse_label(std::string_view s);

struct Document {
    std::string id;
    std::string title;
    std::string abstract;
    StringMap metadata;  // venue, year, subject, ...

    bool operator==(const Document&) const = default;
};

// A run of whole sentences taken from a document abstract.
// sentence_span is half-open: [first, last) sentence indices of the parent.
struct Chunk {
    std::string doc_id;
    std::size_t index = 0;
    std::string text;
    std::pair<std::size_t, std::size_t> sentence_span{0, 0};

    // Passage id used for this chunk everywhere downstream ("<doc>#<index>").
    std::string passage_id() const;

    bool operator==(const Chunk&) const = default;
};

struct Passage {
    std::string id;
    std::string text;
    PassageLabel label = PassageLabel::natural;
    std::optional<std::string> source_doc;
    std::optional<std::string> pair_of;  // original passage a distractor was derived from

    bool operator==(const Passage&) const = default;
};

// meta key that marks an instance whose golden passage was not retrieved.
inline constexpr std::string_view kGoldenAbsentKey = "golden_absent";

struct QAInstance {
    std::string id;
    std::string question;
    std::string golden_answer;
    Setting setting = Setting::base;
    std::vector<Passage> contexts;
    StringMap meta;

    bool golden_absent() const;
    // Index into contexts of the golden passage, if exactly one exists.
    std::optional<std::size_t> golden_index() const;

    bool operator==(const QAInstance&) const = default;
};

struct Violation {
    std::string code;
    std::string message;

    bool operator==(const Violation&) const = default;
};

struct ValidationReport {
    std::string instance_id;
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
    bool has(std::string_view code) const;
};

// Violation codes reported by validate_instance.
namespace violation {
inline constexpr std::string_view kNoGolden = "NO_GOLDEN";
inline constexpr std::string_view kMultiGolden = "MULTI_GOLDEN";
inline constexpr std::string_view kNoDistractor = "NO_DISTRACTOR";
inline constexpr std::string_view kBaseHasDistractor = "BASE_HAS_DISTRACTOR";
inline constexpr std::string_view kDistractorUnlinked = "DISTRACTOR_UNLINKED";
inline constexpr std::string_view kGoldenNoSource = "GOLDEN_NO_SOURCE";
}  // namespace violation

class DatasetError : public std::runtime_error {
public:
    DatasetError(std::size_t line_no, const std::string& what)
        : std::runtime_error(what), line_no_(line_no) {}
    std::size_t line_no() const { return line_no_; }

private:
    std::size_t line_no_;
};

class MalformedLine : public DatasetError {
public:
    MalformedLine(std::size_t line_no, const std::string& detail);
};

class SchemaViolation : public DatasetError {
public:
    SchemaViolation(std::size_t line_no, std::string field, const std::string& detail);
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

ValidationReport validate_instance(const QAInstance& inst);

// JSONL dataset I/O. Lines are 1-based in errors; blank lines are skipped.
std::vector<QAInstance> parse_dataset(std::istream& in);
std::vector<QAInstance> parse_dataset(std::string_view text);
std::string serialize_dataset(std::span<const QAInstance> instances);
void write_dataset(std::ostream& out, std::span<const QAInstance> instances);

std::vector<QAInstance> load_dataset(const std::string& path);
void save_dataset(const std::string& path, std::span<const QAInstance> instances);

// Input corpus: one {id, title, abstract, metadata{}} object per line.
std::vector<Document> parse_corpus(std::istream& in);
std::string serialize_corpus(std::span<const Document> docs);
std::vector<Document> load_corpus(const std::string& path);

}  // namespace deepera
