#include "deepera/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace deepera {

using nlohmann::json;

namespace {

constexpr std::string_view kSettingNames[] = {"base", "ssli"};
constexpr std::string_view kLabelNames[] = {"natural", "golden", "distractor"};

const std::set<std::string, std::less<>> kInstanceKeys = {
    "id", "question", "golden_answer", "setting", "contexts", "meta"};

bool is_blank(std::string_view line) {
    return std::all_of(line.begin(), line.end(),
                       [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

std::string meta_value(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

const json& require(const json& obj, std::string_view key, std::size_t line_no,
                    const std::string& prefix = {}) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw SchemaViolation(line_no, prefix + std::string(key), "missing required field");
    }
    return *it;
}

std::string require_string(const json& obj, std::string_view key, std::size_t line_no,
                           const std::string& prefix = {}) {
    const json& v = require(obj, key, line_no, prefix);
    if (!v.is_string()) {
        throw SchemaViolation(line_no, prefix + std::string(key), "expected a string");
    }
    return v.get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, std::string_view key,
                                           std::size_t line_no, const std::string& prefix) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) {
        throw SchemaViolation(line_no, prefix + std::string(key), "expected a string or null");
    }
    return it->get<std::string>();
}

json optional_to_json(const std::optional<std::string>& v) {
    return v ? json(*v) : json(nullptr);
}

json passage_to_json(const Passage& p) {
    return json{{"id", p.id},
                {"text", p.text},
                {"label", to_string(p.label)},
                {"source_doc", optional_to_json(p.source_doc)},
                {"pair_of", optional_to_json(p.pair_of)}};
}

json instance_to_json(const QAInstance& inst) {
    json contexts = json::array();
    for (const auto& p : inst.contexts) contexts.push_back(passage_to_json(p));
    return json{{"id", inst.id},
                {"question", inst.question},
                {"golden_answer", inst.golden_answer},
                {"setting", to_string(inst.setting)},
                {"contexts", std::move(contexts)},
                {"meta", inst.meta}};
}

std::string field_for(const Violation& v) {
    // "contexts[3]: ..." messages carry the offending passage slot.
    if (v.code == violation::kDistractorUnlinked || v.code == violation::kGoldenNoSource) {
        auto colon = v.message.find(':');
        return v.message.substr(0, colon);
    }
    return "contexts";
}

QAInstance instance_from_json(const json& obj, std::size_t line_no) {
    if (!obj.is_object()) throw SchemaViolation(line_no, "<root>", "expected a JSON object");

    QAInstance inst;
    inst.id = require_string(obj, "id", line_no);
    inst.question = require_string(obj, "question", line_no);
    inst.golden_answer = require_string(obj, "golden_answer", line_no);

    auto setting = parse_setting(require_string(obj, "setting", line_no));
    if (!setting) throw SchemaViolation(line_no, "setting", "expected \"base\" or \"ssli\"");
    inst.setting = *setting;

    const json& contexts = require(obj, "contexts", line_no);
    if (!contexts.is_array()) throw SchemaViolation(line_no, "contexts", "expected an array");
    for (std::size_t i = 0; i < contexts.size(); ++i) {
        const json& c = contexts[i];
        std::string prefix = "contexts[" + std::to_string(i) + "].";
        if (!c.is_object()) {
            throw SchemaViolation(line_no, prefix.substr(0, prefix.size() - 1),
                                  "expected an object");
        }
        Passage p;
        p.id = require_string(c, "id", line_no, prefix);
        p.text = require_string(c, "text", line_no, prefix);
        auto label = parse_label(require_string(c, "label", line_no, prefix));
        if (!label) throw SchemaViolation(line_no, prefix + "label", "unknown passage label");
        p.label = *label;
        p.source_doc = optional_string(c, "source_doc", line_no, prefix);
        p.pair_of = optional_string(c, "pair_of", line_no, prefix);
        inst.contexts.push_back(std::move(p));
    }

    if (auto it = obj.find("meta"); it != obj.end() && !it->is_null()) {
        if (!it->is_object()) throw SchemaViolation(line_no, "meta", "expected an object");
        for (const auto& [k, v] : it->items()) inst.meta[k] = meta_value(v);
    }
    for (const auto& [k, v] : obj.items()) {
        if (!kInstanceKeys.contains(k)) inst.meta[k] = meta_value(v);
    }

    auto report = validate_instance(inst);
    if (!report.ok()) {
        const auto& first = report.violations.front();
        throw SchemaViolation(line_no, field_for(first), first.code + ": " + first.message);
    }
    return inst;
}

template <typename T, typename Fn>
std::vector<T> parse_lines(std::istream& in, Fn&& from_line) {
    std::vector<T> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw MalformedLine(line_no, e.what());
        }
        out.push_back(from_line(obj, line_no));
    }
    return out;
}

}  // namespace

std::string_view to_string(Setting s) { return kSettingNames[static_cast<int>(s)]; }
std::string_view to_string(PassageLabel l) { return kLabelNames[static_cast<int>(l)]; }

std::optional<Setting> parse_setting(std::string_view s) {
    if (s == "base") return Setting::base;
    if (s == "ssli") return Setting::ssli;
    return std::nullopt;
}

std::optional<PassageLabel> parse_label(std::string_view s) {
    for (int i = 0; i < 3; ++i) {
        if (s == kLabelNames[i]) return static_cast<PassageLabel>(i);
    }
    return std::nullopt;
}

std::string Chunk::passage_id() const { return doc_id + "#" + std::to_string(index); }

bool QAInstance::golden_absent() const {
    auto it = meta.find(std::string(kGoldenAbsentKey));
    return it != meta.end() && it->second == "true";
}

std::optional<std::size_t> QAInstance::golden_index() const {
    std::optional<std::size_t> found;
    for (std::size_t i = 0; i < contexts.size(); ++i) {
        if (contexts[i].label != PassageLabel::golden) continue;
        if (found) return std::nullopt;
        found = i;
    }
    return found;
}

bool ValidationReport::has(std::string_view code) const {
    return std::any_of(violations.begin(), violations.end(),
                       [&](const Violation& v) { return v.code == code; });
}

MalformedLine::MalformedLine(std::size_t line_no, const std::string& detail)
    : DatasetError(line_no, "line " + std::to_string(line_no) + ": malformed JSON: " + detail) {}

SchemaViolation::SchemaViolation(std::size_t line_no, std::string field, const std::string& detail)
    : DatasetError(line_no,
                   "line " + std::to_string(line_no) + ": field '" + field + "': " + detail),
      field_(std::move(field)) {}

ValidationReport validate_instance(const QAInstance& inst) {
    ValidationReport report{inst.id, {}};
    auto add = [&](std::string_view code, std::string message) {
        report.violations.push_back({std::string(code), std::move(message)});
    };

    std::size_t golden = 0;
    std::size_t distractors = 0;
    for (std::size_t i = 0; i < inst.contexts.size(); ++i) {
        const Passage& p = inst.contexts[i];
        std::string slot = "contexts[" + std::to_string(i) + "]";
        if (p.label == PassageLabel::golden) {
            ++golden;
            if (!p.source_doc) add(violation::kGoldenNoSource, slot + ": golden passage without source_doc");
        } else if (p.label == PassageLabel::distractor) {
            ++distractors;
            if (!p.pair_of && !p.source_doc) {
                add(violation::kDistractorUnlinked, slot + ": distractor without pair_of or source_doc");
            }
        }
    }

    if (golden > 1) {
        add(violation::kMultiGolden, std::to_string(golden) + " contexts labeled golden");
    } else if (golden == 0 && !inst.golden_absent()) {
        add(violation::kNoGolden, "no golden context and meta.golden_absent not set");
    }
    if (inst.setting == Setting::ssli && distractors == 0) {
        add(violation::kNoDistractor, "ssli instance without distractors");
    }
    if (inst.setting == Setting::base && distractors > 0) {
        add(violation::kBaseHasDistractor,
            "base instance with " + std::to_string(distractors) + " distractors");
    }
    return report;
}

std::vector<QAInstance> parse_dataset(std::istream& in) {
    return parse_lines<QAInstance>(in, instance_from_json);
}

std::vector<QAInstance> parse_dataset(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse_dataset(in);
}

void write_dataset(std::ostream& out, std::span<const QAInstance> instances) {
    for (const auto& inst : instances) out << instance_to_json(inst).dump() << '\n';
}

std::string serialize_dataset(std::span<const QAInstance> instances) {
    std::ostringstream out;
    write_dataset(out, instances);
    return std::move(out).str();
}

std::vector<QAInstance> load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open dataset: " + path);
    return parse_dataset(in);
}

void save_dataset(const std::string& path, std::span<const QAInstance> instances) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write dataset: " + path);
    write_dataset(out, instances);
}

std::vector<Document> parse_corpus(std::istream& in) {
    std::set<std::string> seen;
    return parse_lines<Document>(in, [&](const json& obj, std::size_t line_no) {
        if (!obj.is_object()) throw SchemaViolation(line_no, "<root>", "expected a JSON object");
        Document d;
        d.id = require_string(obj, "id", line_no);
        d.abstract = require_string(obj, "abstract", line_no);
        if (auto it = obj.find("title"); it != obj.end() && it->is_string()) {
            d.title = it->get<std::string>();
        }
        if (auto it = obj.find("metadata"); it != obj.end() && it->is_object()) {
            for (const auto& [k, v] : it->items()) d.metadata[k] = meta_value(v);
        }
        if (d.abstract.empty()) throw SchemaViolation(line_no, "abstract", "abstract is empty");
        if (!seen.insert(d.id).second) throw SchemaViolation(line_no, "id", "duplicate id " + d.id);
        return d;
    });
}

std::string serialize_corpus(std::span<const Document> docs) {
    std::string out;
    for (const auto& d : docs) {
        json obj{{"id", d.id}, {"title", d.title}, {"abstract", d.abstract}, {"metadata", d.metadata}};
        out += obj.dump();
        out += '\n';
    }
    return out;
}

std::vector<Document> load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open corpus: " + path);
    return parse_corpus(in);
}

}  // namespace deepera
