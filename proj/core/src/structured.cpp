#include <algorithm>
#include <cmath>
#include <optional>

#include "deepera/gateway.hpp"

namespace deepera {

using nlohmann::json;

namespace {

std::optional<json> parse_object(std::string_view text) {
    json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    return j;
}

// Removes ``` / ```json fence lines, keeping whatever lies between them.
std::string strip_fences(std::string_view text) {
    std::string out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos
                                                                              : eol - pos);
        std::size_t first = line.find_first_not_of(" \t\r");
        bool fence = first != std::string_view::npos && line.substr(first).starts_with("```");
        if (!fence) {
            out.append(line);
            out.push_back('\n');
        }
        if (eol == std::string_view::npos) break;
        pos = eol + 1;
    }
    return out;
}

// First balanced {...} block, honoring JSON string literals and escapes.
std::optional<std::string_view> first_balanced_object(std::string_view text) {
    std::size_t start = text.find('{');
    while (start != std::string_view::npos) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            char c = text[i];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}') {
                if (--depth == 0) return text.substr(start, i - start + 1);
            }
        }
        // Unbalanced from this brace; try the next one.
        start = text.find('{', start + 1);
    }
    return std::nullopt;
}

bool enum_accepts(const SchemaField& f, const json& v) {
    std::string token;
    if (v.is_string()) {
        token = v.get<std::string>();
    } else if (v.is_number_integer()) {
        token = std::to_string(v.get<long long>());
    } else if (v.is_number_float()) {
        double d = v.get<double>();
        if (std::floor(d) != d) return false;
        token = std::to_string(static_cast<long long>(d));
    } else {
        return false;
    }
    return std::find(f.enum_values.begin(), f.enum_values.end(), token) != f.enum_values.end();
}

void check_field(const SchemaField& f, const json& obj, std::string_view raw) {
    auto it = obj.find(f.name);
    if (it == obj.end()) throw SchemaParseError(std::string(raw), "missing field '" + f.name + "'");
    const json& v = *it;
    bool ok = false;
    switch (f.kind) {
        case FieldKind::string: ok = v.is_string(); break;
        case FieldKind::number: ok = v.is_number(); break;
        case FieldKind::enumeration: ok = enum_accepts(f, v); break;
        case FieldKind::list: ok = v.is_array(); break;
    }
    if (!ok) throw SchemaParseError(std::string(raw), "field '" + f.name + "' has the wrong kind or value");
}

}  // namespace

FieldMap parse_structured(std::string_view content, const SchemaSpec& schema) {
    std::optional<json> obj = parse_object(content);
    if (!obj) {
        std::string unfenced = strip_fences(content);
        if (auto block = first_balanced_object(unfenced)) obj = parse_object(*block);
    }
    if (!obj) throw SchemaParseError(std::string(content), "no JSON object found");

    for (const auto& f : schema.required_fields) check_field(f, *obj, content);

    FieldMap out;
    for (auto& [k, v] : obj->items()) out.emplace(k, v);
    return out;
}

}  // namespace deepera
