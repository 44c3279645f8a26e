#include "deepera/prompts.hpp"

#include <sstream>

#include "deepera/digest.hpp"
#include "deepera/text.hpp"

namespace deepera {

namespace {

bool is_ident(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

std::map<std::string, PromptTemplate, std::less<>> load_all() {
    std::map<std::string, PromptTemplate, std::less<>> out;
    for (const auto& asset : detail::prompt_assets()) {
        out.emplace(asset.name, PromptTemplate::parse(asset.name, asset.source));
    }
    return out;
}

const std::map<std::string, PromptTemplate, std::less<>>& registry() {
    static const auto all = load_all();
    return all;
}

}  // namespace

std::string render_text(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            std::size_t j = i + 1;
            while (j < tmpl.size() && is_ident(tmpl[j])) ++j;
            if (j > i + 1 && j < tmpl.size() && tmpl[j] == '}') {
                std::string key(tmpl.substr(i + 1, j - i - 1));
                auto it = values.find(key);
                if (it == values.end()) throw TemplateError("no value for placeholder {" + key + "}");
                out += it->second;
                i = j + 1;
                continue;
            }
        }
        out.push_back(tmpl[i++]);
    }
    return out;
}

PromptTemplate PromptTemplate::parse(std::string_view name, std::string_view source) {
    PromptTemplate t;
    t.name = std::string(name);
    t.hash = sha256_hex(source);

    std::string* section = nullptr;
    std::istringstream in{std::string(source)};
    std::string line;
    while (std::getline(in, line)) {
        if (section == nullptr && line.starts_with("# version:")) {
            t.version = std::stoi(line.substr(10));
        } else if (line == "[system]") {
            section = &t.system;
        } else if (line == "[user]") {
            section = &t.user;
        } else if (section != nullptr) {
            *section += line;
            *section += '\n';
        }
    }
    t.system = std::string(trim(t.system));
    t.user = std::string(trim(t.user));
    if (t.user.empty()) throw TemplateError("prompt '" + t.name + "' has no [user] section");
    if (t.version < 1) throw TemplateError("prompt '" + t.name + "' has no version");
    return t;
}

std::vector<Message> PromptTemplate::render(const std::map<std::string, std::string>& values) const {
    std::vector<Message> messages;
    if (!system.empty()) messages.push_back({Role::system, render_text(system, values)});
    messages.push_back({Role::user, render_text(user, values)});
    return messages;
}

const PromptTemplate& prompt(std::string_view name) {
    const auto& all = registry();
    auto it = all.find(name);
    if (it == all.end()) throw TemplateError("unknown prompt template: " + std::string(name));
    return it->second;
}

std::map<std::string, std::string> prompt_hashes() {
    std::map<std::string, std::string> out;
    for (const auto& [name, t] : registry()) {
        out[name] = "v" + std::to_string(t.version) + ":" + t.hash;
    }
    return out;
}

}  // namespace deepera
