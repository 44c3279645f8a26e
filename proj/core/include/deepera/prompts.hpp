#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "deepera/gateway.hpp"

namespace deepera {

class TemplateError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A versioned prompt with [system] and [user] sections and {name} placeholders.
struct PromptTemplate {
    std::string name;
    int version = 0;
    std::string system;
    std::string user;
    std::string hash;  // sha256 of the asset source

    // Throws TemplateError when a placeholder has no value.
    std::vector<Message> render(const std::map<std::string, std::string>& values) const;

    static PromptTemplate parse(std::string_view name, std::string_view source);
};

// Replaces every {identifier} ([a-z_]+) placeholder; other braces are literal.
std::string render_text(std::string_view tmpl, const std::map<std::string, std::string>& values);

// Bundled templates: intent, score, score_raw, summarize, generate, judge,
// extract, qa, guidance, distractor.
const PromptTemplate& prompt(std::string_view name);

// name -> "v<version>:<sha256>" for every bundled template.
std::map<std::string, std::string> prompt_hashes();

namespace detail {
struct PromptAsset {
    const char* name;
    const char* source;
};
const std::vector<PromptAsset>& prompt_assets();
}  // namespace detail

}  // namespace deepera
