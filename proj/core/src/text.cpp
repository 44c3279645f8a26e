#include "deepera/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace deepera {

namespace {

constexpr std::array<std::string_view, 22> kAbbreviations = {
    "al", "fig", "figs", "vs", "e.g", "i.e", "eq", "eqs", "ref", "refs", "dr",
    "mr", "mrs", "ms", "prof", "approx", "cf", "vol", "no", "sec", "resp", "ca"};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool ends_with_abbreviation(std::string_view text, std::size_t dot) {
    std::size_t start = dot;
    while (start > 0 && !is_space(text[start - 1])) --start;
    std::string word;
    for (std::size_t i = start; i < dot; ++i) {
        char c = text[i];
        if (c == '(' || c == '[' || c == '"') continue;
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return std::find(kAbbreviations.begin(), kAbbreviations.end(), word) != kAbbreviations.end();
}

}  // namespace

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::vector<SentenceSpan> split_sentences(std::string_view text) {
    std::vector<SentenceSpan> out;
    std::size_t begin = 0;
    while (begin < text.size() && is_space(text[begin])) ++begin;
    if (begin == text.size()) return out;

    for (std::size_t i = begin; i < text.size(); ++i) {
        const char c = text[i];
        if (c != '.' && c != '!' && c != '?') continue;
        std::size_t next = i + 1;
        if (next >= text.size() || !is_space(text[next])) continue;
        while (next < text.size() && is_space(text[next])) ++next;
        if (next >= text.size()) break;
        if (!std::isupper(static_cast<unsigned char>(text[next]))) continue;
        if (c == '.' && ends_with_abbreviation(text, i)) continue;
        out.push_back({begin, i + 1});
        begin = next;
        i = next - 1;
    }
    std::size_t end = text.size();
    while (end > begin && is_space(text[end - 1])) --end;
    out.push_back({begin, end});
    return out;
}

std::vector<std::string> sentences_of(std::string_view text) {
    std::vector<std::string> out;
    for (const auto& s : split_sentences(text)) out.emplace_back(text.substr(s.begin, s.size()));
    return out;
}

std::size_t utf8_length(std::string_view text) {
    return static_cast<std::size_t>(std::count_if(text.begin(), text.end(), [](char c) {
        return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
    }));
}

}  // namespace deepera
