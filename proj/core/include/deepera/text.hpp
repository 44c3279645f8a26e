#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace deepera {

// Byte range [begin, end) of one sentence. Surrounding whitespace is excluded.
struct SentenceSpan {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    bool operator==(const SentenceSpan&) const = default;
};

// Splits on '.', '!' or '?' followed by whitespace and an uppercase letter,
// unless the word ending at the '.' is a known abbreviation ("et al.",
// "Fig.", "vs.", ...). Deterministic; never drops or reorders text.
std::vector<SentenceSpan> split_sentences(std::string_view text);

std::vector<std::string> sentences_of(std::string_view text);

// Number of Unicode code points in a UTF-8 string.
std::size_t utf8_length(std::string_view text);

std::string_view trim(std::string_view s);

}  // namespace deepera
