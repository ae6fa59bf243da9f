#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace mvp::text {

// A whitespace-delimited word of a document. `begin`/`end` are byte offsets
// into the source text; `norm` is the case-folded word with leading and
// trailing punctuation removed (possibly empty).
struct Token {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string norm;
};

std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);

// Number of unicode scalar values in a UTF-8 string.
std::size_t char_count(std::string_view s);

// Simple (one-to-one) unicode case folding.
std::string fold_case(std::string_view s);

bool is_space(char32_t c);
bool is_punct(char32_t c);

std::vector<Token> tokenize(std::string_view s);

// Canonical matching key of a term: folded words joined by a single space.
std::string normalize_term(std::string_view term);

// Words of a normalized term key.
std::vector<std::string> split_key(std::string_view key);

// Whole-word, case-insensitive phrase search. Returns the index of the first
// token starting a match, or npos.
std::size_t find_phrase(const std::vector<Token>& tokens, const std::vector<std::string>& words,
                        std::size_t from = 0);
bool contains_phrase(std::string_view haystack, std::string_view term);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool iequals(std::string_view a, std::string_view b);

inline constexpr std::size_t npos = static_cast<std::size_t>(-1);

}  // namespace mvp::text
