#include "mvp/text.hpp"

#include <clocale>
#include <cwctype>
#include <locale.h>

namespace mvp::text {
namespace {

constexpr char32_t kReplacement = 0xFFFD;

// glibc ctype tables for code points beyond ASCII, independent of the
// process-global locale.
locale_t utf8_locale() {
  static const locale_t loc = [] {
    locale_t l = newlocale(LC_CTYPE_MASK, "C.UTF-8", static_cast<locale_t>(0));
    if (l == static_cast<locale_t>(0)) l = newlocale(LC_CTYPE_MASK, "C.utf8", static_cast<locale_t>(0));
    return l;
  }();
  return loc;
}

char32_t lower(char32_t c) {
  if (c < 0x80) return (c >= 'A' && c <= 'Z') ? c + 32 : c;
  locale_t loc = utf8_locale();
  if (loc == static_cast<locale_t>(0)) return c;
  return static_cast<char32_t>(towlower_l(static_cast<wint_t>(c), loc));
}

}  // namespace

namespace {

// Decodes the code point starting at byte `i`; malformed sequences yield
// U+FFFD and consume one byte.
char32_t decode_one(std::string_view s, std::size_t i, std::size_t& len) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  char32_t cp = 0;
  if (b0 < 0x80) {
    len = 1;
    return b0;
  } else if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    len = 1;
    return kReplacement;
  }
  if (i + len > s.size()) {
    len = 1;
    return kReplacement;
  }
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) {
      len = 1;
      return kReplacement;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  return cp;
}

}  // namespace

std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t len = 1;
    out.push_back(decode_one(s, i, len));
    i += len;
  }
  return out;
}

std::string encode_utf8(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t c : s) {
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
    } else if (c < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else if (c < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (c >> 12)));
      out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (c >> 18)));
      out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

std::size_t char_count(std::string_view s) { return decode_utf8(s).size(); }

std::string fold_case(std::string_view s) {
  bool ascii = true;
  for (char c : s) {
    if (static_cast<unsigned char>(c) >= 0x80) {
      ascii = false;
      break;
    }
  }
  if (ascii) {
    std::string out(s);
    for (char& c : out) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
    }
    return out;
  }
  std::u32string cps = decode_utf8(s);
  for (char32_t& c : cps) c = lower(c);
  return encode_utf8(cps);
}

bool is_space(char32_t c) {
  if (c < 0x80) return c == ' ' || (c >= '\t' && c <= '\r');
  locale_t loc = utf8_locale();
  return loc != static_cast<locale_t>(0) && iswspace_l(static_cast<wint_t>(c), loc);
}

bool is_punct(char32_t c) {
  if (c < 0x80) return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
                       (c >= '{' && c <= '~');
  locale_t loc = utf8_locale();
  return loc != static_cast<locale_t>(0) && iswpunct_l(static_cast<wint_t>(c), loc);
}

namespace {

std::string normalize_word(std::u32string_view word) {
  std::size_t b = 0;
  std::size_t e = word.size();
  while (b < e && is_punct(word[b])) ++b;
  while (e > b && is_punct(word[e - 1])) --e;
  std::u32string folded(word.substr(b, e - b));
  for (char32_t& c : folded) c = lower(c);
  return encode_utf8(folded);
}

}  // namespace

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  std::size_t word_begin = 0;
  std::u32string word;
  bool in_word = false;
  while (i < s.size()) {
    std::size_t len = 1;
    const char32_t c = decode_one(s, i, len);
    if (is_space(c)) {
      if (in_word) {
        tokens.push_back({word_begin, i, normalize_word(word)});
        word.clear();
        in_word = false;
      }
    } else {
      if (!in_word) {
        word_begin = i;
        in_word = true;
      }
      word.push_back(c);
    }
    i += len;
  }
  if (in_word) tokens.push_back({word_begin, s.size(), normalize_word(word)});
  return tokens;
}

std::string normalize_term(std::string_view term) {
  std::vector<std::string> words;
  for (const Token& t : tokenize(term)) {
    if (!t.norm.empty()) words.push_back(t.norm);
  }
  return join(words, " ");
}

std::vector<std::string> split_key(std::string_view key) { return split(key, ' '); }

std::size_t find_phrase(const std::vector<Token>& tokens, const std::vector<std::string>& words,
                        std::size_t from) {
  if (words.empty() || tokens.size() < words.size()) return npos;
  for (std::size_t i = from; i + words.size() <= tokens.size(); ++i) {
    bool match = true;
    for (std::size_t k = 0; k < words.size(); ++k) {
      if (tokens[i + k].norm != words[k]) {
        match = false;
        break;
      }
    }
    if (match) return i;
  }
  return npos;
}

bool contains_phrase(std::string_view haystack, std::string_view term) {
  const std::string key = normalize_term(term);
  if (key.empty()) return false;
  return find_phrase(tokenize(haystack), split_key(key)) != npos;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

bool iequals(std::string_view a, std::string_view b) { return fold_case(a) == fold_case(b); }

}  // namespace mvp::text
