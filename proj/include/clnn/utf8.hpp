#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace clnn::utf8 {

// Length in bytes of the sequence starting at s[i], or nullopt if it is not
// well-formed UTF-8 (overlongs, surrogates and values above U+10FFFF rejected).
inline std::optional<std::size_t> sequence_length(std::string_view s, std::size_t i,
                                                  char32_t* cp = nullptr) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  std::size_t len;
  char32_t v;
  if (b0 < 0x80) {
    if (cp) *cp = b0;
    return 1;
  } else if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    v = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    v = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    v = b0 & 0x07;
  } else {
    return std::nullopt;
  }
  if (i + len > s.size()) return std::nullopt;
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return std::nullopt;
    v = (v << 6) | (b & 0x3F);
  }
  static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
  if (v < kMin[len] || v > 0x10FFFF || (v >= 0xD800 && v <= 0xDFFF)) return std::nullopt;
  if (cp) *cp = v;
  return len;
}

inline bool is_valid(std::string_view s) {
  for (std::size_t i = 0; i < s.size();) {
    auto n = sequence_length(s, i);
    if (!n) return false;
    i += *n;
  }
  return true;
}

inline bool is_space(char32_t c) {
  switch (c) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000: case 0xFEFF:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

// Splits into one string per code point. Input must be valid UTF-8.
inline std::vector<std::string> chars(std::string_view s) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < s.size();) {
    auto n = sequence_length(s, i).value_or(1);
    out.emplace_back(s.substr(i, n));
    i += n;
  }
  return out;
}

inline std::size_t length(std::string_view s) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < s.size(); ++n) i += sequence_length(s, i).value_or(1);
  return n;
}

// Splits on runs of Unicode whitespace; never yields empty tokens.
inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> words;
  std::string cur;
  for (std::size_t i = 0; i < s.size();) {
    char32_t cp = 0;
    auto n = sequence_length(s, i, &cp).value_or(1);
    if (is_space(cp)) {
      if (!cur.empty()) words.push_back(std::move(cur)), cur.clear();
    } else {
      cur.append(s.substr(i, n));
    }
    i += n;
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

inline std::string strip_spaces(std::string_view s) {
  std::string out;
  for (auto& w : split_words(s)) out += w;
  return out;
}

}  // namespace clnn::utf8
