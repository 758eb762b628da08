#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

namespace hybridnet::text {

inline bool is_space(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}

/// Whitespace-separated token count. This is the rule behind the minimum
/// revision length and the one the participant UI mirrors.
inline std::size_t word_count(std::string_view s) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : s) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// A lower-cased word, or a clause break ("," ";" "." ":" "!" "?" and "but").
struct Token {
  std::string word;
  bool clause_break = false;
};

/// Lower-cases and splits on anything that is not a letter, digit or apostrophe.
/// Clause punctuation is kept as a break token.
inline std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    if (cur == "but" || cur == "however" || cur == "although" || cur == "though") {
      out.push_back({"", true});
    } else {
      out.push_back({cur, false});
    }
    cur.clear();
  };
  for (char ch : s) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || ch == '\'' || ch == '-') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
      if (ch == ',' || ch == ';' || ch == '.' || ch == ':' || ch == '!' || ch == '?') {
        out.push_back({"", true});
      }
    }
  }
  flush();
  return out;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace hybridnet::text
