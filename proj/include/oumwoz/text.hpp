#pragma once

// Tokenization, term preprocessing and the small rule-based detectors used
// by retrieval, the responder and analytics.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "oumwoz/io.hpp"
#include "oumwoz/porter_stemmer.hpp"

namespace oumwoz {

namespace detail {

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

// Decodes UTF-8; invalid bytes decode to U+FFFD.
inline std::vector<char32_t> decode_utf8(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    auto c = static_cast<unsigned char>(s[i]);
    int len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 0;
    if (len == 0 || i + static_cast<std::size_t>(len) > s.size()) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    char32_t cp = len == 1 ? c : len == 2 ? (c & 0x1F) : len == 3 ? (c & 0x0F) : (c & 0x07);
    bool ok = true;
    for (int k = 1; k < len; ++k) {
      auto cc = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
      if ((cc >> 6) != 0x2) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (cc & 0x3F);
    }
    if (!ok) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += static_cast<std::size_t>(len);
  }
  return out;
}

inline bool is_apostrophe(char32_t cp) { return cp == U'\'' || cp == 0x2019 || cp == 0x02BC; }

// Word characters: ASCII alphanumerics plus every non-ASCII code point
// outside the punctuation, symbol, space and emoji blocks.
inline bool is_word_char(char32_t cp) {
  if (cp < 0x80) return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
  if (cp >= 0x80 && cp <= 0xBF) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;
  if (cp == 0xD7 || cp == 0xF7) return false;
  if (cp >= 0x2000 && cp <= 0x2BFF) return false;
  if (cp >= 0x3000 && cp <= 0x303F) return false;
  if (cp >= 0xFE00 && cp <= 0xFE0F) return false;
  if (cp >= 0xFF00 && cp <= 0xFF0F) return false;
  if (cp >= 0xFF1A && cp <= 0xFF20) return false;
  if (cp >= 0x1F000 && cp <= 0x1FAFF) return false;
  if (cp == 0xFFFD) return false;
  return true;
}

inline char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 32;
  if ((cp >= 0xC0 && cp <= 0xDE && cp != 0xD7)) return cp + 32;
  if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 32;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 32;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
  return cp;
}

}  // namespace detail

/// Splits on non-word boundaries. An apostrophe between two word characters
/// stays inside the token ("don't"); curly apostrophes are normalized to '.
inline std::vector<std::string> tokenize(std::string_view text, bool lowercase = true) {
  auto cps = detail::decode_utf8(text);
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < cps.size(); ++i) {
    char32_t cp = cps[i];
    if (detail::is_word_char(cp)) {
      detail::append_utf8(cur, lowercase ? detail::to_lower(cp) : cp);
    } else if (detail::is_apostrophe(cp) && !cur.empty() && i + 1 < cps.size() &&
               detail::is_word_char(cps[i + 1])) {
      cur += '\'';
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::size_t word_count(std::string_view text) { return tokenize(text, false).size(); }

inline const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> words = {
      "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "you're", "you've", "you'll",
      "you'd", "your", "yours", "yourself", "yourselves", "he", "him", "his", "himself", "she", "she's", "her",
      "hers", "herself", "it", "it's", "its", "itself", "they", "them", "their", "theirs", "themselves", "what",
      "which", "who", "whom", "this", "that", "that'll", "these", "those", "am", "is", "are", "was", "were", "be",
      "been", "being", "have", "has", "had", "having", "do", "does", "did", "doing", "a", "an", "the", "and",
      "but", "if", "or", "because", "as", "until", "while", "of", "at", "by", "for", "with", "about", "against",
      "between", "into", "through", "during", "before", "after", "above", "below", "to", "from", "up", "down",
      "in", "out", "on", "off", "over", "under", "again", "further", "then", "once", "here", "there", "when",
      "where", "why", "how", "all", "any", "both", "each", "few", "more", "most", "other", "some", "such", "no",
      "nor", "not", "only", "own", "same", "so", "than", "too", "very", "s", "t", "can", "will", "just", "don",
      "don't", "should", "should've", "now", "d", "ll", "m", "o", "re", "ve", "y", "ain", "aren", "aren't",
      "couldn", "couldn't", "didn", "didn't", "doesn", "doesn't", "hadn", "hadn't", "hasn", "hasn't", "haven",
      "haven't", "isn", "isn't", "ma", "mightn", "mightn't", "mustn", "mustn't", "needn", "needn't", "shan",
      "shan't", "shouldn", "shouldn't", "wasn", "wasn't", "weren", "weren't", "won", "won't", "wouldn",
      "wouldn't"};
  return words;
}

/// Stopword file: one lowercase token per line, '#' comments allowed.
inline std::set<std::string> load_stopwords(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  return {lines.begin(), lines.end()};
}

struct TokenPipelineConfig {
  bool lowercase = true;
  bool stem = true;
  std::set<std::string> stopwords = default_stopwords();

  bool operator==(const TokenPipelineConfig&) const = default;

  /// Stable across processes; stored alongside every index built with this config.
  std::string fingerprint() const {
    std::string canon = std::string("lowercase=") + (lowercase ? "1" : "0") + ";stem=" + (stem ? "1" : "0") +
                        ";stopwords=";
    for (const auto& w : stopwords) {
      canon += w;
      canon += '\n';
    }
    return hex64(fnv1a64(canon));
  }
};

/// tokenize -> lowercase -> drop stopwords -> stem, order preserved.
inline std::vector<std::string> preprocess(std::string_view text, const TokenPipelineConfig& config = {}) {
  std::vector<std::string> out;
  for (auto& tok : tokenize(text, config.lowercase)) {
    if (config.stopwords.count(tok)) continue;
    out.push_back(config.stem ? porter_stem(tok) : std::move(tok));
  }
  return out;
}

inline std::string trim_copy(std::string_view s) {
  auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

/// Rule-based stand-in for parser-based question identification.
inline bool is_question(std::string_view sentence) {
  static constexpr std::array<std::string_view, 17> cues = {"what", "why", "how",   "do",    "does",  "did",
                                                            "are",  "is",  "can",   "could", "would", "have",
                                                            "has",  "who", "where", "when",  "which"};
  auto s = trim_copy(sentence);
  if (s.empty()) return false;
  if (s.back() == '?') return true;
  if (s.size() >= 3 && s.compare(s.size() - 3, 3, "\xEF\xBC\x9F") == 0) return true;  // U+FF1F
  auto space = s.find_first_of(" \t");
  if (space == std::string::npos) return false;
  std::string first = s.substr(0, space);
  std::transform(first.begin(), first.end(), first.begin(), [](unsigned char c) { return std::tolower(c); });
  return std::find(cues.begin(), cues.end(), first) != cues.end();
}

/// Sentence split on '.', '!' and '?'; the terminator stays with its sentence.
inline std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    cur += c;
    if (c == '.' || c == '!' || c == '?') {
      while (i + 1 < text.size() && (text[i + 1] == '.' || text[i + 1] == '!' || text[i + 1] == '?')) {
        cur += text[++i];
      }
      auto t = trim_copy(cur);
      if (!tokenize(t).empty()) out.push_back(t);
      cur.clear();
    }
  }
  auto t = trim_copy(cur);
  if (!tokenize(t).empty()) out.push_back(t);
  return out;
}

}  // namespace oumwoz
