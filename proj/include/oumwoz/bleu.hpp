#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace oumwoz {

namespace detail {

inline std::map<std::vector<std::string>, int> ngram_counts(std::span<const std::string> toks, std::size_t n) {
  std::map<std::vector<std::string>, int> counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++counts[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
  return counts;
}

}  // namespace detail

/// Sentence-level BLEU with add-one smoothing on every n-gram precision:
///   p_n = (clipped matches + 1) / (candidate n-grams + 1)
/// geometric mean over n = 1..max_n, times exp(min(0, 1 - |ref|/|cand|)).
/// An empty candidate scores 0.
inline double sentence_bleu(std::span<const std::string> candidate, std::span<const std::string> reference,
                            int max_n = 4) {
  if (candidate.empty() || max_n < 1) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    auto cand = detail::ngram_counts(candidate, static_cast<std::size_t>(n));
    auto ref = detail::ngram_counts(reference, static_cast<std::size_t>(n));
    long matches = 0;
    long total = 0;
    for (const auto& [gram, count] : cand) {
      total += count;
      if (auto it = ref.find(gram); it != ref.end()) matches += std::min(count, it->second);
    }
    log_sum += std::log(static_cast<double>(matches + 1) / static_cast<double>(total + 1));
  }
  double log_bp = std::min(0.0, 1.0 - static_cast<double>(reference.size()) / static_cast<double>(candidate.size()));
  return std::exp(log_sum / max_n + log_bp);
}

/// Max over per-reference scores; 0 when there are no references.
inline double max_sentence_bleu(std::span<const std::string> candidate,
                                const std::vector<std::vector<std::string>>& references, int max_n = 4) {
  double best = 0.0;
  for (const auto& r : references) best = std::max(best, sentence_bleu(candidate, r, max_n));
  return best;
}

}  // namespace oumwoz
