#pragma once

// Opening-up-minds questionnaire, chat-experience ratings and the per-dialogue
// OUM scores derived from them.

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oumwoz/error.hpp"

namespace oumwoz {

class LikertRating {
 public:
  static constexpr int kMin = 1;
  static constexpr int kMax = 7;

  constexpr LikertRating() = default;
  explicit LikertRating(int value) : value_(value) {
    if (value < kMin || value > kMax)
      throw Error(ErrorCode::ValidationError, "Likert rating " + std::to_string(value) + " outside [1, 7]");
  }

  constexpr int value() const { return value_; }
  constexpr bool operator==(const LikertRating&) const = default;

 private:
  int value_ = 4;
};

/// The seven OUM items. intellect = {unintelligent, irrational, ignorant};
/// morality = {unethical, immoral, bad moral character}.
struct QuestionnaireResponse {
  LikertRating good_reasons;
  std::array<LikertRating, 3> intellect;
  std::array<LikertRating, 3> morality;

  bool operator==(const QuestionnaireResponse&) const = default;

  static QuestionnaireResponse from_values(int good_reasons, std::array<int, 3> intellect,
                                           std::array<int, 3> morality) {
    QuestionnaireResponse r;
    r.good_reasons = LikertRating(good_reasons);
    for (std::size_t i = 0; i < 3; ++i) {
      r.intellect[i] = LikertRating(intellect[i]);
      r.morality[i] = LikertRating(morality[i]);
    }
    return r;
  }
};

inline constexpr std::array<std::string_view, 9> kExperienceMetrics = {
    "enjoyable", "engaging", "natural", "clear", "persuasive", "confusing", "frustrating", "too_complicated",
    "boring"};
inline constexpr std::array<std::string_view, 2> kBotOnlyExperienceMetrics = {"consistent", "knowledgeable"};

struct ExperienceRatings {
  std::map<std::string, LikertRating> ratings;

  bool operator==(const ExperienceRatings&) const = default;

  std::optional<int> get(std::string_view metric) const {
    auto it = ratings.find(std::string(metric));
    if (it == ratings.end()) return std::nullopt;
    return it->second.value();
  }

  /// Nine metrics are required; consistent/knowledgeable are accepted only
  /// for bot conditions.
  void validate(bool bot_mode) const {
    for (auto m : kExperienceMetrics)
      if (!ratings.count(std::string(m)))
        throw Error(ErrorCode::ValidationError, "experience rating '" + std::string(m) + "' missing");
    for (const auto& [key, value] : ratings) {
      bool required = false;
      for (auto m : kExperienceMetrics) required = required || key == m;
      bool bot_only = false;
      for (auto m : kBotOnlyExperienceMetrics) bot_only = bot_only || key == m;
      if (!required && !bot_only) throw Error(ErrorCode::ValidationError, "unknown experience metric '" + key + "'");
      if (bot_only && !bot_mode)
        throw Error(ErrorCode::ValidationError, "experience metric '" + key + "' only applies to bot sessions");
    }
  }
};

struct OumScores {
  double good_reasons = 0.0;
  double intellect = 0.0;
  double morality = 0.0;

  bool operator==(const OumScores&) const = default;
};

enum class OumCategory { good_reasons, morality, intellect };

inline constexpr std::array<OumCategory, 3> kOumCategories = {OumCategory::good_reasons, OumCategory::morality,
                                                              OumCategory::intellect};

constexpr std::string_view to_string(OumCategory c) {
  switch (c) {
    case OumCategory::good_reasons: return "good_reasons";
    case OumCategory::morality: return "morality";
    case OumCategory::intellect: return "intellect";
  }
  return "";
}

constexpr double score_of(const OumScores& s, OumCategory c) {
  switch (c) {
    case OumCategory::good_reasons: return s.good_reasons;
    case OumCategory::morality: return s.morality;
    case OumCategory::intellect: return s.intellect;
  }
  return 0.0;
}

/// Positive always means more open-minded: good reasons rises, the
/// intellect and morality items (negatively phrased) fall. Multi-item
/// categories average the per-item changes.
inline OumScores compute_oum_scores(const QuestionnaireResponse& pre, const QuestionnaireResponse& post) {
  OumScores s;
  s.good_reasons = post.good_reasons.value() - pre.good_reasons.value();
  double intellect = 0.0;
  double morality = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    intellect += pre.intellect[i].value() - post.intellect[i].value();
    morality += pre.morality[i].value() - post.morality[i].value();
  }
  s.intellect = intellect / 3.0;
  s.morality = morality / 3.0;
  return s;
}

enum class OumClass { zero, plus_oum, minus_oum };

constexpr std::string_view to_string(OumClass c) {
  switch (c) {
    case OumClass::zero: return "zero";
    case OumClass::plus_oum: return "plus_oum";
    case OumClass::minus_oum: return "minus_oum";
  }
  return "";
}

constexpr OumClass classify(double score) {
  if (score > 0) return OumClass::plus_oum;
  if (score < 0) return OumClass::minus_oum;
  return OumClass::zero;
}

struct CategoryAggregate {
  std::size_t count = 0;
  double pct_zero = 0.0;
  double pct_plus = 0.0;
  double pct_minus = 0.0;
  std::optional<double> mean_plus;
  std::optional<double> mean_minus;
  double overall = 0.0;
};

inline CategoryAggregate aggregate_category(std::span<const double> scores) {
  if (scores.empty()) throw Error(ErrorCode::InvalidArgument, "aggregate over an empty dialogue list");
  CategoryAggregate a;
  a.count = scores.size();
  std::size_t n_zero = 0, n_plus = 0, n_minus = 0;
  double sum = 0.0, sum_plus = 0.0, sum_minus = 0.0;
  for (double s : scores) {
    sum += s;
    switch (classify(s)) {
      case OumClass::zero: ++n_zero; break;
      case OumClass::plus_oum: ++n_plus; sum_plus += s; break;
      case OumClass::minus_oum: ++n_minus; sum_minus += s; break;
    }
  }
  const double n = static_cast<double>(scores.size());
  a.pct_zero = 100.0 * static_cast<double>(n_zero) / n;
  a.pct_plus = 100.0 * static_cast<double>(n_plus) / n;
  a.pct_minus = 100.0 * static_cast<double>(n_minus) / n;
  if (n_plus) a.mean_plus = sum_plus / static_cast<double>(n_plus);
  if (n_minus) a.mean_minus = sum_minus / static_cast<double>(n_minus);
  a.overall = sum / n;
  return a;
}

struct OumAggregate {
  CategoryAggregate good_reasons;
  CategoryAggregate morality;
  CategoryAggregate intellect;

  const CategoryAggregate& operator[](OumCategory c) const {
    switch (c) {
      case OumCategory::good_reasons: return good_reasons;
      case OumCategory::morality: return morality;
      case OumCategory::intellect: return intellect;
    }
    return good_reasons;
  }
};

inline OumAggregate aggregate(std::span<const OumScores> dialogue_scores) {
  std::vector<double> g, m, i;
  for (const auto& s : dialogue_scores) {
    g.push_back(s.good_reasons);
    m.push_back(s.morality);
    i.push_back(s.intellect);
  }
  return {aggregate_category(g), aggregate_category(m), aggregate_category(i)};
}

}  // namespace oumwoz
