#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "oumwoz/error.hpp"

namespace oumwoz::stats {

inline double mean(std::span<const double> v) {
  if (v.empty()) throw Error(ErrorCode::InvalidArgument, "mean of an empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Unbiased (n - 1) sample variance.
inline double sample_variance(std::span<const double> v) {
  if (v.size() < 2) throw Error(ErrorCode::InvalidArgument, "variance needs at least two values");
  const double m = mean(v);
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

/// 1-based ranks; tied values share the average of their positions.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "pearson: length mismatch");
  const double mx = mean(x), my = mean(y);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) throw Error(ErrorCode::ConstantInput, "correlation undefined for a constant vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Pearson correlation of average-tie ranks.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "spearman: length mismatch");
  if (x.size() < 3) throw Error(ErrorCode::InvalidArgument, "spearman needs at least three pairs");
  auto rx = average_ranks(x);
  auto ry = average_ranks(y);
  return pearson(rx, ry);
}

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  return h;
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (a <= 0 || b <= 0) throw Error(ErrorCode::InvalidArgument, "incomplete_beta needs a, b > 0");
  if (x <= 0) return 0.0;
  if (x >= 1) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_cf(a, b, x) / a;
  return 1.0 - front * detail::beta_cf(b, a, 1.0 - x) / b;
}

/// P(|T| >= |t|) for Student's t with df degrees of freedom.
inline double student_t_two_sided_p(double t, double df) {
  if (df <= 0) throw Error(ErrorCode::InvalidArgument, "degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return std::clamp(incomplete_beta(df / 2.0, 0.5, x), 0.0, 1.0);
}

struct StatResult {
  double statistic = 0.0;
  double p_value = 1.0;
  double df = 0.0;
};

/// Welch's unequal-variance t-test, two-sided.
inline StatResult welch_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw Error(ErrorCode::InvalidArgument, "welch_t needs at least two values per sample");
  const double va = sample_variance(a), vb = sample_variance(b);
  if (va == 0 && vb == 0) throw Error(ErrorCode::ZeroVariance, "both samples have zero variance");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double sa = va / na, sb = vb / nb;
  StatResult r;
  r.statistic = (mean(a) - mean(b)) / std::sqrt(sa + sb);
  r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  r.p_value = student_t_two_sided_p(r.statistic, r.df);
  return r;
}

}  // namespace oumwoz::stats
