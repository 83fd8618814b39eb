// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace seqgen {

/// log(0). Comparable against any finite log-probability.
inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline bool is_log_zero(double x) { return x == kLogZero; }

inline double safe_log(double p) { return p > 0.0 ? std::log(p) : kLogZero; }

/// log(sum(exp(xs))); kLogZero for an empty span or all-zero terms.
inline double log_sum_exp(std::span<const double> xs) {
  double m = kLogZero;
  for (double x : xs) m = std::max(m, x);
  if (is_log_zero(m)) return kLogZero;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

/// a - b in log space with the 0/0 and x/0 cases mapped to kLogZero.
inline double log_ratio(double a, double b) {
  if (is_log_zero(a) || is_log_zero(b)) return kLogZero;
  return a - b;
}

}  // namespace seqgen
