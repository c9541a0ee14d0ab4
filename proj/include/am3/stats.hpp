#pragma once

#include <cmath>
#include <span>

#include "am3/errors.hpp"

namespace am3 {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double total = 0.0;
  for (double x : xs) total += x;
  return total / static_cast<double>(xs.size());
}

/// Standard deviation with the n - 1 denominator; 0 for fewer than two values.
inline double sample_stddev(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

/// Standard deviation with the n denominator.
inline double population_stddev(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size()));
}

/// 1.96 * sample_stddev / sqrt(n). Zero when n < 2.
inline double ci95_halfwidth(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  return 1.96 * sample_stddev(xs) / std::sqrt(static_cast<double>(xs.size()));
}

/// 2su / (s + u), or 0 when both are 0.
inline double harmonic_accuracy(double seen, double unseen) {
  if (!(seen >= 0.0 && seen <= 1.0 && unseen >= 0.0 && unseen <= 1.0)) {
    throw ConfigError("accuracies must lie in [0, 1]");
  }
  if (seen + unseen == 0.0) return 0.0;
  return 2.0 * seen * unseen / (seen + unseen);
}

}  // namespace am3
