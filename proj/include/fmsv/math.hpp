#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace fmsv {

inline constexpr double log_2pi = 1.8378770664093454836;

// sentinel for densities evaluated outside their support. callers treat it as
// an ordinary value (metropolis ratios reject naturally), never as an error.
inline constexpr double log_zero = -std::numeric_limits<double>::infinity();

inline bool is_log_zero(double x) { return x == log_zero; }

inline double sq(double x) { return x * x; }

// variances are clamped before division/log so that a degenerate input gives a
// huge-but-finite penalty instead of nan.
inline constexpr double variance_floor = 1e-300;

inline double normal_logpdf(double x, double mean, double var) {
  const double v = std::max(var, variance_floor);
  return -0.5 * (log_2pi + std::log(v) + sq(x - mean) / v);
}

// log(sum exp(x_i)) with max shift; returns log_zero when every term is log-zero.
inline double logsumexp(std::span<const double> x) {
  double m = log_zero;
  for (double v : x) m = std::max(m, v);
  if (is_log_zero(m) || !std::isfinite(m)) return m;
  double acc = 0.0;
  for (double v : x) acc += std::exp(v - m);
  return m + std::log(acc);
}

// gamma density with shape/rate convention, log scale.
inline double gamma_logpdf(double x, double shape, double rate) {
  if (x <= 0.0) return log_zero;
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

inline double inverse_gamma_logpdf(double x, double shape, double scale) {
  if (x <= 0.0) return log_zero;
  return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

}  // namespace fmsv
