#pragma once

#include <algorithm>
#include <cmath>

#include "fmsv/errors.hpp"
#include "fmsv/math.hpp"
#include "fmsv/rng.hpp"

// generalized inverse Gaussian sampler for the kernel
//
//   p(x) proportional to x^(m-1) exp(-(k x + l / x) / 2),   x > 0
//
// three regimes on the standardized form z^(m-1) exp(-omega (z + 1/z) / 2),
// omega = sqrt(k l): ratio-of-uniforms around the shifted mode when the
// density is sharp, plain ratio-of-uniforms in the middle, and a three-piece
// bound rejection when omega is small and m < 1 (where the density is too
// flat for ratio-of-uniforms to cover efficiently). negative orders go
// through the reciprocal identity 1/X ~ GIG(-m, l, k).

namespace fmsv {

namespace gig_detail {

constexpr int max_retries = 1000;

inline double logkernel(double m, double om, double z) {
  return (m - 1.0) * std::log(z) - 0.5 * om * (z + 1.0 / z);
}

// mode of the standardized kernel, written to avoid cancellation when m < 1.
inline double mode(double m, double om) {
  if (m >= 1.0) return ((m - 1.0) + std::sqrt(sq(m - 1.0) + om * om)) / om;
  return om / ((1.0 - m) + std::sqrt(sq(1.0 - m) + om * om));
}

inline double rou_noshift(double m, double om, Rng& rng) {
  const double zm = mode(m, om);
  const double lfm = logkernel(m, om, zm);
  // maximizer of z * sqrt(kernel), same quadratic with m+1 in place of m-1
  const double xp = ((m + 1.0) + std::sqrt(sq(m + 1.0) + om * om)) / om;
  const double umax = xp * std::exp(0.5 * (logkernel(m, om, xp) - lfm));
  for (int it = 0; it < max_retries; ++it) {
    const double u = umax * rng.uniform();
    const double v = rng.uniform();
    const double z = u / v;
    if (2.0 * std::log(v) <= logkernel(m, om, z) - lfm) return z;
  }
  throw NumericalError("gig sampler exhausted retries (ratio of uniforms)");
}

inline double rou_shift(double m, double om, Rng& rng) {
  const double zm = mode(m, om);
  const double lfm = logkernel(m, om, zm);
  // extrema of (z - zm) sqrt(kernel) solve z^3 + a z^2 + b z + c = 0
  const double a = -(2.0 * (m + 1.0) / om + zm);
  const double b = 2.0 * (m - 1.0) * zm / om - 1.0;
  const double c = zm;
  const double p = b - a * a / 3.0;
  const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
  if (!(p < 0.0)) return rou_noshift(m, om, rng);  // degenerate, fall back
  const double r = std::sqrt(-p / 3.0);
  const double cosarg = std::clamp(-q / (2.0 * r * r * r), -1.0, 1.0);
  const double phi = std::acos(cosarg);
  double roots[3];
  for (int i = 0; i < 3; ++i)
    roots[i] = 2.0 * r * std::cos((phi + 2.0 * M_PI * i) / 3.0) - a / 3.0;
  std::sort(roots, roots + 3);
  const double xminus = std::max(roots[1], 1e-300);
  const double xplus = roots[2];
  const double um = (xminus - zm) * std::exp(0.5 * (logkernel(m, om, xminus) - lfm));
  const double up = (xplus - zm) * std::exp(0.5 * (logkernel(m, om, xplus) - lfm));
  for (int it = 0; it < max_retries; ++it) {
    const double u = um + rng.uniform() * (up - um);
    const double v = rng.uniform();
    const double z = u / v + zm;
    if (z <= 0.0) continue;
    if (2.0 * std::log(v) <= logkernel(m, om, z) - lfm) return z;
  }
  throw NumericalError("gig sampler exhausted retries (shifted ratio of uniforms)");
}

// m in [0,1), omega small. proposal pieces: the kernel maximum as a constant
// bound near zero, the envelope exp(-omega) z^(m-1) in the middle (z + 1/z
// >= 2), and an exponential tail beyond 2/omega where z^(m-1) is decreasing.
inline double three_piece(double m, double om, Rng& rng) {
  const double zm = mode(m, om);
  const double lfm = logkernel(m, om, zm);
  const double x0 = om / (1.0 - m);
  const double x1 = std::max(x0, 2.0 / om);

  const double a0 = std::exp(lfm) * x0;
  double a1 = 0.0;
  if (x1 > x0) {
    a1 = m > 1e-12 ? std::exp(-om) * (std::pow(x1, m) - std::pow(x0, m)) / m
                   : std::exp(-om) * std::log(x1 / x0);
  }
  const double a2 = std::pow(x1, m - 1.0) * (2.0 / om) * std::exp(-0.5 * om * x1);
  const double total = a0 + a1 + a2;

  for (int it = 0; it < max_retries; ++it) {
    const double u = total * rng.uniform();
    double z, logbound;
    if (u <= a0) {
      z = x0 * (u / a0);
      logbound = lfm;
    } else if (u <= a0 + a1) {
      const double w = (u - a0) / a1;
      z = m > 1e-12 ? std::pow(std::pow(x0, m) + w * (std::pow(x1, m) - std::pow(x0, m)), 1.0 / m)
                    : x0 * std::exp(w * std::log(x1 / x0));
      logbound = -om + (m - 1.0) * std::log(z);
    } else {
      const double w = (u - a0 - a1) / a2;
      z = x1 - (2.0 / om) * std::log1p(-w);
      logbound = (m - 1.0) * std::log(x1) - 0.5 * om * z;
    }
    if (std::log(rng.uniform()) <= logkernel(m, om, z) - logbound) return z;
  }
  throw NumericalError("gig sampler exhausted retries (small-omega bounds)");
}

inline double standardized(double m, double om, Rng& rng) {
  if (m > 2.0 || om > 3.0) return rou_shift(m, om, rng);
  if (m >= 1.0 - 2.25 * om * om || om > 0.2) return rou_noshift(m, om, rng);
  return three_piece(m, om, rng);
}

}  // namespace gig_detail

inline double gig_sample(double m, double k, double l, Rng& rng) {
  if (!(k > 0.0) || !(l >= 0.0) || !std::isfinite(m) || !std::isfinite(k) || !std::isfinite(l))
    throw NumericalError("gig sampler needs k > 0 and l >= 0");
  if (l == 0.0) {
    if (!(m > 0.0)) throw NumericalError("gig kernel not integrable with l = 0 and m <= 0");
    return rng.gamma(m, 2.0 / k);
  }
  if (m < 0.0) return 1.0 / gig_sample(-m, l, k, rng);
  const double om = std::sqrt(k * l);
  const double scale = std::sqrt(l / k);
  return scale * gig_detail::standardized(m, om, rng);
}

}  // namespace fmsv
