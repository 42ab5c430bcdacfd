#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

#include "fmsv/errors.hpp"

namespace fmsv {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// inverse standard normal cdf, Wichura's PPND16 rational approximations.
// one uniform in, one normal out: keeps engine consumption fixed, which the
// common-random-number tests and per-series stream splitting rely on.
inline double inverse_normal_cdf(double p) {
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) *
                    r +
                4.5921953931549871457e4) *
                   r +
               1.3731693765509461125e4) *
                  r +
              1.9715909503065514427e3) *
                 r +
             1.3314166789178437745e2) *
                r +
            3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) *
                    r +
                2.1213794301586595867e4) *
                   r +
               5.3941960214247511077e3) *
                  r +
              6.8718700749205790830e2) *
                 r +
             4.2313330701600911252e1) *
                r +
            1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) *
                   r +
               1.27045825245236838258e0) *
                  r +
              3.64784832476320460504e0) *
                 r +
             5.76949722146069140550e0) *
                r +
            4.63033784615654529590e0) *
               r +
           1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) *
                   r +
               1.48103976427480074590e-1) *
                  r +
              6.89767334985100004550e-1) *
                 r +
             1.67638483018380384940e0) *
                r +
            2.05319162663775882187e0) *
               r +
           1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) *
                   r +
               2.65321895265761230930e-2) *
                  r +
              2.96560571828504891230e-1) *
                 r +
             1.78482653991729133580e0) *
                r +
            5.46378491116411436990e0) *
               r +
           6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) *
                   r +
               7.86869131145613259100e-4) *
                  r +
              1.48753612908506148525e-2) *
                 r +
             1.36929880922735805310e-1) *
                r +
            5.99832206555887937690e-1) *
               r +
           1.0);
  }
  return q < 0.0 ? -val : val;
}

}  // namespace detail

// mt19937_64 wrapper. all sampling goes through uniform() so the number of
// engine draws per variate is deterministic (normals use the inverse cdf, not
// the variable-consumption std::normal_distribution).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(detail::splitmix64(seed)) {}

  // derive an independent stream from a master seed and a tuple of ids
  // (sweep index, step tag, series index, ...). deterministic and
  // order-sensitive, so parallel series reproduce bit-identically.
  static Rng substream(std::uint64_t master, std::initializer_list<std::uint64_t> ids) {
    std::uint64_t h = detail::splitmix64(master);
    for (std::uint64_t id : ids) h = detail::splitmix64(h ^ (id + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2)));
    return Rng(h);
  }

  // uniform on (0,1), never exactly 0 or 1.
  double uniform() {
    const std::uint64_t x = engine_();
    return (static_cast<double>(x >> 12) + 0.5) * 0x1.0p-52;
  }

  double normal() { return detail::inverse_normal_cdf(uniform()); }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  double exponential() { return -std::log(uniform()); }

  // Marsaglia-Tsang; rejection based, so only used outside the particle
  // filters where draw-count alignment does not matter.
  double gamma(double shape, double scale) {
    if (!(shape > 0.0) || !(scale > 0.0)) throw NumericalError("gamma draw needs positive shape and scale");
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = uniform();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v * scale;
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fmsv
