#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <vector>

#include "fmsv/errors.hpp"
#include "fmsv/math.hpp"
#include "fmsv/rng.hpp"
#include "fmsv/series.hpp"

namespace fmsv {

// full record of one filter pass. column t holds the period-t particles;
// ancestors(i, t-1) is the index at t-1 that particle i at t descends from.
struct ParticleSystem {
  Eigen::MatrixXd particles;    // N x T
  Eigen::MatrixXd logweights;   // N x T, unnormalized
  Eigen::MatrixXd normweights;  // N x T, each column sums to one
  Eigen::MatrixXi ancestors;    // N x (T-1)
  double logz = 0.0;            // sum_t log( (1/N) sum_i w_t^i )

  int num_particles() const { return static_cast<int>(particles.rows()); }
  int horizon() const { return static_cast<int>(particles.cols()); }
};

namespace detail {

// normalize one weight column in place; returns that period's contribution
// to log Z. throws if every weight underflowed.
inline double normalize_weights(ParticleSystem& sys, int t) {
  const int n = sys.num_particles();
  const double* lw = sys.logweights.col(t).data();
  const double lse = logsumexp(std::span<const double>(lw, static_cast<std::size_t>(n)));
  if (!std::isfinite(lse)) throw ParticleCollapse(t);
  double* nw = sys.normweights.col(t).data();
  for (int i = 0; i < n; ++i) nw[i] = std::exp(lw[i] - lse);
  return lse - std::log(static_cast<double>(n));
}

inline void check_normalized(const double* w, int n) {
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!(w[i] >= 0.0)) throw NumericalError("resampling weights must be nonnegative");
    sum += w[i];
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw NumericalError("resampling weights must sum to one");
}

// the common stratified walk: grid points (j+u)/N against the cumulative
// weights, emitting nondecreasing indices. weight segments are half-open
// [lo, hi), so a point on a boundary belongs to the upper segment and a
// zero-weight particle is never emitted.
inline void systematic_walk(const double* w, int n, double u, int* out) {
  double cum = w[0];
  int i = 0;
  for (int j = 0; j < n; ++j) {
    const double point = (static_cast<double>(j) + u) / static_cast<double>(n);
    while (point >= cum && i < n - 1) {
      ++i;
      cum += w[i];
    }
    out[j] = i;
  }
}

}  // namespace detail

// systematic resampling with a caller-supplied offset u in [0,1).
inline void systematic_resample(const double* weights, int n, double u, int* out) {
  detail::check_normalized(weights, n);
  detail::systematic_walk(weights, n, u, out);
}

inline std::vector<int> systematic_resample(const Eigen::VectorXd& weights, double u) {
  std::vector<int> out(weights.size());
  systematic_resample(weights.data(), static_cast<int>(weights.size()), u, out.data());
  return out;
}

// conditional variant: the offset is drawn so that `pinned` survives, and one
// of its copies is routed to `slot`. marginally the counts follow the
// unconditional systematic scheme given survival of the pinned index.
inline void conditional_systematic_resample(const double* weights, int n, int pinned, int slot,
                                            Rng& rng, int* out) {
  detail::check_normalized(weights, n);
  if (pinned < 0 || pinned >= n || slot < 0 || slot >= n)
    throw NumericalError("pinned index or slot out of range");
  if (weights[pinned] <= 0.0) throw NumericalError("pinned particle has zero weight");

  double lo = 0.0;
  for (int i = 0; i < pinned; ++i) lo += weights[i];
  // uniform location inside the pinned particle's weight segment; the grid
  // offset that puts a point exactly there is its fractional part times N.
  double ustar = lo + rng.uniform() * weights[pinned];
  ustar = std::min(ustar, std::nextafter(1.0, 0.0));
  const double scaled = static_cast<double>(n) * ustar;
  int jstar = static_cast<int>(std::floor(scaled));
  if (jstar >= n) jstar = n - 1;
  const double u = scaled - std::floor(scaled);

  std::vector<int> draws(n);
  detail::systematic_walk(weights, n, u, draws.data());
  draws[jstar] = pinned;  // guard against boundary rounding

  out[slot] = pinned;
  int pos = 0;
  for (int j = 0; j < n; ++j) {
    if (j == jstar) continue;
    if (pos == slot) ++pos;
    out[pos++] = draws[j];
  }
}

// bootstrap particle filter: proposals are the model's initial and transition
// samplers, resampling every period, weights are the measurement densities.
template <SeriesModel M>
ParticleSystem bootstrap_pf(const M& model, int n, Rng& rng) {
  if (n < 1) throw UsageError("need at least one particle");
  const int T = model.horizon();
  ParticleSystem sys;
  sys.particles.resize(n, T);
  sys.logweights.resize(n, T);
  sys.normweights.resize(n, T);
  sys.ancestors.resize(n, T - 1);

  for (int i = 0; i < n; ++i) {
    const double h = model.sample_initial(rng);
    sys.particles(i, 0) = h;
    sys.logweights(i, 0) = model.measurement_logdensity(0, h, 0.0);
  }
  sys.logz = detail::normalize_weights(sys, 0);

  for (int t = 1; t < T; ++t) {
    const double u = rng.uniform();
    detail::systematic_walk(sys.normweights.col(t - 1).data(), n, u, sys.ancestors.col(t - 1).data());
    for (int i = 0; i < n; ++i) {
      const double hp = sys.particles(sys.ancestors(i, t - 1), t - 1);
      const double h = model.sample_transition(hp, rng);
      sys.particles(i, t) = h;
      sys.logweights(i, t) = model.measurement_logdensity(t, h, hp);
    }
    sys.logz += detail::normalize_weights(sys, t);
  }
  return sys;
}

namespace detail {

// shared body of the two conditional kernels. the reference path occupies the
// last slot at every period; when `ancestor_sampling` is set, the reference
// slot's ancestor is redrawn from w_{t-1}^i p(h_t^ref | h_{t-1}^i) instead of
// staying pinned.
template <SeriesModel M>
ParticleSystem conditional_kernel(const M& model, const Eigen::VectorXd& ref, int n, Rng& rng,
                                  bool ancestor_sampling) {
  if (n < 2) throw UsageError("conditional filters need at least two particles");
  const int T = model.horizon();
  if (static_cast<int>(ref.size()) != T) throw UsageError("reference path length must match the horizon");
  const int last = n - 1;

  ParticleSystem sys;
  sys.particles.resize(n, T);
  sys.logweights.resize(n, T);
  sys.normweights.resize(n, T);
  sys.ancestors.resize(n, T - 1);

  for (int i = 0; i < last; ++i) sys.particles(i, 0) = model.sample_initial(rng);
  sys.particles(last, 0) = ref(0);
  for (int i = 0; i < n; ++i)
    sys.logweights(i, 0) = model.measurement_logdensity(0, sys.particles(i, 0), 0.0);
  sys.logz = normalize_weights(sys, 0);

  std::vector<double> asw(ancestor_sampling ? n : 0);
  for (int t = 1; t < T; ++t) {
    conditional_systematic_resample(sys.normweights.col(t - 1).data(), n, last, last, rng,
                                    sys.ancestors.col(t - 1).data());
    if (ancestor_sampling) {
      for (int i = 0; i < n; ++i)
        asw[i] = sys.logweights(i, t - 1) +
                 model.transition_logdensity(ref(t), sys.particles(i, t - 1));
      const double lse = logsumexp(std::span<const double>(asw.data(), asw.size()));
      if (!std::isfinite(lse)) throw ParticleCollapse(t - 1);
      const double u = rng.uniform();
      double cum = 0.0;
      int pick = n - 1;
      for (int i = 0; i < n; ++i) {
        cum += std::exp(asw[i] - lse);
        if (u <= cum) {
          pick = i;
          break;
        }
      }
      sys.ancestors(last, t - 1) = pick;
    }
    for (int i = 0; i < last; ++i) {
      const double hp = sys.particles(sys.ancestors(i, t - 1), t - 1);
      sys.particles(i, t) = model.sample_transition(hp, rng);
    }
    sys.particles(last, t) = ref(t);
    for (int i = 0; i < n; ++i) {
      const double hp = sys.particles(sys.ancestors(i, t - 1), t - 1);
      sys.logweights(i, t) = model.measurement_logdensity(t, sys.particles(i, t), hp);
    }
    sys.logz += normalize_weights(sys, t);
  }
  return sys;
}

}  // namespace detail

template <SeriesModel M>
ParticleSystem conditional_smc(const M& model, const Eigen::VectorXd& ref, int n, Rng& rng) {
  return detail::conditional_kernel(model, ref, n, rng, false);
}

template <SeriesModel M>
ParticleSystem csmc_ancestor_sampling(const M& model, const Eigen::VectorXd& ref, int n, Rng& rng) {
  return detail::conditional_kernel(model, ref, n, rng, true);
}

// follow ancestor links back from terminal particle j.
inline Eigen::VectorXd ancestral_trace(const ParticleSystem& sys, int j) {
  const int T = sys.horizon();
  if (j < 0 || j >= sys.num_particles()) throw UsageError("trajectory index out of range");
  Eigen::VectorXd path(T);
  int idx = j;
  path(T - 1) = sys.particles(idx, T - 1);
  for (int t = T - 2; t >= 0; --t) {
    idx = sys.ancestors(idx, t);
    path(t) = sys.particles(idx, t);
  }
  return path;
}

// categorical draw from the terminal normalized weights.
inline int sample_trajectory_index(const ParticleSystem& sys, Rng& rng) {
  const int n = sys.num_particles();
  const int T = sys.horizon();
  const double u = rng.uniform();
  double cum = 0.0;
  for (int i = 0; i < n; ++i) {
    cum += sys.normweights(i, T - 1);
    if (u <= cum) return i;
  }
  return n - 1;
}

}  // namespace fmsv
