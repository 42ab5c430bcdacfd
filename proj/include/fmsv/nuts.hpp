#pragma once

#include <cmath>
#include <utility>

#include "fmsv/errors.hpp"
#include "fmsv/math.hpp"
#include "fmsv/rng.hpp"

// scalar no-u-turn sampler with dual-averaging step size adaptation, used for
// the leverage correlations on their unconstrained (atanh) scale. the target
// callable returns {log density, gradient}.

namespace fmsv {

template <class F>
concept LogDensityFn = requires(F f, double x) {
  { f(x) } -> std::convertible_to<std::pair<double, double>>;
};

struct PhasePoint {
  double theta = 0.0;
  double r = 0.0;
  double logp = 0.0;
  double grad = 0.0;

  double joint() const { return logp - 0.5 * r * r; }
  bool finite() const { return std::isfinite(logp) && std::isfinite(grad); }
};

template <LogDensityFn F>
PhasePoint leapfrog(F&& f, const PhasePoint& z, double eps) {
  PhasePoint out;
  const double r_half = z.r + 0.5 * eps * z.grad;
  out.theta = z.theta + eps * r_half;
  auto [lp, g] = f(out.theta);
  out.logp = lp;
  out.grad = g;
  out.r = r_half + 0.5 * eps * g;
  return out;
}

// plain hamiltonian update with a fixed number of leapfrog steps. L = 0
// degenerates to an accept of the current point (test hook).
template <LogDensityFn F>
std::pair<double, bool> hmc_fixed_update(F&& f, double theta, double eps, int steps, Rng& rng) {
  auto [lp0, g0] = f(theta);
  PhasePoint z{theta, rng.normal(), lp0, g0};
  const double joint0 = z.joint();
  PhasePoint zi = z;
  for (int l = 0; l < steps; ++l) {
    zi = leapfrog(f, zi, eps);
    if (!zi.finite()) return {theta, false};
  }
  const double logalpha = zi.joint() - joint0;
  if (std::log(rng.uniform()) < logalpha) return {zi.theta, true};
  return {theta, false};
}

struct NutsStats {
  double accept_stat = 0.0;  // mean metropolis weight over the trajectory
  int depth = 0;
  bool divergent = false;
  bool moved = false;
};

namespace nuts_detail {

constexpr double divergence_gap = 1000.0;

struct Tree {
  PhasePoint minus, plus;
  double theta_sel = 0.0;
  double n = 0.0;
  bool valid = true;
  double alpha_sum = 0.0;
  double n_alpha = 0.0;
};

inline bool no_uturn(const PhasePoint& minus, const PhasePoint& plus) {
  const double span = plus.theta - minus.theta;
  return span * minus.r >= 0.0 && span * plus.r >= 0.0;
}

template <LogDensityFn F>
Tree build_tree(F&& f, const PhasePoint& z, double logu, int dir, int depth, double eps,
                double joint0, Rng& rng) {
  if (depth == 0) {
    Tree leaf;
    const PhasePoint znew = leapfrog(f, z, dir * eps);
    const double joint = znew.finite() ? znew.joint() : log_zero;
    leaf.minus = znew;
    leaf.plus = znew;
    leaf.theta_sel = znew.theta;
    leaf.n = logu <= joint ? 1.0 : 0.0;
    leaf.valid = znew.finite() && (joint - logu > -divergence_gap);
    leaf.alpha_sum = std::min(1.0, std::exp(joint - joint0));
    leaf.n_alpha = 1.0;
    return leaf;
  }
  Tree first = build_tree(f, z, logu, dir, depth - 1, eps, joint0, rng);
  if (!first.valid) return first;
  const PhasePoint& edge = dir == 1 ? first.plus : first.minus;
  Tree second = build_tree(f, edge, logu, dir, depth - 1, eps, joint0, rng);
  Tree out;
  out.minus = dir == 1 ? first.minus : second.minus;
  out.plus = dir == 1 ? second.plus : first.plus;
  out.n = first.n + second.n;
  out.theta_sel = first.theta_sel;
  if (out.n > 0.0 && rng.uniform() < second.n / out.n) out.theta_sel = second.theta_sel;
  out.valid = second.valid && no_uturn(out.minus, out.plus);
  out.alpha_sum = first.alpha_sum + second.alpha_sum;
  out.n_alpha = first.n_alpha + second.n_alpha;
  return out;
}

}  // namespace nuts_detail

template <LogDensityFn F>
double nuts_step(F&& f, double theta0, double eps, int max_depth, Rng& rng, NutsStats* stats) {
  auto [lp0, g0] = f(theta0);
  if (!std::isfinite(lp0) || !std::isfinite(g0))
    throw NumericalError("nuts started from a point with non-finite density or gradient");
  PhasePoint init{theta0, rng.normal(), lp0, g0};
  const double joint0 = init.joint();
  const double logu = joint0 + std::log(rng.uniform());

  PhasePoint minus = init, plus = init;
  double theta_new = theta0;
  double n = 1.0;
  bool keep_going = true;
  double alpha_sum = 0.0, n_alpha = 0.0;
  int depth = 0;

  while (keep_going && depth < max_depth) {
    const int dir = rng.uniform() < 0.5 ? -1 : 1;
    nuts_detail::Tree tree = nuts_detail::build_tree(f, dir == 1 ? plus : minus, logu, dir, depth,
                                                     eps, joint0, rng);
    if (dir == 1)
      plus = tree.plus;
    else
      minus = tree.minus;
    alpha_sum += tree.alpha_sum;
    n_alpha += tree.n_alpha;
    if (tree.valid && tree.n > 0.0 && rng.uniform() < std::min(1.0, tree.n / n))
      theta_new = tree.theta_sel;
    n += tree.n;
    keep_going = tree.valid && nuts_detail::no_uturn(minus, plus);
    ++depth;
  }
  if (stats) {
    stats->accept_stat = n_alpha > 0.0 ? alpha_sum / n_alpha : 0.0;
    stats->depth = depth;
    stats->divergent = !keep_going && depth < max_depth;
    stats->moved = theta_new != theta0;
  }
  return theta_new;
}

template <LogDensityFn F>
double find_reasonable_epsilon(F&& f, double theta, Rng& rng) {
  double eps = 1.0;
  auto [lp, g] = f(theta);
  PhasePoint z{theta, rng.normal(), lp, g};
  PhasePoint z1 = leapfrog(f, z, eps);
  while (!z1.finite() && eps > 1e-10) {
    eps *= 0.5;
    z1 = leapfrog(f, z, eps);
  }
  double logratio = z1.joint() - z.joint();
  const double dir = logratio > std::log(0.5) ? 1.0 : -1.0;
  for (int it = 0; it < 50; ++it) {
    if (dir * logratio <= -dir * std::log(2.0)) break;
    eps *= std::pow(2.0, dir);
    if (eps < 1e-6 || eps > 1e3) break;
    z1 = leapfrog(f, z, eps);
    logratio = z1.finite() ? z1.joint() - z.joint() : log_zero;
  }
  return std::clamp(eps, 1e-6, 1e3);
}

// step size adaptation toward a target acceptance statistic; the averaged
// value is frozen in after warmup.
struct DualAveraging {
  double target = 0.8;
  double mu_da = 0.0;
  double log_eps = 0.0;
  double log_eps_bar = 0.0;
  double hbar = 0.0;
  int m = 0;
  bool ready = false;

  void init(double eps0) {
    mu_da = std::log(10.0 * eps0);
    log_eps = std::log(eps0);
    log_eps_bar = std::log(eps0);
    hbar = 0.0;
    m = 0;
    ready = true;
  }
  void update(double alpha) {
    ++m;
    const double frac = 1.0 / (m + 10.0);
    hbar = (1.0 - frac) * hbar + frac * (target - alpha);
    log_eps = mu_da - std::sqrt(static_cast<double>(m)) / 0.05 * hbar;
    log_eps = std::clamp(log_eps, std::log(1e-6), std::log(1e2));
    const double w = std::pow(static_cast<double>(m), -0.75);
    log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
  }
  double eps_adapting() const { return std::exp(log_eps); }
  double eps_final() const { return std::exp(log_eps_bar); }
};

}  // namespace fmsv
