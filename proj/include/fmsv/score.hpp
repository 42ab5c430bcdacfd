#pragma once

#include <cmath>
#include <vector>

#include "fmsv/math.hpp"
#include "fmsv/rng.hpp"
#include "fmsv/series.hpp"
#include "fmsv/smc.hpp"

// forward-only particle score estimation for one scalar parameter (here tau2;
// the model supplies the gradient evaluators). each particle carries a
// statistic m that is shrunk toward the previous period's aggregate score:
//
//   m_t^i = lambda m_{t-1}^{a_i} + (1-lambda) S_{t-1}
//           + d log g(y_t | h_t^i) + d log p(h_t^i | h_{t-1}^{a_i})
//   S_t   = sum_i W_t^i m_t^i
//
// lambda = 1 recovers the plain path-space recursion whose variance grows
// quadratically in T; lambda < 1 trades a small bias for linear growth.

namespace fmsv {

// replay the recursion over a stored filter pass. deterministic given the
// system, so it can be applied to conditional-smc output as well.
template <ScoredSeriesModel M>
double score_from_system(const ParticleSystem& sys, const M& model, double lambda) {
  const int n = sys.num_particles();
  const int T = sys.horizon();
  std::vector<double> m(n), m_next(n);

  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double h = sys.particles(i, 0);
    m[i] = model.grad_tau2_initial(h) + model.grad_tau2_measurement(0, h, 0.0);
    s += sys.normweights(i, 0) * m[i];
  }
  for (int t = 1; t < T; ++t) {
    const double carry = (1.0 - lambda) * s;
    double s_next = 0.0;
    for (int i = 0; i < n; ++i) {
      const int a = sys.ancestors(i, t - 1);
      const double h = sys.particles(i, t);
      const double hp = sys.particles(a, t - 1);
      m_next[i] = lambda * m[a] + carry + model.grad_tau2_transition(h, hp) +
                  model.grad_tau2_measurement(t, h, hp);
      s_next += sys.normweights(i, t) * m_next[i];
    }
    m.swap(m_next);
    s = s_next;
  }
  return s;
}

struct ScoreEstimate {
  double score = 0.0;
  double logz = 0.0;
};

template <ScoredSeriesModel M>
ScoreEstimate estimate_score(const M& model, int n, double lambda, Rng& rng) {
  const ParticleSystem sys = bootstrap_pf(model, n, rng);
  return {score_from_system(sys, model, lambda), sys.logz};
}

// gradient of the log posterior of tau2 on the theta = log tau2 scale:
// chain-ruled likelihood score plus the half-Cauchy prior gradient plus the
// jacobian of the transform.
inline double tau2_drift_logscale(double tau2, double score_tau2) {
  return tau2 * score_tau2 - tau2 / (1.0 + tau2) + 0.5;
}

// one langevin step on theta = log tau2. the reverse proposal density is only
// known once the drift at the proposed point has been estimated, hence the
// deferred evaluator.
struct LangevinProposal {
  double tau2_new = 0.0;
  double theta_old = 0.0;
  double theta_new = 0.0;
  double eps = 0.0;
  double log_q_forward = 0.0;

  double log_q_reverse(double drift_at_new) const {
    return normal_logpdf(theta_old, theta_new + 0.5 * eps * eps * drift_at_new, eps * eps);
  }
};

inline LangevinProposal langevin_proposal_tau2(double tau2, double drift_logscale, double eps,
                                               double noise) {
  LangevinProposal prop;
  prop.theta_old = std::log(tau2);
  prop.eps = eps;
  prop.theta_new = prop.theta_old + 0.5 * eps * eps * drift_logscale + eps * noise;
  prop.tau2_new = std::exp(prop.theta_new);
  prop.log_q_forward =
      normal_logpdf(prop.theta_new, prop.theta_old + 0.5 * eps * eps * drift_logscale, eps * eps);
  return prop;
}

inline LangevinProposal langevin_proposal_tau2(double tau2, double drift_logscale, double eps,
                                               Rng& rng) {
  return langevin_proposal_tau2(tau2, drift_logscale, eps, rng.normal());
}

}  // namespace fmsv
