#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fmsv/errors.hpp"
#include "fmsv/math.hpp"
#include "fmsv/rng.hpp"

// factor stochastic volatility model with leverage.
//
//   y_t = B f_t + u_t,            u_st  ~ N(0, exp(h_1s,t))
//   f_jt ~ N(0, exp(h_2j,t))
//   h_1s,t - mu_s = phi_s (h_1s,t-1 - mu_s) + eta_st,   eta_st ~ N(0, tau2_s)
//   h_2j,t        = phi_j  h_2j,t-1        + eta_jt,    mu for factor logvols fixed at 0
//
// leverage couples u_st with the innovation eta_st that produced h_t from
// h_t-1: corr(u_st, eta_st) = rho_s. conditioning on (h_t, h_t-1) gives the
// measurement density used everywhere (simulation, filtering, conditionals):
//
//   y_st | h_t, h_t-1 ~ N( B_s f_t + (rho/tau) exp(h_t/2) eta_st,
//                          (1 - rho^2) exp(h_t) )
//
// the first period has no innovation (h_1 is drawn from the stationary law),
// so period 1 is unleveraged: y_s1 | h_1 ~ N(B_s f_1, exp(h_1)).

namespace fmsv {

struct ModelDims {
  int p = 0;  // observed series
  int k = 0;  // factors
  int T = 0;  // periods

  void validate() const {
    if (p < 1) throw UsageError("model needs at least one observed series");
    if (k < 1 || k > p) throw UsageError("factor count must lie in [1, p]");
    if (T < 2) throw UsageError("need at least two periods");
  }
};

// one autoregressive log-volatility process. rho stays 0 for factor series.
struct SvParams {
  double mu = 0.0;
  double phi = 0.0;
  double tau2 = 1.0;
  double rho = 0.0;

  bool in_support() const {
    return std::isfinite(mu) && std::fabs(phi) < 1.0 && tau2 > 0.0 && std::fabs(rho) < 1.0;
  }
  double stationary_var() const { return tau2 / (1.0 - phi * phi); }
};

enum class PriorType { normal, normal_gamma };

// loading prior. normal: B_sj ~ N(0, loading_var). normal_gamma adds the
// per-element variance hierarchy sigma2 | lambda2 ~ G(a, lambda2/2),
// lambda2 ~ G(c, d) (shape/rate convention); a = 1 is the lasso special case.
struct PriorConfig {
  PriorType type = PriorType::normal;
  double loading_var = 1.0;
  double ng_a = 1.0;
  double ng_c = 1.0;
  double ng_d = 1.0;

  void validate() const {
    if (loading_var <= 0.0) throw UsageError("loading prior variance must be positive");
    if (type == PriorType::normal_gamma && (ng_a <= 0.0 || ng_c <= 0.0 || ng_d <= 0.0))
      throw UsageError("normal-gamma hyperparameters must be positive");
  }
};

// shrinkage state carried alongside the loadings under the normal-gamma prior.
// entries of sigma2 exist only at free loading positions (j <= s).
struct ShrinkState {
  Eigen::MatrixXd sigma2;  // p x k
  Eigen::VectorXd lambda2;  // p
};

struct Theta {
  std::vector<SvParams> idio;  // p entries
  std::vector<SvParams> fac;   // k entries, mu = 0, rho = 0
  Eigen::MatrixXd B;           // p x k, zero above the diagonal
  std::optional<ShrinkState> shrink;

  int p() const { return static_cast<int>(idio.size()); }
  int k() const { return static_cast<int>(fac.size()); }
};

struct LatentState {
  Eigen::MatrixXd h1;  // p x T
  Eigen::MatrixXd h2;  // k x T
  Eigen::MatrixXd f;   // k x T
};

// number of free loadings: column j owns rows j..p-1.
inline int free_loading_count(int p, int k) { return p * k - k * (k - 1) / 2; }

inline bool loading_structure_ok(const Eigen::MatrixXd& B) {
  for (int s = 0; s < B.rows(); ++s)
    for (int j = s + 1; j < B.cols(); ++j)
      if (B(s, j) != 0.0) return false;
  return true;
}

inline void validate_theta(const ModelDims& dims, const Theta& theta) {
  if (theta.p() != dims.p || theta.k() != dims.k) throw UsageError("parameter block does not match model dimensions");
  if (theta.B.rows() != dims.p || theta.B.cols() != dims.k) throw UsageError("loading matrix has wrong shape");
  if (!loading_structure_ok(theta.B)) throw UsageError("loading matrix must be zero above the diagonal");
  for (const auto& prm : theta.idio)
    if (!prm.in_support()) throw UsageError("idiosyncratic volatility parameters outside support");
  for (const auto& prm : theta.fac) {
    if (!prm.in_support()) throw UsageError("factor volatility parameters outside support");
    if (prm.mu != 0.0) throw UsageError("factor log-volatility level is fixed at zero");
    if (prm.rho != 0.0) throw UsageError("factor series carry no leverage");
  }
}

// ---------------------------------------------------------------- densities

inline double sv_initial_logdensity(double h, const SvParams& prm) {
  return normal_logpdf(h, prm.mu, prm.stationary_var());
}

inline double sv_transition_logdensity(double h, double h_prev, const SvParams& prm) {
  return normal_logpdf(h, prm.mu + prm.phi * (h_prev - prm.mu), prm.tau2);
}

// measurement for periods t >= 2; bf is the common-factor mean B_s f_t.
inline double idio_measurement_logdensity(double y, double bf, double h, double h_prev,
                                          const SvParams& prm) {
  const double eta = h - prm.mu - prm.phi * (h_prev - prm.mu);
  const double ex_half = std::exp(0.5 * h);
  const double mean = bf + prm.rho / std::sqrt(prm.tau2) * ex_half * eta;
  const double var = (1.0 - prm.rho * prm.rho) * ex_half * ex_half;
  return normal_logpdf(y, mean, var);
}

// unleveraged first period.
inline double idio_first_measurement_logdensity(double y, double bf, double h) {
  return normal_logpdf(y, bf, std::exp(h));
}

inline double factor_measurement_logdensity(double f, double h) {
  return normal_logpdf(f, 0.0, std::exp(h));
}

// ------------------------------------------------------------------- priors

// tau = sqrt(tau2) half-Cauchy, expressed as a density on tau2:
// p(tau2) = 1 / (pi (1 + tau2) sqrt(tau2)).
inline double log_prior_tau2(double tau2) {
  if (tau2 <= 0.0) return log_zero;
  return -std::log(M_PI) - std::log1p(tau2) - 0.5 * std::log(tau2);
}

inline double log_prior_unit_interval(double x) {
  return std::fabs(x) < 1.0 ? -std::log(2.0) : log_zero;
}

// joint log prior over everything in theta. mu carries a flat prior and
// contributes zero. under the normal-gamma prior the hierarchy terms are
// included for the free loading positions.
inline double prior_logdensity(const Theta& theta, const PriorConfig& prior) {
  double lp = 0.0;
  for (const auto& prm : theta.idio) {
    lp += log_prior_unit_interval(prm.phi);
    lp += log_prior_tau2(prm.tau2);
    lp += log_prior_unit_interval(prm.rho);
    if (is_log_zero(lp)) return log_zero;
  }
  for (const auto& prm : theta.fac) {
    lp += log_prior_unit_interval(prm.phi);
    lp += log_prior_tau2(prm.tau2);
    if (is_log_zero(lp)) return log_zero;
  }
  const int p = theta.p(), k = theta.k();
  if (prior.type == PriorType::normal) {
    for (int j = 0; j < k; ++j)
      for (int s = j; s < p; ++s) lp += normal_logpdf(theta.B(s, j), 0.0, prior.loading_var);
  } else {
    if (!theta.shrink) throw UsageError("normal-gamma prior requires shrinkage state");
    const auto& sh = *theta.shrink;
    for (int s = 0; s < p; ++s) {
      const int ks = std::min(s + 1, k);
      lp += gamma_logpdf(sh.lambda2(s), prior.ng_c, prior.ng_d);
      for (int j = 0; j < ks; ++j) {
        lp += normal_logpdf(theta.B(s, j), 0.0, sh.sigma2(s, j));
        lp += gamma_logpdf(sh.sigma2(s, j), prior.ng_a, 0.5 * sh.lambda2(s));
      }
      if (is_log_zero(lp)) return log_zero;
    }
  }
  return lp;
}

// --------------------------------------------------------------- simulation

struct SimOutput {
  Eigen::MatrixXd y;  // p x T
  LatentState lat;
  Eigen::MatrixXd u;     // p x T idiosyncratic shocks
  Eigen::MatrixXd eta1;  // p x T volatility innovations, column 0 is zero by convention
};

// fixed draw order (per-series h paths, then factors, then shocks) so a seed
// pins the whole panel.
inline SimOutput simulate(const ModelDims& dims, const Theta& theta, std::uint64_t seed) {
  dims.validate();
  validate_theta(dims, theta);
  const int p = dims.p, k = dims.k, T = dims.T;
  Rng rng(seed);

  SimOutput out;
  out.lat.h1.resize(p, T);
  out.lat.h2.resize(k, T);
  out.lat.f.resize(k, T);
  out.u.resize(p, T);
  out.eta1.setZero(p, T);

  for (int s = 0; s < p; ++s) {
    const auto& prm = theta.idio[s];
    const double tau = std::sqrt(prm.tau2);
    out.lat.h1(s, 0) = rng.normal(prm.mu, std::sqrt(prm.stationary_var()));
    for (int t = 1; t < T; ++t) {
      const double eta = tau * rng.normal();
      out.eta1(s, t) = eta;
      out.lat.h1(s, t) = prm.mu + prm.phi * (out.lat.h1(s, t - 1) - prm.mu) + eta;
    }
  }
  for (int j = 0; j < k; ++j) {
    const auto& prm = theta.fac[j];
    const double tau = std::sqrt(prm.tau2);
    out.lat.h2(j, 0) = rng.normal(0.0, std::sqrt(prm.stationary_var()));
    for (int t = 1; t < T; ++t)
      out.lat.h2(j, t) = prm.phi * out.lat.h2(j, t - 1) + tau * rng.normal();
  }
  for (int j = 0; j < k; ++j)
    for (int t = 0; t < T; ++t) out.lat.f(j, t) = std::exp(0.5 * out.lat.h2(j, t)) * rng.normal();
  for (int s = 0; s < p; ++s) {
    const auto& prm = theta.idio[s];
    const double tau = std::sqrt(prm.tau2);
    const double lev_sd = std::sqrt(1.0 - prm.rho * prm.rho);
    out.u(s, 0) = std::exp(0.5 * out.lat.h1(s, 0)) * rng.normal();
    for (int t = 1; t < T; ++t) {
      const double ex_half = std::exp(0.5 * out.lat.h1(s, t));
      out.u(s, t) = prm.rho / tau * ex_half * out.eta1(s, t) + lev_sd * ex_half * rng.normal();
    }
  }
  out.y = theta.B * out.lat.f + out.u;
  return out;
}

// ------------------------------------------------------- panel likelihood

// log p(y | theta, h1, h2, f): the measurement densities cell by cell. the
// factor prior terms p(f | h2) are not included here.
inline double conditional_loglik(const Eigen::MatrixXd& y, const LatentState& lat,
                                 const Theta& theta) {
  const int p = static_cast<int>(y.rows());
  const int T = static_cast<int>(y.cols());
  const Eigen::MatrixXd bf = theta.B * lat.f;
  double ll = 0.0;
  for (int s = 0; s < p; ++s) {
    ll += idio_first_measurement_logdensity(y(s, 0), bf(s, 0), lat.h1(s, 0));
    for (int t = 1; t < T; ++t)
      ll += idio_measurement_logdensity(y(s, t), bf(s, t), lat.h1(s, t), lat.h1(s, t - 1),
                                        theta.idio[s]);
  }
  return ll;
}

// ------------------------------------------------------------------ presets

// the 10-series 2-factor benchmark design used by the simulate cli verb.
inline std::pair<ModelDims, Theta> simulation_preset(const std::string& name) {
  if (name != "paper-sim") throw UsageError("unknown preset '" + name + "'");
  ModelDims dims{10, 2, 1000};
  Theta theta;
  theta.idio.assign(10, SvParams{0.01, 0.98, 0.05, -0.1});
  theta.fac.assign(2, SvParams{0.0, 0.98, 0.05, 0.0});
  theta.B.setZero(10, 2);
  const double col1[10] = {1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1};
  const double col2[10] = {0.0, 1.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  for (int s = 0; s < 10; ++s) {
    theta.B(s, 0) = col1[s];
    theta.B(s, 1) = col2[s];
  }
  return {dims, theta};
}

}  // namespace fmsv
