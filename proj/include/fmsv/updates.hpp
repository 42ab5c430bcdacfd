#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>

#include "fmsv/gig.hpp"
#include "fmsv/math.hpp"
#include "fmsv/model.hpp"
#include "fmsv/nuts.hpp"
#include "fmsv/rng.hpp"

// single-site parameter updates conditional on a latent log-volatility path.
// the gaussian proposals absorb the AR(1) likelihood exactly, so acceptance
// ratios reduce to the measurement-density ratio times a small correction
// (stationary-init factor for phi, prior remainder for tau2).

namespace fmsv {

struct UpdateResult {
  bool accepted = false;
  bool skipped = false;  // proposal undefined for this path, state untouched
};

// which stationary-init correction enters the phi acceptance ratio.
// `plus` uses sqrt((1+phi'^2)/(1+phi^2)); `stationary` uses the exact
// stationary-normal ratio sqrt((1-phi'^2)/(1-phi^2)). both give a valid
// chain; they differ in the effective weight placed near |phi| = 1.
enum class PhiAccept { plus, stationary };

// measurement log-likelihood of one idiosyncratic series for periods t >= 2
// (the unleveraged first period does not involve mu, phi, tau2 or rho, so it
// cancels from every ratio computed here).
inline double idio_meas_loglik_tail(const Eigen::VectorXd& y, const Eigen::VectorXd& bf,
                                    const Eigen::VectorXd& h, const SvParams& prm) {
  const int T = static_cast<int>(h.size());
  double ll = 0.0;
  for (int t = 1; t < T; ++t)
    ll += idio_measurement_logdensity(y(t), bf(t), h(t), h(t - 1), prm);
  return ll;
}

// quadratic form M = (1-phi^2)(h_1-mu)^2 + sum_{t>=2} (h_t-mu-phi(h_{t-1}-mu))^2.
inline double tau2_proposal_m(const Eigen::VectorXd& h, double mu, double phi) {
  const int T = static_cast<int>(h.size());
  double m = (1.0 - phi * phi) * sq(h(0) - mu);
  for (int t = 1; t < T; ++t) m += sq(h(t) - mu - phi * (h(t - 1) - mu));
  return m;
}

// tau2 via an inverse-gamma proposal with shape (T-1)/2 and scale M/2. the
// proposal cancels the latent AR likelihood up to sqrt(tau2), which combines
// with the half-Cauchy prior into the (1+tau2) terms below.
template <class MeasFn>
UpdateResult update_tau2_mh(const Eigen::VectorXd& h, SvParams& prm, MeasFn&& meas_loglik,
                            Rng& rng) {
  const int T = static_cast<int>(h.size());
  const double m = tau2_proposal_m(h, prm.mu, prm.phi);
  if (!(m > 0.0) || !std::isfinite(m) || T < 2) return {false, true};
  const double shape = 0.5 * (T - 1);
  const double scale = 0.5 * m;
  const double tau2_new = scale / rng.gamma(shape, 1.0);
  SvParams trial = prm;
  trial.tau2 = tau2_new;
  const double logalpha = meas_loglik(trial) - meas_loglik(prm) + std::log1p(prm.tau2) -
                          std::log1p(tau2_new);
  if (std::log(rng.uniform()) < logalpha) {
    prm.tau2 = tau2_new;
    return {true, false};
  }
  return {false, false};
}

struct PhiProposal {
  double mean = 0.0;
  double var = 0.0;
  bool defined = false;
};

inline PhiProposal phi_proposal(const Eigen::VectorXd& h, double mu, double tau2) {
  const int T = static_cast<int>(h.size());
  double sum_sq = 0.0, sum_cross = 0.0;
  for (int t = 1; t < T; ++t) {
    sum_sq += sq(h(t - 1) - mu);
    sum_cross += (h(t) - mu) * (h(t - 1) - mu);
  }
  const double denom = sum_sq - sq(h(0) - mu);  // stationary init subtracts its quadratic
  PhiProposal prop;
  if (!(denom > 0.0) || !std::isfinite(denom)) return prop;
  prop.var = tau2 / denom;
  prop.mean = prop.var * sum_cross / tau2;
  prop.defined = true;
  return prop;
}

template <class MeasFn>
UpdateResult update_phi_mh(const Eigen::VectorXd& h, SvParams& prm, PhiAccept mode,
                           MeasFn&& meas_loglik, Rng& rng) {
  const PhiProposal prop = phi_proposal(h, prm.mu, prm.tau2);
  if (!prop.defined) return {false, true};
  const double phi_new = prop.mean + std::sqrt(prop.var) * rng.normal();
  if (std::fabs(phi_new) >= 1.0) return {false, false};  // flat prior support
  SvParams trial = prm;
  trial.phi = phi_new;
  const double correction =
      mode == PhiAccept::plus
          ? 0.5 * (std::log1p(phi_new * phi_new) - std::log1p(prm.phi * prm.phi))
          : 0.5 * (std::log1p(-phi_new * phi_new) - std::log1p(-prm.phi * prm.phi));
  const double logalpha = meas_loglik(trial) - meas_loglik(prm) + correction;
  if (std::log(rng.uniform()) < logalpha) {
    prm.phi = phi_new;
    return {true, false};
  }
  return {false, false};
}

struct MuProposal {
  double mean = 0.0;
  double var = 0.0;
};

inline MuProposal mu_proposal(const Eigen::VectorXd& h, double phi, double tau2) {
  const int T = static_cast<int>(h.size());
  const double one_m_phi2 = 1.0 - phi * phi;
  double num = h(0) * one_m_phi2;
  for (int t = 1; t < T; ++t) num += (h(t) - phi * h(t)) + (phi * phi * h(t - 1) - phi * h(t - 1));
  const double prec = one_m_phi2 + (T - 1) * sq(1.0 - phi);
  MuProposal prop;
  prop.var = tau2 / prec;
  prop.mean = num / prec;
  return prop;
}

// the proposal is the exact conditional of the latent AR likelihood under a
// flat prior, so only the measurement ratio remains; with rho = 0 this is an
// exact gibbs draw.
template <class MeasFn>
UpdateResult update_mu_mh(const Eigen::VectorXd& h, SvParams& prm, MeasFn&& meas_loglik,
                          Rng& rng) {
  const MuProposal prop = mu_proposal(h, prm.phi, prm.tau2);
  if (!(prop.var > 0.0) || !std::isfinite(prop.var)) return {false, true};
  const double mu_new = prop.mean + std::sqrt(prop.var) * rng.normal();
  SvParams trial = prm;
  trial.mu = mu_new;
  const double logalpha = meas_loglik(trial) - meas_loglik(prm);
  if (std::log(rng.uniform()) < logalpha) {
    prm.mu = mu_new;
    return {true, false};
  }
  return {false, false};
}

// ------------------------------------------------------------ rho via nuts

// measurement log-likelihood and its rho gradient for one series, periods
// t >= 2 (period 1 is rho-free).
inline std::pair<double, double> rho_loglik_grad(const Eigen::VectorXd& y,
                                                 const Eigen::VectorXd& bf,
                                                 const Eigen::VectorXd& h, const SvParams& prm,
                                                 double rho) {
  const int T = static_cast<int>(h.size());
  const double tau = std::sqrt(prm.tau2);
  const double one_m_rho2 = 1.0 - rho * rho;
  double ll = 0.0, grad = 0.0;
  for (int t = 1; t < T; ++t) {
    const double eta = h(t) - prm.mu - prm.phi * (h(t - 1) - prm.mu);
    const double ex_half = std::exp(0.5 * h(t));
    const double ex = ex_half * ex_half;
    const double dmean = ex_half * eta / tau;
    const double mean = bf(t) + rho * dmean;
    const double var = std::max(one_m_rho2 * ex, variance_floor);
    const double resid = y(t) - mean;
    ll += -0.5 * (log_2pi + std::log(var) + resid * resid / var);
    grad += resid * dmean / var + rho * ex * (1.0 / var - resid * resid / (var * var));
  }
  return {ll, grad};
}

struct RhoNutsControl {
  DualAveraging da{0.8};
  int max_depth = 10;
  bool initialized = false;
};

struct RhoUpdateStats {
  bool moved = false;
  bool divergent = false;
  double accept_stat = 0.0;
};

// no-u-turn update of rho on the z = atanh(rho) scale with the uniform(-1,1)
// prior; the jacobian log(1-rho^2) keeps the target proper on the real line.
inline RhoUpdateStats update_rho_nuts(const Eigen::VectorXd& y, const Eigen::VectorXd& bf,
                                      const Eigen::VectorXd& h, SvParams& prm,
                                      RhoNutsControl& ctl, bool adapting, Rng& rng) {
  const auto target = [&](double z) -> std::pair<double, double> {
    const double rho = std::tanh(z);
    auto [ll, dll_drho] = rho_loglik_grad(y, bf, h, prm, rho);
    const double one_m_rho2 = 1.0 - rho * rho;
    return {ll + std::log(one_m_rho2), dll_drho * one_m_rho2 - 2.0 * rho};
  };
  const double z0 = std::atanh(prm.rho);
  if (!ctl.initialized) {
    ctl.da.init(find_reasonable_epsilon(target, z0, rng));
    ctl.initialized = true;
  }
  const double eps = adapting ? ctl.da.eps_adapting() : ctl.da.eps_final();
  NutsStats st;
  const double z_new = nuts_step(target, z0, eps, ctl.max_depth, rng, &st);
  if (adapting) ctl.da.update(st.accept_stat);
  prm.rho = std::tanh(z_new);
  return {st.moved, st.divergent, st.accept_stat};
}

// -------------------------------------------------------------- gibbs blocks

// measurement variance and leverage shift for one series/period under the
// first-period convention.
inline void measurement_var_shift(double h, double h_prev, bool first_period,
                                  const SvParams& prm, double& var, double& shift) {
  const double ex = std::exp(h);
  if (first_period || prm.rho == 0.0) {
    var = first_period ? ex : (1.0 - prm.rho * prm.rho) * ex;
    shift = 0.0;
    return;
  }
  const double eta = h - prm.mu - prm.phi * (h_prev - prm.mu);
  var = (1.0 - prm.rho * prm.rho) * ex;
  shift = prm.rho / std::sqrt(prm.tau2) * std::exp(0.5 * h) * eta;
}

// draw the free loadings of one row from their gaussian conditional. f holds
// all k factor paths; only the first prior_var.size() of them load on this
// row. T = 0 reduces to a prior draw (test hook).
inline Eigen::VectorXd update_loadings_row(const Eigen::MatrixXd& f, const Eigen::VectorXd& y_s,
                                           const Eigen::VectorXd& h_s, const SvParams& prm,
                                           const Eigen::VectorXd& prior_var, Rng& rng) {
  const int ks = static_cast<int>(prior_var.size());
  const int T = static_cast<int>(y_s.size());
  Eigen::MatrixXd prec = prior_var.cwiseInverse().asDiagonal();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(ks);
  for (int t = 0; t < T; ++t) {
    double var, shift;
    measurement_var_shift(h_s(t), t > 0 ? h_s(t - 1) : 0.0, t == 0, prm, var, shift);
    var = std::max(var, variance_floor);
    const Eigen::VectorXd x = f.col(t).head(ks);
    prec.noalias() += x * x.transpose() / var;
    rhs.noalias() += x * ((y_s(t) - shift) / var);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(prec);
  if (llt.info() != Eigen::Success) throw NumericalError("loading conditional precision not positive definite");
  const Eigen::VectorXd mean = llt.solve(rhs);
  Eigen::VectorXd z(ks);
  for (int i = 0; i < ks; ++i) z(i) = rng.normal();
  return mean + llt.matrixU().solve(z);
}

// draw the factor vector for one period from its gaussian conditional given
// loadings and both volatility blocks.
inline Eigen::VectorXd update_factors_col(const Eigen::VectorXd& y_t, const Eigen::MatrixXd& B,
                                          const Eigen::VectorXd& h1_t,
                                          const Eigen::VectorXd& h1_prev,
                                          const Eigen::VectorXd& h2_t,
                                          const std::vector<SvParams>& idio, bool first_period,
                                          Rng& rng) {
  const int p = static_cast<int>(y_t.size());
  const int k = static_cast<int>(B.cols());
  Eigen::MatrixXd prec = h2_t.array().exp().inverse().matrix().asDiagonal();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
  for (int s = 0; s < p; ++s) {
    double var, shift;
    measurement_var_shift(h1_t(s), first_period ? 0.0 : h1_prev(s), first_period, idio[s], var,
                          shift);
    var = std::max(var, variance_floor);
    prec.noalias() += B.row(s).transpose() * B.row(s) / var;
    rhs.noalias() += B.row(s).transpose() * ((y_t(s) - shift) / var);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(prec);
  if (llt.info() != Eigen::Success) throw NumericalError("factor conditional precision not positive definite");
  const Eigen::VectorXd mean = llt.solve(rhs);
  Eigen::VectorXd z(k);
  for (int i = 0; i < k; ++i) z(i) = rng.normal();
  return mean + llt.matrixU().solve(z);
}

// normal-gamma hierarchy: lambda2_s | sigma2 then sigma2_sj | lambda2, B.
inline void update_shrinkage(const Eigen::MatrixXd& B, ShrinkState& sh, const PriorConfig& prior,
                             Rng& rng) {
  const int p = static_cast<int>(B.rows());
  const int k = static_cast<int>(B.cols());
  for (int s = 0; s < p; ++s) {
    const int ks = std::min(s + 1, k);
    double sum_sigma2 = 0.0;
    for (int j = 0; j < ks; ++j) sum_sigma2 += sh.sigma2(s, j);
    const double rate = prior.ng_d + 0.5 * sum_sigma2;
    sh.lambda2(s) = rng.gamma(prior.ng_c + prior.ng_a * ks, 1.0 / rate);
    for (int j = 0; j < ks; ++j) {
      const double b2 = std::max(sq(B(s, j)), 1e-10);
      sh.sigma2(s, j) = gig_sample(prior.ng_a - 0.5, sh.lambda2(s), b2, rng);
    }
  }
}

// ---------------------------------------------------------- deep interweave

// deterministic part of the move: rescale column j of B to a new diagonal
// value, countertransform f and h2 so B f and the implied volatilities are
// unchanged.
inline void interweave_rescale(Eigen::MatrixXd& B, Eigen::MatrixXd& f, Eigen::MatrixXd& h2,
                               int j, double bjj_new) {
  const double bjj_old = B(j, j);
  const double scale = bjj_new / bjj_old;
  B.col(j) *= scale;
  f.row(j) /= scale;
  h2.row(j).array() += 2.0 * std::log(std::fabs(bjj_old / bjj_new));
}

// move the factor-j loading scale through the ancillary parameterization
// B*_sj = B_sj / B_jj, h* = h2 + log B_jj^2. the level mu = log B_jj^2 gets a
// gaussian proposal built from the starred path plus a gaussian pseudo-prior,
// accepted against the implied prior exp(mu/2 - exp(mu)/(2 v_jj)), the
// stationary initial-state term and the starred off-diagonal loading prior.
inline UpdateResult deep_interweave(Theta& theta, LatentState& lat, const PriorConfig& prior,
                                    int j, Rng& rng) {
  Eigen::MatrixXd& B = theta.B;
  const int p = static_cast<int>(B.rows());
  const int T = static_cast<int>(lat.h2.cols());
  const double bjj = B(j, j);
  if (std::fabs(bjj) < 1e-12) return {false, true};

  const auto& prm = theta.fac[j];
  const double phi = prm.phi, tau2 = prm.tau2;
  const auto elem_var = [&](int s) {
    return prior.type == PriorType::normal ? prior.loading_var : theta.shrink->sigma2(s, j);
  };
  const double v_jj = elem_var(j);

  const double mu_old = std::log(bjj * bjj);
  Eigen::VectorXd hstar = lat.h2.row(j).transpose().array() + mu_old;

  double a_num = 0.0;
  for (int t = 1; t < T - 1; ++t) a_num += hstar(t);
  a_num += (hstar(T - 1) - phi * hstar(0)) / (1.0 - phi);
  const double den = T + 1.0 / v_jj;
  const double a_mean = a_num / den;
  const double b_var = tau2 / sq(1.0 - phi) / den;
  const double mu_new = a_mean + std::sqrt(b_var) * rng.normal();

  const auto log_target_terms = [&](double mu) {
    double lp = 0.5 * mu - std::exp(mu) / (2.0 * v_jj);  // implied prior of log B_jj^2
    lp += normal_logpdf(hstar(0), mu, tau2 / (1.0 - phi * phi));
    for (int s = j + 1; s < p; ++s)
      lp += normal_logpdf(B(s, j) / bjj, 0.0, elem_var(s) * std::exp(-mu));
    return lp;
  };
  const double aux_var = v_jj * tau2 / sq(1.0 - phi);
  const double logalpha = log_target_terms(mu_new) - log_target_terms(mu_old) +
                          normal_logpdf(mu_old, 0.0, aux_var) -
                          normal_logpdf(mu_new, 0.0, aux_var);
  if (std::log(rng.uniform()) < logalpha) {
    const double bjj_new = std::copysign(std::exp(0.5 * mu_new), bjj);
    interweave_rescale(B, lat.f, lat.h2, j, bjj_new);
    return {true, false};
  }
  return {false, false};
}

// -------------------------------------------------------- sign identification

struct SignFixup {
  int flips = 0;
  int zero_pivots = 0;
};

// flip loading columns (and the paired factor rows) so the diagonal pivots
// are positive; exact-zero pivots are left alone and flagged.
inline SignFixup identify_signs(Eigen::MatrixXd& B, Eigen::MatrixXd& f) {
  SignFixup fix;
  const int k = static_cast<int>(B.cols());
  for (int j = 0; j < k; ++j) {
    if (B(j, j) < 0.0) {
      B.col(j) = -B.col(j);
      f.row(j) = -f.row(j);
      ++fix.flips;
    } else if (B(j, j) == 0.0) {
      ++fix.zero_pivots;
    }
  }
  return fix;
}

}  // namespace fmsv
