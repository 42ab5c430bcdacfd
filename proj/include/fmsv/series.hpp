#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <concepts>

#include "fmsv/model.hpp"
#include "fmsv/rng.hpp"

// per-series univariate state-space views consumed by the smc kernels. each
// model owns its observations plus any exogenous inputs (the common-factor
// mean for idiosyncratic series) and evaluates densities for one latent
// log-volatility path.

namespace fmsv {

template <class M>
concept SeriesModel = requires(const M& m, M& mm, Rng& rng, double h, double hp, int t) {
  { m.horizon() } -> std::convertible_to<int>;
  { m.sample_initial(rng) } -> std::convertible_to<double>;
  { m.initial_logdensity(h) } -> std::convertible_to<double>;
  { m.sample_transition(hp, rng) } -> std::convertible_to<double>;
  { m.transition_logdensity(h, hp) } -> std::convertible_to<double>;
  { m.measurement_logdensity(t, h, hp) } -> std::convertible_to<double>;
};

// adds d/dtau2 evaluators for the score recursion.
template <class M>
concept ScoredSeriesModel = SeriesModel<M> && requires(const M& m, double h, double hp, int t) {
  { m.grad_tau2_initial(h) } -> std::convertible_to<double>;
  { m.grad_tau2_transition(h, hp) } -> std::convertible_to<double>;
  { m.grad_tau2_measurement(t, h, hp) } -> std::convertible_to<double>;
};

// idiosyncratic series: observation y_st with exogenous mean bf_t = B_s f_t,
// leverage via the conditional measurement density. h_prev is ignored at t=0.
class IdioSvSeries {
 public:
  IdioSvSeries(Eigen::VectorXd y, Eigen::VectorXd bf, const SvParams& prm)
      : y_(std::move(y)), bf_(std::move(bf)), prm_(prm) {
    tau_ = std::sqrt(prm_.tau2);
    lev_ = prm_.rho / tau_;
    one_m_rho2_ = 1.0 - prm_.rho * prm_.rho;
    log_one_m_rho2_ = std::log1p(-prm_.rho * prm_.rho);
    stat_sd_ = std::sqrt(prm_.stationary_var());
  }

  int horizon() const { return static_cast<int>(y_.size()); }
  const SvParams& params() const { return prm_; }

  double sample_initial(Rng& rng) const { return prm_.mu + stat_sd_ * rng.normal(); }
  double initial_logdensity(double h) const { return sv_initial_logdensity(h, prm_); }

  double sample_transition(double h_prev, Rng& rng) const {
    return prm_.mu + prm_.phi * (h_prev - prm_.mu) + tau_ * rng.normal();
  }
  double transition_logdensity(double h, double h_prev) const {
    return sv_transition_logdensity(h, h_prev, prm_);
  }

  double measurement_logdensity(int t, double h, double h_prev) const {
    if (t == 0) return idio_first_measurement_logdensity(y_(0), bf_(0), h);
    const double eta = h - prm_.mu - prm_.phi * (h_prev - prm_.mu);
    const double ex_half = std::exp(0.5 * h);
    const double mean = bf_(t) + lev_ * ex_half * eta;
    const double var = std::max(one_m_rho2_ * ex_half * ex_half, variance_floor);
    return -0.5 * (log_2pi + std::log(var) + sq(y_(t) - mean) / var);
  }

  double grad_tau2_initial(double h) const {
    return -0.5 / prm_.tau2 + sq(h - prm_.mu) * (1.0 - prm_.phi * prm_.phi) / (2.0 * sq(prm_.tau2));
  }
  double grad_tau2_transition(double h, double h_prev) const {
    const double eta = h - prm_.mu - prm_.phi * (h_prev - prm_.mu);
    return -0.5 / prm_.tau2 + sq(eta) / (2.0 * sq(prm_.tau2));
  }
  // the leverage shift (rho/tau) exp(h/2) eta is the only tau2-dependent part
  // of the measurement; d shift / d tau2 = -shift / (2 tau2).
  double grad_tau2_measurement(int t, double h, double h_prev) const {
    if (t == 0 || prm_.rho == 0.0) return 0.0;
    const double eta = h - prm_.mu - prm_.phi * (h_prev - prm_.mu);
    const double ex_half = std::exp(0.5 * h);
    const double shift = lev_ * ex_half * eta;
    const double var = std::max(one_m_rho2_ * ex_half * ex_half, variance_floor);
    const double resid = y_(t) - bf_(t) - shift;
    return -resid * shift / (2.0 * prm_.tau2 * var);
  }

 private:
  Eigen::VectorXd y_, bf_;
  SvParams prm_;
  double tau_, lev_, one_m_rho2_, log_one_m_rho2_, stat_sd_;
};

// factor series: observation f_jt, zero-mean log-volatility, no leverage.
class FactorSvSeries {
 public:
  FactorSvSeries(Eigen::VectorXd f, const SvParams& prm) : f_(std::move(f)), prm_(prm) {
    tau_ = std::sqrt(prm_.tau2);
    stat_sd_ = std::sqrt(prm_.stationary_var());
  }

  int horizon() const { return static_cast<int>(f_.size()); }
  const SvParams& params() const { return prm_; }

  double sample_initial(Rng& rng) const { return prm_.mu + stat_sd_ * rng.normal(); }
  double initial_logdensity(double h) const { return sv_initial_logdensity(h, prm_); }

  double sample_transition(double h_prev, Rng& rng) const {
    return prm_.mu + prm_.phi * (h_prev - prm_.mu) + tau_ * rng.normal();
  }
  double transition_logdensity(double h, double h_prev) const {
    return sv_transition_logdensity(h, h_prev, prm_);
  }

  double measurement_logdensity(int t, double h, double) const {
    const double var = std::max(std::exp(h), variance_floor);
    return -0.5 * (log_2pi + std::log(var) + sq(f_(t)) / var);
  }

  double grad_tau2_initial(double h) const {
    return -0.5 / prm_.tau2 + sq(h - prm_.mu) * (1.0 - prm_.phi * prm_.phi) / (2.0 * sq(prm_.tau2));
  }
  double grad_tau2_transition(double h, double h_prev) const {
    const double eta = h - prm_.mu - prm_.phi * (h_prev - prm_.mu);
    return -0.5 / prm_.tau2 + sq(eta) / (2.0 * sq(prm_.tau2));
  }
  double grad_tau2_measurement(int, double, double) const { return 0.0; }

 private:
  Eigen::VectorXd f_;
  SvParams prm_;
  double tau_, stat_sd_;
};

}  // namespace fmsv
