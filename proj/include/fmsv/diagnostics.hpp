#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fmsv/errors.hpp"

namespace fmsv {

// integrated autocorrelation time 1 + 2 * sum of sample autocorrelations
// (biased 1/M normalizer), truncated at the first lag whose absolute
// autocorrelation falls below 2/sqrt(M); that lag is excluded from the sum.
inline double iact(const Eigen::VectorXd& chain) {
  const int m = static_cast<int>(chain.size());
  if (m < 10) throw UsageError("iact needs at least 10 draws");
  const Eigen::VectorXd c = chain.array() - chain.mean();
  const double var0 = c.squaredNorm() / m;
  if (!(var0 > 0.0) || !std::isfinite(var0))
    throw NumericalError("iact: zero variance (constant chain)");
  const double threshold = 2.0 / std::sqrt(static_cast<double>(m));
  double sum = 0.0;
  for (int lag = 1; lag < m; ++lag) {
    const double rho = c.head(m - lag).dot(c.tail(m - lag)) / m / var0;
    if (std::fabs(rho) < threshold) break;
    sum += rho;
  }
  return 1.0 + 2.0 * sum;
}

inline double iact_or_nan(const Eigen::VectorXd& chain) noexcept {
  try {
    return iact(chain);
  } catch (...) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

// cost of one effectively independent draw: mean autocorrelation time times
// wall-clock seconds per sweep. lower is better; only ratios between
// samplers on the same data are meaningful.
inline double time_normalized_variance(double iact_mean, double seconds_per_iteration) {
  return iact_mean * seconds_per_iteration;
}

// deviance information criterion with the plug-in deviance evaluated at the
// highest-posterior-density retained draw rather than the posterior mean:
// DIC = -4 mean(loglik) + 2 loglik(at argmax of loglik + logprior).
inline double dic7(const Eigen::VectorXd& loglik_draws, double loglik_at_map) {
  if (loglik_draws.size() < 1) throw UsageError("dic7 needs at least one draw");
  return -4.0 * loglik_draws.mean() + 2.0 * loglik_at_map;
}

struct DicResult {
  double dic = 0.0;
  double mean_loglik = 0.0;
  double best_loglik = 0.0;
  int best_index = -1;
};

// plug-in point chosen as the retained draw maximizing loglik + logprior.
inline DicResult dic7_from_chain(const Eigen::VectorXd& loglik, const Eigen::VectorXd& logprior) {
  const int m = static_cast<int>(loglik.size());
  if (m < 1 || logprior.size() != m) throw UsageError("dic7 needs matching non-empty chains");
  DicResult res;
  res.mean_loglik = loglik.mean();
  Eigen::Index best;
  (loglik + logprior).maxCoeff(&best);
  res.best_index = static_cast<int>(best);
  res.best_loglik = loglik(best);
  res.dic = dic7(loglik, res.best_loglik);
  return res;
}

// type-7 quantile (linear interpolation between order statistics), matching
// the default of R and numpy. q in [0, 1].
inline double percentile(std::vector<double> x, double q) {
  if (x.empty()) throw UsageError("percentile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw UsageError("percentile level must be in [0, 1]");
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= x.size()) return x.back();
  return x[lo] + (h - static_cast<double>(lo)) * (x[lo + 1] - x[lo]);
}

struct ParamSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double p5 = 0.0;
  double p50 = 0.0;
  double p95 = 0.0;
  double p0_5 = 0.0;
  double p99_5 = 0.0;
  double iact = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> truth;
  bool in_ci99 = false;  // truth inside the 0.5%..99.5% interval
};

inline std::vector<ParamSummary> summarize_params(
    const std::vector<std::string>& names, const Eigen::MatrixXd& draws,
    const Eigen::VectorXd& iacts,
    const std::optional<Eigen::VectorXd>& truth = std::nullopt) {
  const int n_params = static_cast<int>(draws.cols());
  if (static_cast<int>(names.size()) != n_params || iacts.size() != n_params)
    throw UsageError("summary inputs disagree on the number of parameters");
  if (truth && truth->size() != n_params)
    throw UsageError("truth vector length does not match the draws");
  std::vector<ParamSummary> out(n_params);
  for (int j = 0; j < n_params; ++j) {
    ParamSummary& s = out[j];
    s.name = names[j];
    const Eigen::VectorXd col = draws.col(j);
    s.mean = col.mean();
    s.sd = std::sqrt((col.array() - s.mean).square().sum() /
                     std::max<int>(1, static_cast<int>(col.size()) - 1));
    std::vector<double> vals(col.data(), col.data() + col.size());
    s.p5 = percentile(vals, 0.05);
    s.p50 = percentile(vals, 0.5);
    s.p95 = percentile(vals, 0.95);
    s.p0_5 = percentile(vals, 0.005);
    s.p99_5 = percentile(vals, 0.995);
    s.iact = iacts(j);
    if (truth) {
      s.truth = (*truth)(j);
      s.in_ci99 = *s.truth >= s.p0_5 && *s.truth <= s.p99_5;
    }
  }
  return out;
}

}  // namespace fmsv
