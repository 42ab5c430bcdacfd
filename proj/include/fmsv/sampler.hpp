#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fmsv/diagnostics.hpp"
#include "fmsv/model.hpp"
#include "fmsv/parallel.hpp"
#include "fmsv/score.hpp"
#include "fmsv/series.hpp"
#include "fmsv/smc.hpp"
#include "fmsv/updates.hpp"

// particle gibbs drivers. one sweep refreshes, in order: (mixed only) the
// idiosyncratic and factor tau2 via particle-marginal langevin moves, then
// the remaining volatility parameters series by series, loadings and their
// shrinkage hierarchy, the loading-scale interweaving move, the factor paths
// period by period, and finally both latent volatility blocks by conditional
// SMC. every randomized step draws from its own counter-based substream, so
// runs are reproducible for a given seed and independent of thread count.

namespace fmsv {

enum class Scheme { pg, pgas, mixed };

inline const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::pg: return "pg";
    case Scheme::pgas: return "pgas";
    case Scheme::mixed: return "mixed";
  }
  return "?";
}

inline Scheme scheme_from_name(const std::string& name) {
  if (name == "pg") return Scheme::pg;
  if (name == "pgas") return Scheme::pgas;
  if (name == "mixed") return Scheme::mixed;
  throw UsageError("unknown scheme '" + name + "' (expected pg, pgas or mixed)");
}

// per-block switches so tests can exercise one conditional at a time.
struct UpdateMask {
  bool mu = true;
  bool phi = true;
  bool tau2 = true;
  bool rho = true;
  bool loadings = true;
  bool interweave = true;
  bool factors = true;
  bool latents = true;
};

struct SamplerConfig {
  Scheme scheme = Scheme::pg;
  int particles = 100;
  int iterations = 1000;
  int burnin = 200;
  std::uint64_t seed = 1;
  int thin_paths = 10;  // keep every n-th retained latent draw
  PriorConfig prior;
  PhiAccept phi_accept = PhiAccept::plus;
  double score_lambda = 0.95;
  int threads = 0;  // <= 0: use the hardware, still capped by FMSV_THREADS
  int nuts_max_depth = 10;
  double langevin_eps0 = 0.1;
  UpdateMask mask;
  SvParams init_idio{0.0, 0.95, 0.05, 0.0};
  SvParams init_fac{0.0, 0.95, 0.05, 0.0};

  void validate() const {
    if (particles < 2) throw UsageError("need at least 2 particles");
    if (iterations < 1) throw UsageError("need at least 1 iteration");
    if (burnin < 0 || burnin >= iterations)
      throw UsageError("burnin must be in [0, iterations)");
    if (thin_paths < 1) throw UsageError("thin_paths must be positive");
    if (!(score_lambda >= 0.0 && score_lambda <= 1.0))
      throw UsageError("score decay must be in [0, 1]");
    if (!(langevin_eps0 > 0.0)) throw UsageError("langevin step size must be positive");
    prior.validate();
    if (!init_idio.in_support() || !init_fac.in_support())
      throw UsageError("initial volatility parameters out of support");
  }
};

// step-size adaptation state of one particle-marginal langevin move. the
// target rate must sit below the acceptance ceiling imposed by the evidence
// noise (at eps -> 0 the exchange still rejects on estimate noise alone, at
// roughly 1 - the ceiling); chasing a plain-MALA 0.5 here drives eps to zero
// and freezes the chain. 0.15 is the pseudo-marginal MALA optimum and stays
// attainable at the particle counts we run.
struct LangevinAdapt {
  double log_eps = std::log(0.1);
  long steps = 0;

  void update(double accept_prob) {
    ++steps;
    log_eps += std::pow(static_cast<double>(steps), -0.6) * (accept_prob - 0.15);
    log_eps = std::clamp(log_eps, std::log(1e-2), std::log(5.0));
  }
  double eps() const { return std::exp(log_eps); }
};

struct ChainState {
  Theta theta;
  LatentState lat;
  std::vector<RhoNutsControl> nuts;     // one per idiosyncratic series
  std::vector<LangevinAdapt> lang_idio;  // mixed scheme only
  std::vector<LangevinAdapt> lang_fac;
  Eigen::VectorXd logz_idio, logz_fac;    // evidence of the last SMC pass
  Eigen::VectorXd score_idio, score_fac;  // tau2 score at the current draw
};

struct Tally {
  long accepted = 0;
  long attempts = 0;
  long skipped = 0;

  void add(const UpdateResult& r) {
    if (r.skipped) {
      ++skipped;
      return;
    }
    ++attempts;
    if (r.accepted) ++accepted;
  }
  double rate() const { return attempts > 0 ? static_cast<double>(accepted) / attempts : 0.0; }
};

struct ChainDraws {
  std::vector<std::string> names;
  Eigen::MatrixXd values;       // retained draws x parameters
  Eigen::VectorXd cond_loglik;  // measurement log-likelihood of each retained draw
  Eigen::VectorXd log_prior;
  std::vector<int> path_indices;   // retained-draw index of each stored path
  std::vector<LatentState> paths;  // thinned full latent draws, signs fixed
};

struct LatentSummary {
  Eigen::MatrixXd h1_mean, h1_sd;
  Eigen::MatrixXd h2_mean, h2_sd;
  Eigen::MatrixXd f_mean, f_sd;
};

struct RunOutput {
  ModelDims dims;
  SamplerConfig config;
  ChainDraws draws;
  LatentSummary latents;
  std::map<std::string, Tally> accepts;
  long nuts_divergences = 0;
  long collapse_rejections = 0;  // particle-marginal proposals that degenerated
  long zero_pivots = 0;          // retained draws with an exactly zero B diagonal
  double runtime_sec = 0.0;
  double seconds_per_iteration = 0.0;
  Eigen::VectorXd iact;  // per parameter, NaN where undefined
  double iact_mean = 0.0;
  double tnv = 0.0;
};

// canonical parameter order: per idiosyncratic series mu, phi, tau2, rho;
// per factor fphi, ftau2; free loadings column-major; shrinkage variances in
// the same layout plus one lambda2 per series. indices are 1-based.
inline std::vector<std::string> param_names(const ModelDims& dims, PriorType type) {
  std::vector<std::string> names;
  for (int s = 1; s <= dims.p; ++s)
    for (const char* base : {"mu_", "phi_", "tau2_", "rho_"})
      names.push_back(base + std::to_string(s));
  for (int j = 1; j <= dims.k; ++j) {
    names.push_back("fphi_" + std::to_string(j));
    names.push_back("ftau2_" + std::to_string(j));
  }
  for (int j = 1; j <= dims.k; ++j)
    for (int s = j; s <= dims.p; ++s)
      names.push_back("B_" + std::to_string(s) + "_" + std::to_string(j));
  if (type == PriorType::normal_gamma) {
    for (int j = 1; j <= dims.k; ++j)
      for (int s = j; s <= dims.p; ++s)
        names.push_back("sigma2_" + std::to_string(s) + "_" + std::to_string(j));
    for (int s = 1; s <= dims.p; ++s) names.push_back("lambda2_" + std::to_string(s));
  }
  return names;
}

inline Eigen::VectorXd pack_params(const Theta& theta) {
  const int p = theta.p(), k = theta.k();
  std::vector<double> vals;
  vals.reserve(4 * p + 2 * k + 2 * p * k + p);
  for (int s = 0; s < p; ++s) {
    vals.push_back(theta.idio[s].mu);
    vals.push_back(theta.idio[s].phi);
    vals.push_back(theta.idio[s].tau2);
    vals.push_back(theta.idio[s].rho);
  }
  for (int j = 0; j < k; ++j) {
    vals.push_back(theta.fac[j].phi);
    vals.push_back(theta.fac[j].tau2);
  }
  for (int j = 0; j < k; ++j)
    for (int s = j; s < p; ++s) vals.push_back(theta.B(s, j));
  if (theta.shrink) {
    for (int j = 0; j < k; ++j)
      for (int s = j; s < p; ++s) vals.push_back(theta.shrink->sigma2(s, j));
    for (int s = 0; s < p; ++s) vals.push_back(theta.shrink->lambda2(s));
  }
  return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

class Sampler {
 public:
  Sampler(Eigen::MatrixXd y, int num_factors, SamplerConfig cfg)
      : y_(std::move(y)),
        dims_{static_cast<int>(y_.rows()), num_factors, static_cast<int>(y_.cols())},
        cfg_(std::move(cfg)),
        threads_(resolve_threads(cfg_.threads)) {
    cfg_.validate();
    dims_.validate();
    if (!y_.allFinite()) throw DataError("observations contain non-finite values");
  }

  const ModelDims& dims() const { return dims_; }

  ChainState init_state() {
    ChainState st;
    st.theta.idio.assign(dims_.p, cfg_.init_idio);
    st.theta.fac.assign(dims_.k, cfg_.init_fac);
    for (auto& f : st.theta.fac) {
      f.mu = 0.0;
      f.rho = 0.0;
    }
    st.theta.B = Eigen::MatrixXd::Zero(dims_.p, dims_.k);
    for (int j = 0; j < dims_.k; ++j) st.theta.B(j, j) = 1.0;
    if (cfg_.prior.type == PriorType::normal_gamma) {
      ShrinkState sh;
      sh.sigma2 = Eigen::MatrixXd::Constant(dims_.p, dims_.k, cfg_.prior.loading_var);
      sh.lambda2 = Eigen::VectorXd::Ones(dims_.p);
      st.theta.shrink = std::move(sh);
    }
    st.lat.h1.resize(dims_.p, dims_.T);
    st.lat.h2.resize(dims_.k, dims_.T);
    st.lat.f.resize(dims_.k, dims_.T);
    {
      Rng rng = Rng::substream(cfg_.seed, {tag_init, 0});
      for (int t = 0; t < dims_.T; ++t)
        for (int j = 0; j < dims_.k; ++j) st.lat.f(j, t) = rng.normal();
    }
    st.nuts.assign(dims_.p, RhoNutsControl{});
    for (auto& n : st.nuts) n.max_depth = cfg_.nuts_max_depth;
    st.lang_idio.assign(dims_.p, LangevinAdapt{std::log(cfg_.langevin_eps0)});
    st.lang_fac.assign(dims_.k, LangevinAdapt{std::log(cfg_.langevin_eps0)});
    st.logz_idio.resize(dims_.p);
    st.logz_fac.resize(dims_.k);
    st.score_idio.resize(dims_.p);
    st.score_fac.resize(dims_.k);

    // seed both latent volatility blocks from unconditioned particle filters
    parallel_for(dims_.p, threads_, [&](int s) {
      Rng rng = Rng::substream(cfg_.seed, {tag_init, 1, static_cast<std::uint64_t>(s)});
      const Eigen::VectorXd ys = y_.row(s).transpose();
      const Eigen::VectorXd bf = (st.theta.B.row(s) * st.lat.f).transpose();
      IdioSvSeries model(ys, bf, st.theta.idio[s]);
      ParticleSystem sys = bootstrap_pf(model, cfg_.particles, rng);
      st.lat.h1.row(s) = ancestral_trace(sys, sample_trajectory_index(sys, rng)).transpose();
      st.logz_idio(s) = sys.logz;
      st.score_idio(s) = score_from_system(sys, model, cfg_.score_lambda);
    });
    parallel_for(dims_.k, threads_, [&](int j) {
      Rng rng = Rng::substream(cfg_.seed, {tag_init, 2, static_cast<std::uint64_t>(j)});
      const Eigen::VectorXd fj = st.lat.f.row(j).transpose();
      FactorSvSeries model(fj, st.theta.fac[j]);
      ParticleSystem sys = bootstrap_pf(model, cfg_.particles, rng);
      st.lat.h2.row(j) = ancestral_trace(sys, sample_trajectory_index(sys, rng)).transpose();
      st.logz_fac(j) = sys.logz;
      st.score_fac(j) = score_from_system(sys, model, cfg_.score_lambda);
    });
    return st;
  }

  // one full sweep. sweep_index feeds the substreams and decides whether
  // adaptation (nuts step size, langevin step size) is still running.
  void sweep(ChainState& st, int sweep_index) {
    const bool mixed = cfg_.scheme == Scheme::mixed;
    if (mixed && cfg_.mask.tau2) {
      pm_tau2_idio(st, sweep_index);
      pm_tau2_fac(st, sweep_index);
    }
    update_idio_params(st, sweep_index, /*include_tau2=*/!mixed);
    update_fac_params(st, sweep_index, /*include_tau2=*/!mixed);
    if (cfg_.mask.loadings) update_loadings(st, sweep_index);
    if (cfg_.mask.interweave) interweave(st, sweep_index);
    if (cfg_.mask.factors) update_factors(st, sweep_index);
    if (cfg_.mask.latents) {
      refresh_idio_paths(st, sweep_index);
      refresh_fac_paths(st, sweep_index);
    }
  }

  RunOutput run() {
    const auto t_start = std::chrono::steady_clock::now();
    tallies_.clear();
    divergences_ = collapse_rejections_ = zero_pivots_ = 0;
    ChainState st = init_state();
    const int retained = cfg_.iterations - cfg_.burnin;
    RunOutput out;
    out.dims = dims_;
    out.config = cfg_;
    out.draws.names = param_names(dims_, cfg_.prior.type);
    out.draws.values.resize(retained, static_cast<Eigen::Index>(out.draws.names.size()));
    out.draws.cond_loglik.resize(retained);
    out.draws.log_prior.resize(retained);

    Eigen::MatrixXd h1_m = Eigen::MatrixXd::Zero(dims_.p, dims_.T), h1_s = h1_m;
    Eigen::MatrixXd h2_m = Eigen::MatrixXd::Zero(dims_.k, dims_.T), h2_s = h2_m;
    Eigen::MatrixXd f_m = Eigen::MatrixXd::Zero(dims_.k, dims_.T), f_s = f_m;
    const auto welford = [](Eigen::MatrixXd& mean, Eigen::MatrixXd& m2,
                            const Eigen::MatrixXd& x, int n) {
      const Eigen::MatrixXd delta = x - mean;
      mean += delta / n;
      m2.array() += delta.array() * (x - mean).array();
    };

    for (int it = 0; it < cfg_.iterations; ++it) {
      sweep(st, it);
      if (it < cfg_.burnin) continue;
      const int r = it - cfg_.burnin;

      Theta snap = st.theta;
      Eigen::MatrixXd f_fixed = st.lat.f;
      const SignFixup fix = identify_signs(snap.B, f_fixed);
      zero_pivots_ += fix.zero_pivots;
      out.draws.values.row(r) = pack_params(snap).transpose();
      out.draws.cond_loglik(r) = conditional_loglik(y_, st.lat, st.theta);
      out.draws.log_prior(r) = prior_logdensity(snap, cfg_.prior);

      welford(h1_m, h1_s, st.lat.h1, r + 1);
      welford(h2_m, h2_s, st.lat.h2, r + 1);
      welford(f_m, f_s, f_fixed, r + 1);
      if (r % cfg_.thin_paths == 0) {
        out.draws.path_indices.push_back(r);
        out.draws.paths.push_back(LatentState{st.lat.h1, st.lat.h2, f_fixed});
      }
    }

    out.accepts = tallies_;
    out.nuts_divergences = divergences_;
    out.collapse_rejections = collapse_rejections_;
    out.zero_pivots = zero_pivots_;
    out.latents.h1_mean = h1_m;
    out.latents.h2_mean = h2_m;
    out.latents.f_mean = f_m;
    const auto sd_of = [&](const Eigen::MatrixXd& m2) {
      return (m2 / std::max(1, retained - 1)).cwiseSqrt().eval();
    };
    out.latents.h1_sd = sd_of(h1_s);
    out.latents.h2_sd = sd_of(h2_s);
    out.latents.f_sd = sd_of(f_s);

    out.runtime_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    out.seconds_per_iteration = out.runtime_sec / cfg_.iterations;
    out.iact.resize(out.draws.values.cols());
    double iact_sum = 0.0;
    int iact_n = 0;
    for (Eigen::Index j = 0; j < out.draws.values.cols(); ++j) {
      out.iact(j) = iact_or_nan(out.draws.values.col(j));
      if (std::isfinite(out.iact(j))) {
        iact_sum += out.iact(j);
        ++iact_n;
      }
    }
    out.iact_mean = iact_n > 0 ? iact_sum / iact_n : std::numeric_limits<double>::quiet_NaN();
    out.tnv = time_normalized_variance(out.iact_mean, out.seconds_per_iteration);
    return out;
  }

 private:
  static constexpr std::uint64_t tag_init = 1, tag_idio = 2, tag_fac = 3, tag_load = 4,
                                 tag_shrink = 5, tag_weave = 6, tag_factors = 7,
                                 tag_refresh_idio = 8, tag_refresh_fac = 9, tag_pm_idio = 10,
                                 tag_pm_fac = 11;

  Rng substream(std::uint64_t tag, int sweep, int unit) const {
    return Rng::substream(cfg_.seed, {tag, static_cast<std::uint64_t>(sweep),
                                      static_cast<std::uint64_t>(unit)});
  }

  void update_idio_params(ChainState& st, int sweep, bool include_tau2) {
    struct Result {
      UpdateResult mu, phi, tau2;
      RhoUpdateStats rho;
      bool did_rho = false;
    };
    std::vector<Result> res(dims_.p);
    const bool adapting = sweep < cfg_.burnin;
    parallel_for(dims_.p, threads_, [&](int s) {
      Rng rng = substream(tag_idio, sweep, s);
      SvParams prm = st.theta.idio[s];
      const Eigen::VectorXd ys = y_.row(s).transpose();
      const Eigen::VectorXd bf = (st.theta.B.row(s) * st.lat.f).transpose();
      const Eigen::VectorXd h = st.lat.h1.row(s).transpose();
      const auto meas = [&](const SvParams& trial) {
        return idio_meas_loglik_tail(ys, bf, h, trial);
      };
      if (cfg_.mask.mu) res[s].mu = update_mu_mh(h, prm, meas, rng);
      if (cfg_.mask.phi) res[s].phi = update_phi_mh(h, prm, cfg_.phi_accept, meas, rng);
      if (include_tau2 && cfg_.mask.tau2) res[s].tau2 = update_tau2_mh(h, prm, meas, rng);
      if (cfg_.mask.rho) {
        res[s].rho = update_rho_nuts(ys, bf, h, prm, st.nuts[s], adapting, rng);
        res[s].did_rho = true;
      }
      st.theta.idio[s] = prm;
    });
    for (const auto& r : res) {
      if (cfg_.mask.mu) tallies_["mu"].add(r.mu);
      if (cfg_.mask.phi) tallies_["phi"].add(r.phi);
      if (include_tau2 && cfg_.mask.tau2) tallies_["tau2"].add(r.tau2);
      if (r.did_rho) {
        tallies_["rho"].add(UpdateResult{r.rho.moved, false});
        if (r.rho.divergent) ++divergences_;
      }
    }
  }

  void update_fac_params(ChainState& st, int sweep, bool include_tau2) {
    struct Result {
      UpdateResult phi, tau2;
    };
    std::vector<Result> res(dims_.k);
    parallel_for(dims_.k, threads_, [&](int j) {
      Rng rng = substream(tag_fac, sweep, j);
      SvParams prm = st.theta.fac[j];
      const Eigen::VectorXd h = st.lat.h2.row(j).transpose();
      const auto no_meas = [](const SvParams&) { return 0.0; };
      if (cfg_.mask.phi) res[j].phi = update_phi_mh(h, prm, cfg_.phi_accept, no_meas, rng);
      if (include_tau2 && cfg_.mask.tau2) res[j].tau2 = update_tau2_mh(h, prm, no_meas, rng);
      st.theta.fac[j] = prm;
    });
    for (const auto& r : res) {
      if (cfg_.mask.phi) tallies_["fphi"].add(r.phi);
      if (include_tau2 && cfg_.mask.tau2) tallies_["ftau2"].add(r.tau2);
    }
  }

  void update_loadings(ChainState& st, int sweep) {
    parallel_for(dims_.p, threads_, [&](int s) {
      Rng rng = substream(tag_load, sweep, s);
      const int ks = std::min(s + 1, dims_.k);
      const Eigen::VectorXd prior_var =
          cfg_.prior.type == PriorType::normal
              ? Eigen::VectorXd::Constant(ks, cfg_.prior.loading_var)
              : Eigen::VectorXd(st.theta.shrink->sigma2.row(s).head(ks).transpose());
      const Eigen::VectorXd ys = y_.row(s).transpose();
      const Eigen::VectorXd h = st.lat.h1.row(s).transpose();
      st.theta.B.row(s).head(ks) =
          update_loadings_row(st.lat.f, ys, h, st.theta.idio[s], prior_var, rng).transpose();
    });
    if (cfg_.prior.type == PriorType::normal_gamma) {
      Rng rng = substream(tag_shrink, sweep, 0);
      update_shrinkage(st.theta.B, *st.theta.shrink, cfg_.prior, rng);
    }
  }

  void interweave(ChainState& st, int sweep) {
    for (int j = 0; j < dims_.k; ++j) {
      Rng rng = substream(tag_weave, sweep, j);
      tallies_["interweave"].add(deep_interweave(st.theta, st.lat, cfg_.prior, j, rng));
    }
  }

  void update_factors(ChainState& st, int sweep) {
    parallel_for(dims_.T, threads_, [&](int t) {
      Rng rng = substream(tag_factors, sweep, t);
      st.lat.f.col(t) = update_factors_col(
          y_.col(t), st.theta.B, st.lat.h1.col(t), st.lat.h1.col(t > 0 ? t - 1 : 0),
          st.lat.h2.col(t), st.theta.idio, t == 0, rng);
    });
  }

  void refresh_idio_paths(ChainState& st, int sweep) {
    const bool mixed = cfg_.scheme == Scheme::mixed;
    const bool use_as = cfg_.scheme == Scheme::pgas;
    parallel_for(dims_.p, threads_, [&](int s) {
      Rng rng = substream(tag_refresh_idio, sweep, s);
      const Eigen::VectorXd ys = y_.row(s).transpose();
      const Eigen::VectorXd bf = (st.theta.B.row(s) * st.lat.f).transpose();
      IdioSvSeries model(ys, bf, st.theta.idio[s]);
      const Eigen::VectorXd ref = st.lat.h1.row(s).transpose();
      ParticleSystem sys;
      try {
        sys = use_as ? csmc_ancestor_sampling(model, ref, cfg_.particles, rng)
                     : conditional_smc(model, ref, cfg_.particles, rng);
      } catch (const ParticleCollapse& e) {
        throw NumericalError("sweep " + std::to_string(sweep + 1) + ", series " +
                             std::to_string(s + 1) + ": " + e.what());
      }
      st.lat.h1.row(s) =
          ancestral_trace(sys, sample_trajectory_index(sys, rng)).transpose();
      if (mixed) {
        st.logz_idio(s) = sys.logz;
        st.score_idio(s) = score_from_system(sys, model, cfg_.score_lambda);
      }
    });
  }

  void refresh_fac_paths(ChainState& st, int sweep) {
    const bool mixed = cfg_.scheme == Scheme::mixed;
    const bool use_as = cfg_.scheme == Scheme::pgas;
    parallel_for(dims_.k, threads_, [&](int j) {
      Rng rng = substream(tag_refresh_fac, sweep, j);
      const Eigen::VectorXd fj = st.lat.f.row(j).transpose();
      FactorSvSeries model(fj, st.theta.fac[j]);
      const Eigen::VectorXd ref = st.lat.h2.row(j).transpose();
      ParticleSystem sys;
      try {
        sys = use_as ? csmc_ancestor_sampling(model, ref, cfg_.particles, rng)
                     : conditional_smc(model, ref, cfg_.particles, rng);
      } catch (const ParticleCollapse& e) {
        throw NumericalError("sweep " + std::to_string(sweep + 1) + ", factor " +
                             std::to_string(j + 1) + ": " + e.what());
      }
      st.lat.h2.row(j) =
          ancestral_trace(sys, sample_trajectory_index(sys, rng)).transpose();
      if (mixed) {
        st.logz_fac(j) = sys.logz;
        st.score_fac(j) = score_from_system(sys, model, cfg_.score_lambda);
      }
    });
  }

  // one particle-marginal metropolis move on tau2 of a single series: a
  // langevin proposal on log tau2 driven by the particle score, scored by a
  // fresh bootstrap filter. accepting adopts the proposal's evidence, score
  // and a trajectory drawn from its terminal weights; a degenerate proposal
  // filter counts as a rejection since its likelihood estimate is zero.
  using PathRef = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

  template <class ModelFactory>
  std::pair<UpdateResult, bool> pm_tau2_step(SvParams& prm, PathRef path, double& logz,
                                             double& score, LangevinAdapt& adapt, bool adapting,
                                             ModelFactory&& make_model, Rng& rng) {
    const double drift = tau2_drift_logscale(prm.tau2, score);
    const LangevinProposal prop =
        langevin_proposal_tau2(prm.tau2, drift, adapt.eps(), rng.normal());
    double alpha = 0.0;
    UpdateResult result{false, false};
    bool collapsed = false;
    try {
      SvParams trial = prm;
      trial.tau2 = prop.tau2_new;
      auto model = make_model(trial);
      ParticleSystem sys = bootstrap_pf(model, cfg_.particles, rng);
      const double score_new = score_from_system(sys, model, cfg_.score_lambda);
      const double log_ratio = sys.logz + log_prior_tau2(trial.tau2) + prop.theta_new -
                               (logz + log_prior_tau2(prm.tau2) + prop.theta_old) +
                               prop.log_q_reverse(tau2_drift_logscale(trial.tau2, score_new)) -
                               prop.log_q_forward;
      alpha = std::min(1.0, std::exp(log_ratio));
      if (std::log(rng.uniform()) < log_ratio) {
        path = ancestral_trace(sys, sample_trajectory_index(sys, rng)).transpose();
        prm.tau2 = trial.tau2;
        logz = sys.logz;
        score = score_new;
        result.accepted = true;
      }
    } catch (const ParticleCollapse&) {
      collapsed = true;  // estimated likelihood of the proposal is zero
    }
    if (adapting) adapt.update(alpha);
    return {result, collapsed};
  }

  void pm_tau2_idio(ChainState& st, int sweep) {
    const bool adapting = sweep < cfg_.burnin;
    std::vector<std::pair<UpdateResult, bool>> res(dims_.p);
    parallel_for(dims_.p, threads_, [&](int s) {
      Rng rng = substream(tag_pm_idio, sweep, s);
      const Eigen::VectorXd ys = y_.row(s).transpose();
      const Eigen::VectorXd bf = (st.theta.B.row(s) * st.lat.f).transpose();
      res[s] = pm_tau2_step(
          st.theta.idio[s], st.lat.h1.row(s), st.logz_idio(s), st.score_idio(s),
          st.lang_idio[s], adapting,
          [&](const SvParams& trial) { return IdioSvSeries(ys, bf, trial); }, rng);
    });
    for (const auto& [r, collapsed] : res) {
      tallies_["pm_tau2"].add(r);
      if (collapsed) ++collapse_rejections_;
    }
  }

  void pm_tau2_fac(ChainState& st, int sweep) {
    const bool adapting = sweep < cfg_.burnin;
    std::vector<std::pair<UpdateResult, bool>> res(dims_.k);
    parallel_for(dims_.k, threads_, [&](int j) {
      Rng rng = substream(tag_pm_fac, sweep, j);
      const Eigen::VectorXd fj = st.lat.f.row(j).transpose();
      res[j] = pm_tau2_step(
          st.theta.fac[j], st.lat.h2.row(j), st.logz_fac(j), st.score_fac(j), st.lang_fac[j],
          adapting, [&](const SvParams& trial) { return FactorSvSeries(fj, trial); }, rng);
    });
    for (const auto& [r, collapsed] : res) {
      tallies_["pm_ftau2"].add(r);
      if (collapsed) ++collapse_rejections_;
    }
  }

  Eigen::MatrixXd y_;
  ModelDims dims_;
  SamplerConfig cfg_;
  int threads_;
  std::map<std::string, Tally> tallies_;
  long divergences_ = 0;
  long collapse_rejections_ = 0;
  long zero_pivots_ = 0;
};

inline RunOutput run_sampler(const Eigen::MatrixXd& y, int num_factors,
                             const SamplerConfig& cfg) {
  return Sampler(y, num_factors, cfg).run();
}

}  // namespace fmsv
