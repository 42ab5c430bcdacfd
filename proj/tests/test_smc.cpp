#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fmsv/rng.hpp"
#include "fmsv/series.hpp"
#include "fmsv/smc.hpp"

#include "helpers/grid_model.hpp"
#include "helpers/kalman.hpp"
#include "helpers/stats.hpp"

using namespace fmsv;
using fmsv::testing::GridModel;
using fmsv::testing::LinearGaussianSeries;

namespace {

LinearGaussianSeries lg_series(int T, std::uint64_t seed, double mu = -1.0, double phi = 0.9,
                               double tau2 = 0.2, double sigma2 = 0.5) {
  Rng rng(seed);
  Eigen::VectorXd y(T);
  double h = mu + std::sqrt(tau2 / (1 - phi * phi)) * rng.normal();
  for (int t = 0; t < T; ++t) {
    if (t > 0) h = mu + phi * (h - mu) + std::sqrt(tau2) * rng.normal();
    y(t) = h + std::sqrt(sigma2) * rng.normal();
  }
  return LinearGaussianSeries(y, mu, phi, tau2, sigma2);
}

std::vector<int> counts_of(const std::vector<int>& idx, int n) {
  std::vector<int> c(n, 0);
  for (int i : idx) c[i]++;
  return c;
}

}  // namespace

TEST_CASE("systematic resampling hand cases") {
  // uniform weights: every index survives exactly once, for any offset
  for (double u : {0.0, 0.25, 0.999}) {
    Eigen::VectorXd w = Eigen::VectorXd::Constant(6, 1.0 / 6.0);
    auto idx = systematic_resample(w, u);
    auto c = counts_of(idx, 6);
    for (int i = 0; i < 6; ++i) CHECK(c[i] == 1);
  }

  // a point mass sends everything to its index
  Eigen::VectorXd degenerate(4);
  degenerate << 1.0, 0.0, 0.0, 0.0;
  for (int i : systematic_resample(degenerate, 0.7)) CHECK(i == 0);

  // mass (0.3, 0.7) spread over a 10-point grid with u = 0.05: three grid
  // points fall inside the first weight segment, seven inside the second
  std::vector<int> out(10);
  std::vector<double> padded{0.3, 0.7, 0, 0, 0, 0, 0, 0, 0, 0};
  systematic_resample(padded.data(), 10, 0.05, out.data());
  auto c = counts_of(out, 10);
  CHECK(c[0] == 3);
  CHECK(c[1] == 7);

  CHECK_THROWS_AS(systematic_resample(Eigen::VectorXd::Constant(3, 0.5), 0.1), NumericalError);
}

TEST_CASE("systematic counts stay within one of the expectation") {
  Rng rng(3);
  Eigen::VectorXd w(5);
  w << 0.05, 0.3, 0.1, 0.35, 0.2;
  const int n = 5;
  for (int rep = 0; rep < 2000; ++rep) {
    auto idx = systematic_resample(w, rng.uniform());
    auto c = counts_of(idx, n);
    for (int i = 0; i < n; ++i) {
      const double expect = n * w(i);
      CHECK(c[i] >= static_cast<int>(std::floor(expect)));
      CHECK(c[i] <= static_cast<int>(std::ceil(expect)));
    }
  }
}

TEST_CASE("systematic resampling is unbiased") {
  Rng rng(17);
  Eigen::VectorXd w(4);
  w << 0.12, 0.48, 0.25, 0.15;
  const int reps = 100000, n = 4;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
  for (int rep = 0; rep < reps; ++rep) {
    auto idx = systematic_resample(w, rng.uniform());
    for (int i : idx) mean(i) += 1.0;
  }
  mean /= double(reps);
  for (int i = 0; i < n; ++i)
    CHECK_THAT(mean(i), Catch::Matchers::WithinRel(n * w(i), 0.01));
}

TEST_CASE("conditional resampling keeps the pinned particle in its slot") {
  Rng rng(5);
  Eigen::VectorXd w(4);
  w << 0.4, 0.1, 0.2, 0.3;
  std::vector<int> out(4);
  for (int rep = 0; rep < 5000; ++rep) {
    const int pinned = rep % 4;
    const int slot = (rep / 4) % 4;
    conditional_systematic_resample(w.data(), 4, pinned, slot, rng, out.data());
    REQUIRE(out[slot] == pinned);
  }

  // two particles, all mass on the pinned one: everything must copy it
  std::vector<double> degenerate{1.0, 0.0};
  std::vector<int> out2(2);
  conditional_systematic_resample(degenerate.data(), 2, 0, 0, rng, out2.data());
  CHECK(out2[0] == 0);
  CHECK(out2[1] == 0);

  std::vector<double> zp{0.5, 0.0, 0.5};
  std::vector<int> out3(3);
  CHECK_THROWS_AS(conditional_systematic_resample(zp.data(), 3, 1, 0, rng, out3.data()),
                  NumericalError);
}

TEST_CASE("conditional resampling matches the unconditional counts under uniform weights") {
  // with uniform weights the pinned index always survives, so conditioning
  // changes nothing: empirical index frequencies should match the plain
  // systematic scheme (which emits each index exactly once).
  Rng rng(29);
  const int n = 4, reps = 40000;
  Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 0.25);
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(n);
  std::vector<int> out(n);
  for (int rep = 0; rep < reps; ++rep) {
    conditional_systematic_resample(w.data(), n, 2, 1, rng, out.data());
    for (int i : out) freq(i) += 1.0;
  }
  freq /= double(reps * n);
  for (int i = 0; i < n; ++i) CHECK_THAT(freq(i), Catch::Matchers::WithinAbs(0.25, 0.005));
}

TEST_CASE("bootstrap filter agrees with the exact marginal likelihood") {
  const auto model = lg_series(60, 101);
  const double exact =
      fmsv::testing::kalman_loglik(model.observations(), -1.0, 0.9, 0.2, 0.5).logz;

  Rng rng(11);
  for (int n : {100, 1000}) {
    const int reps = 60;
    std::vector<double> ratio(reps);
    for (int r = 0; r < reps; ++r) ratio[r] = std::exp(bootstrap_pf(model, n, rng).logz - exact);
    const auto s = fmsv::testing::sample_stats(ratio);
    INFO("particles " << n << " ratio mean " << s.mean);
    CHECK_THAT(s.mean, Catch::Matchers::WithinAbs(1.0, 3 * s.se_mean));
  }
}

TEST_CASE("marginal likelihood noise shrinks with more particles") {
  const auto model = lg_series(80, 303);
  Rng rng(23);
  const int reps = 50;
  std::vector<double> lz100(reps), lz1000(reps);
  for (int r = 0; r < reps; ++r) lz100[r] = bootstrap_pf(model, 100, rng).logz;
  for (int r = 0; r < reps; ++r) lz1000[r] = bootstrap_pf(model, 1000, rng).logz;
  CHECK(fmsv::testing::sample_stats(lz1000).var < fmsv::testing::sample_stats(lz100).var);
}

TEST_CASE("single-period filter reduces to importance sampling") {
  Eigen::VectorXd y(1);
  y << 0.4;
  LinearGaussianSeries model(y, 0.0, 0.5, 0.3, 0.2);
  const double exact = fmsv::testing::kalman_loglik(y, 0.0, 0.5, 0.3, 0.2).logz;
  Rng rng(9);
  std::vector<double> lz(4000);
  for (auto& v : lz) v = bootstrap_pf(model, 50, rng).logz;
  std::vector<double> ratio(lz.size());
  for (std::size_t i = 0; i < lz.size(); ++i) ratio[i] = std::exp(lz[i] - exact);
  const auto s = fmsv::testing::sample_stats(ratio);
  CHECK_THAT(s.mean, Catch::Matchers::WithinAbs(1.0, 4 * s.se_mean));
}

TEST_CASE("a nearly deterministic state pins the likelihood") {
  // tau2 -> 0 with phi = 0 holds every particle at mu, so logZ collapses to
  // the sum of measurement densities at mu
  Rng data_rng(13);
  const int T = 20;
  Eigen::VectorXd y(T);
  for (int t = 0; t < T; ++t) y(t) = data_rng.normal(0.3, 1.0);
  const double mu = 0.3, sigma2 = 0.8;
  LinearGaussianSeries model(y, mu, 0.0, 1e-30, sigma2);
  Rng rng(31);
  const auto sys = bootstrap_pf(model, 64, rng);
  double expect = 0.0;
  for (int t = 0; t < T; ++t) expect += normal_logpdf(y(t), mu, sigma2);
  CHECK_THAT(sys.logz, Catch::Matchers::WithinAbs(expect, 1e-6));
}

TEST_CASE("weight columns are normalized") {
  const auto model = lg_series(30, 55);
  Rng rng(2);
  const auto sys = bootstrap_pf(model, 40, rng);
  for (int t = 0; t < sys.horizon(); ++t) {
    CHECK_THAT(sys.normweights.col(t).sum(), Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK(sys.normweights.col(t).minCoeff() >= 0.0);
  }
}

TEST_CASE("hopeless observations raise a collapse error naming the period") {
  Eigen::VectorXd y(3);
  y << 0.0, 1e200, 0.0;
  LinearGaussianSeries model(y, 0.0, 0.5, 0.1, 0.5);
  Rng rng(1);
  try {
    bootstrap_pf(model, 16, rng);
    FAIL("expected a collapse");
  } catch (const ParticleCollapse& e) {
    CHECK(e.period == 1);
    CHECK(std::string(e.what()).find("period 2") != std::string::npos);
  }
}

TEST_CASE("conditional kernels keep the reference path bit-identical") {
  const auto model = lg_series(40, 77);
  Rng ref_rng(3);
  Eigen::VectorXd ref(model.horizon());
  double h = model.sample_initial(ref_rng);
  for (int t = 0; t < model.horizon(); ++t) {
    if (t > 0) h = model.sample_transition(h, ref_rng);
    ref(t) = h;
  }
  Rng rng(19);
  for (bool as : {false, true}) {
    const auto sys = as ? csmc_ancestor_sampling(model, ref, 32, rng)
                        : conditional_smc(model, ref, 32, rng);
    const int last = sys.num_particles() - 1;
    for (int t = 0; t < sys.horizon(); ++t) REQUIRE(sys.particles(last, t) == ref(t));
    if (!as) {
      // without ancestor sampling the reference slot's lineage is itself
      const auto traced = ancestral_trace(sys, last);
      CHECK(traced == ref);
    }
  }

  // two particles: the reference survives, its companion is freshly drawn
  Rng rng2(23);
  const auto two = conditional_smc(model, ref, 2, rng2);
  for (int t = 0; t < two.horizon(); ++t) {
    CHECK(two.particles(1, t) == ref(t));
    CHECK(two.particles(0, t) != ref(t));
  }

  CHECK_THROWS_AS(conditional_smc(model, ref, 1, rng2), UsageError);
  CHECK_THROWS_AS(csmc_ancestor_sampling(model, ref, 1, rng2), UsageError);
}

TEST_CASE("ancestral trace follows the recorded links") {
  ParticleSystem sys;
  sys.particles.resize(2, 3);
  sys.particles << 10, 11, 12, 20, 21, 22;  // row i holds (h_i1, h_i2, h_i3)
  sys.logweights = Eigen::MatrixXd::Zero(2, 3);
  sys.normweights = Eigen::MatrixXd::Constant(2, 3, 0.5);
  sys.ancestors.resize(2, 2);
  sys.ancestors << 0, 1, 1, 1;
  // terminal particle 1: ancestor at the last step is 1, then 1 again
  Eigen::VectorXd path = ancestral_trace(sys, 1);
  CHECK(path(0) == 20);
  CHECK(path(1) == 21);
  CHECK(path(2) == 22);
  // terminal particle 0 jumps across: ancestors(0,1) = 1, ancestors(1,0) = 1
  path = ancestral_trace(sys, 0);
  CHECK(path(0) == 20);
  CHECK(path(1) == 21);
  CHECK(path(2) == 12);
  CHECK_THROWS_AS(ancestral_trace(sys, 2), UsageError);
}

TEST_CASE("trajectory selection follows the terminal weights") {
  ParticleSystem sys;
  sys.particles = Eigen::MatrixXd::Zero(3, 2);
  sys.normweights.resize(3, 2);
  sys.normweights << 0.2, 0.0, 0.3, 0.0, 0.5, 1.0;
  Rng rng(4);
  // all terminal mass on index 2
  for (int rep = 0; rep < 100; ++rep) CHECK(sample_trajectory_index(sys, rng) == 2);

  sys.normweights.col(1) << 0.6, 0.3, 0.1;
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(3);
  const int reps = 100000;
  for (int rep = 0; rep < reps; ++rep) freq(sample_trajectory_index(sys, rng)) += 1.0;
  freq /= double(reps);
  for (int i = 0; i < 3; ++i)
    CHECK_THAT(freq(i), Catch::Matchers::WithinAbs(sys.normweights(i, 1), 0.01));

  // a one-particle system has only one thing to pick
  ParticleSystem solo;
  solo.particles = Eigen::MatrixXd::Zero(1, 2);
  solo.normweights = Eigen::MatrixXd::Ones(1, 2);
  CHECK(sample_trajectory_index(solo, rng) == 0);
}

TEST_CASE("filters are seed-deterministic") {
  const auto model = lg_series(25, 8);
  Rng a(42), b(42);
  const auto sa = bootstrap_pf(model, 30, a);
  const auto sb = bootstrap_pf(model, 30, b);
  CHECK(sa.particles == sb.particles);
  CHECK(sa.ancestors == sb.ancestors);
  CHECK(sa.logz == sb.logz);

  Eigen::VectorXd ref = ancestral_trace(sa, 0);
  Rng c(43), d(43);
  const auto sc = csmc_ancestor_sampling(model, ref, 30, c);
  const auto sd = csmc_ancestor_sampling(model, ref, 30, d);
  CHECK(sc.particles == sd.particles);
  CHECK(sc.ancestors == sd.ancestors);
}

TEST_CASE("conditional kernels leave the exact smoothing law invariant") {
  // short grid-state model whose path posterior is enumerable: run the
  // Gibbs kernel (csmc + trace) many sweeps and compare the visited path
  // distribution against brute force. smoke-sized here; the acceptance
  // suite repeats it with a tighter budget.
  const GridModel model = fmsv::testing::default_grid_model();
  const Eigen::VectorXd exact = model.exact_path_posterior();

  for (bool as : {false, true}) {
    Rng rng(as ? 100 : 200);
    Eigen::VectorXd ref = Eigen::VectorXd::Constant(model.horizon(), model.value(0));
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(exact.size());
    const int sweeps = 15000;
    for (int sweep = 0; sweep < sweeps; ++sweep) {
      const auto sys = as ? csmc_ancestor_sampling(model, ref, 8, rng)
                          : conditional_smc(model, ref, 8, rng);
      ref = ancestral_trace(sys, sample_trajectory_index(sys, rng));
      counts(model.encode_path(ref)) += 1.0;
    }
    const double tv = fmsv::testing::tv_distance(counts, exact);
    INFO("ancestor sampling " << as << " tv " << tv);
    CHECK(tv < 0.035);
  }
}

TEST_CASE("ancestor sampling with memoryless transitions follows the weights") {
  // when every transition row is the same distribution, the ancestor weights
  // reduce to the plain particle weights; invariance must still hold.
  Eigen::VectorXd init(3);
  init << 0.5, 0.3, 0.2;
  Eigen::MatrixXd trans(3, 3);
  trans << 0.6, 0.3, 0.1, 0.6, 0.3, 0.1, 0.6, 0.3, 0.1;
  Eigen::MatrixXd meas(3, 3);
  meas << 0.9, 0.4, 0.1, 0.2, 0.8, 0.3, 0.5, 0.1, 0.7;
  const GridModel model({-1.0, 0.0, 2.0}, init, trans, meas);
  const Eigen::VectorXd exact = model.exact_path_posterior();

  Rng rng(555);
  Eigen::VectorXd ref = Eigen::VectorXd::Constant(3, -1.0);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(exact.size());
  const int sweeps = 15000;
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    const auto sys = csmc_ancestor_sampling(model, ref, 8, rng);
    ref = ancestral_trace(sys, sample_trajectory_index(sys, rng));
    counts(model.encode_path(ref)) += 1.0;
  }
  CHECK(fmsv::testing::tv_distance(counts, exact) < 0.035);
}
