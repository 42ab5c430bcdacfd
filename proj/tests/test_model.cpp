#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fmsv/model.hpp"

#include "helpers/stats.hpp"

using namespace fmsv;

namespace {

Theta small_theta(int p, int k) {
  Theta th;
  th.idio.assign(p, SvParams{-0.5, 0.9, 0.1, -0.3});
  th.fac.assign(k, SvParams{0.0, 0.95, 0.05, 0.0});
  th.B.setZero(p, k);
  for (int j = 0; j < k; ++j)
    for (int s = j; s < p; ++s) th.B(s, j) = 1.0 - 0.05 * s + 0.1 * j;
  return th;
}

}  // namespace

TEST_CASE("benchmark preset pins its design values") {
  const auto [dims, theta] = simulation_preset("paper-sim");
  CHECK(dims.p == 10);
  CHECK(dims.k == 2);
  CHECK(dims.T == 1000);
  for (const auto& prm : theta.idio) {
    CHECK(prm.mu == 0.01);
    CHECK(prm.phi == 0.98);
    CHECK(prm.tau2 == 0.05);
    CHECK(prm.rho == -0.1);
  }
  for (const auto& prm : theta.fac) {
    CHECK(prm.mu == 0.0);
    CHECK(prm.phi == 0.98);
    CHECK(prm.tau2 == 0.05);
  }
  CHECK(theta.B(0, 0) == 1.0);
  CHECK(theta.B(0, 1) == 0.0);
  CHECK(theta.B(1, 1) == 1.0);
  CHECK(theta.B(9, 0) == Catch::Approx(0.1));
  CHECK(theta.B(9, 1) == Catch::Approx(0.8));
  CHECK_THROWS_AS(simulation_preset("nope"), UsageError);
}

TEST_CASE("simulation is seed-deterministic with the right shapes") {
  ModelDims dims{3, 2, 50};
  const auto theta = small_theta(3, 2);
  const auto a = simulate(dims, theta, 42);
  const auto b = simulate(dims, theta, 42);
  const auto c = simulate(dims, theta, 43);
  CHECK(a.y == b.y);
  CHECK(a.lat.h1 == b.lat.h1);
  CHECK(a.y != c.y);
  CHECK(a.y.rows() == 3);
  CHECK(a.y.cols() == 50);
  CHECK(a.lat.h2.rows() == 2);
  CHECK(a.lat.f.cols() == 50);
  CHECK(a.eta1.col(0).isZero());
  CHECK((a.y - (theta.B * a.lat.f + a.u)).norm() == 0.0);
}

TEST_CASE("simulated volatility paths have the stationary moments") {
  ModelDims dims{1, 1, 200000};
  Theta th = small_theta(1, 1);
  const auto& prm = th.idio[0];
  const auto sim = simulate(dims, th, 7);
  std::vector<double> h(sim.lat.h1.data(), sim.lat.h1.data() + dims.T);
  const auto s = fmsv::testing::sample_stats(h);
  // an AR(1) sample mean has variance roughly var*(1+phi)/((1-phi)n)
  const double se_mean = std::sqrt(prm.stationary_var() * (1 + prm.phi) / ((1 - prm.phi) * dims.T));
  CHECK_THAT(s.mean, Catch::Matchers::WithinAbs(prm.mu, 5 * se_mean));
  CHECK_THAT(s.var, Catch::Matchers::WithinRel(prm.stationary_var(), 0.05));
  double lag1 = 0.0;
  for (int t = 1; t < dims.T; ++t) lag1 += (h[t] - s.mean) * (h[t - 1] - s.mean);
  lag1 /= (dims.T - 1) * s.var;
  CHECK_THAT(lag1, Catch::Matchers::WithinAbs(prm.phi, 0.01));
}

TEST_CASE("leverage shows up in the standardized residuals") {
  // u_st / exp(h_st/2) should correlate with the volatility innovation at
  // level rho, and be standard normal marginally.
  ModelDims dims{1, 1, 100000};
  Theta th = small_theta(1, 1);
  th.idio[0].rho = -0.6;
  const auto sim = simulate(dims, th, 21);
  const int n = dims.T - 1;
  std::vector<double> z(n), e(n);
  for (int t = 1; t < dims.T; ++t) {
    z[t - 1] = sim.u(0, t) * std::exp(-0.5 * sim.lat.h1(0, t));
    e[t - 1] = sim.eta1(0, t) / std::sqrt(th.idio[0].tau2);
  }
  const auto zs = fmsv::testing::sample_stats(z);
  const auto es = fmsv::testing::sample_stats(e);
  CHECK_THAT(zs.var, Catch::Matchers::WithinRel(1.0, 0.03));
  double corr = 0.0;
  for (int i = 0; i < n; ++i) corr += (z[i] - zs.mean) * (e[i] - es.mean);
  corr /= n * std::sqrt(zs.var * es.var);
  CHECK_THAT(corr, Catch::Matchers::WithinAbs(th.idio[0].rho, 4.0 / std::sqrt(double(n))));
}

TEST_CASE("measurement densities match their closed forms") {
  SvParams prm{0.2, 0.8, 0.3, -0.4};
  const double y = 1.1, bf = 0.25, h = -0.6, hp = -0.9;
  const double eta = h - prm.mu - prm.phi * (hp - prm.mu);
  const double mean = bf + prm.rho / std::sqrt(prm.tau2) * std::exp(0.5 * h) * eta;
  const double var = (1 - prm.rho * prm.rho) * std::exp(h);
  CHECK_THAT(idio_measurement_logdensity(y, bf, h, hp, prm),
             Catch::Matchers::WithinAbs(normal_logpdf(y, mean, var), 1e-14));
  CHECK_THAT(idio_first_measurement_logdensity(y, bf, h),
             Catch::Matchers::WithinAbs(normal_logpdf(y, bf, std::exp(h)), 1e-14));
  CHECK_THAT(factor_measurement_logdensity(0.7, -0.2),
             Catch::Matchers::WithinAbs(normal_logpdf(0.7, 0.0, std::exp(-0.2)), 1e-14));
  CHECK_THAT(sv_initial_logdensity(0.1, prm),
             Catch::Matchers::WithinAbs(normal_logpdf(0.1, prm.mu, prm.stationary_var()), 1e-14));
  CHECK_THAT(sv_transition_logdensity(0.1, -0.3, prm),
             Catch::Matchers::WithinAbs(
                 normal_logpdf(0.1, prm.mu + prm.phi * (-0.3 - prm.mu), prm.tau2), 1e-14));
}

TEST_CASE("panel likelihood equals the cell-by-cell sum") {
  ModelDims dims{3, 2, 8};
  const auto theta = small_theta(3, 2);
  const auto sim = simulate(dims, theta, 5);
  double manual = 0.0;
  const Eigen::MatrixXd bf = theta.B * sim.lat.f;
  for (int s = 0; s < dims.p; ++s) {
    manual += idio_first_measurement_logdensity(sim.y(s, 0), bf(s, 0), sim.lat.h1(s, 0));
    for (int t = 1; t < dims.T; ++t)
      manual += idio_measurement_logdensity(sim.y(s, t), bf(s, t), sim.lat.h1(s, t),
                                            sim.lat.h1(s, t - 1), theta.idio[s]);
  }
  CHECK_THAT(conditional_loglik(sim.y, sim.lat, theta),
             Catch::Matchers::WithinAbs(manual, 1e-12));
}

TEST_CASE("panel likelihood is invariant to a factor sign flip") {
  ModelDims dims{4, 2, 12};
  auto theta = small_theta(4, 2);
  const auto sim = simulate(dims, theta, 9);
  const double base = conditional_loglik(sim.y, sim.lat, theta);

  Theta flipped = theta;
  LatentState lat = sim.lat;
  flipped.B.col(1) *= -1.0;
  lat.f.row(1) *= -1.0;
  CHECK_THAT(conditional_loglik(sim.y, lat, flipped), Catch::Matchers::WithinAbs(base, 1e-12));
}

TEST_CASE("volatility scale prior integrates to the half-Cauchy mass") {
  // integral of the tau2 density over (0, 100) equals P(|C| < 10) = (2/pi) atan(10).
  // substitute tau2 = u^2 to remove the 1/sqrt singularity at the origin.
  const int n = 200000;
  const double hi = 10.0;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = hi * (i + 0.5) / n;
    acc += std::exp(log_prior_tau2(u * u)) * 2.0 * u;
  }
  acc *= hi / n;
  CHECK_THAT(acc, Catch::Matchers::WithinRel(2.0 / M_PI * std::atan(10.0), 1e-4));
  CHECK(is_log_zero(log_prior_tau2(-1.0)));
  CHECK(is_log_zero(log_prior_unit_interval(1.0)));
  CHECK(log_prior_unit_interval(0.3) == -std::log(2.0));
}

TEST_CASE("parameter validation rejects bad blocks") {
  ModelDims dims{3, 2, 10};
  auto theta = small_theta(3, 2);
  CHECK_NOTHROW(validate_theta(dims, theta));

  auto bad = theta;
  bad.B(0, 1) = 0.5;  // above-diagonal entry
  CHECK_THROWS_AS(validate_theta(dims, bad), UsageError);

  bad = theta;
  bad.idio[1].phi = 1.0;
  CHECK_THROWS_AS(validate_theta(dims, bad), UsageError);

  bad = theta;
  bad.fac[0].mu = 0.2;
  CHECK_THROWS_AS(validate_theta(dims, bad), UsageError);

  bad = theta;
  bad.fac[0].rho = 0.1;
  CHECK_THROWS_AS(validate_theta(dims, bad), UsageError);

  bad = theta;
  bad.idio[0].tau2 = 0.0;
  CHECK_THROWS_AS(validate_theta(dims, bad), UsageError);

  CHECK_THROWS_AS(ModelDims({2, 3, 10}).validate(), UsageError);
  CHECK_THROWS_AS(ModelDims({2, 1, 1}).validate(), UsageError);
}

TEST_CASE("free loading count walks the lower triangle") {
  CHECK(free_loading_count(1, 1) == 1);
  CHECK(free_loading_count(5, 1) == 5);
  CHECK(free_loading_count(5, 2) == 9);
  CHECK(free_loading_count(10, 2) == 19);
  CHECK(free_loading_count(4, 4) == 10);
}

TEST_CASE("joint prior density composes the pieces") {
  auto theta = small_theta(2, 1);
  PriorConfig prior;
  prior.loading_var = 2.0;
  double expect = 0.0;
  for (const auto& prm : theta.idio)
    expect += log_prior_unit_interval(prm.phi) + log_prior_tau2(prm.tau2) +
              log_prior_unit_interval(prm.rho);
  for (const auto& prm : theta.fac)
    expect += log_prior_unit_interval(prm.phi) + log_prior_tau2(prm.tau2);
  expect += normal_logpdf(theta.B(0, 0), 0.0, 2.0) + normal_logpdf(theta.B(1, 0), 0.0, 2.0);
  CHECK_THAT(prior_logdensity(theta, prior), Catch::Matchers::WithinAbs(expect, 1e-12));

  theta.idio[0].phi = 1.5;
  CHECK(is_log_zero(prior_logdensity(theta, prior)));
}
