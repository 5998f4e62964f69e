#include "gkcv/integrate.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"

using namespace gkcv;

namespace {

const ScalarField kIdentity = [](std::span<const double> s) { return s[0]; };

double sample_mean(const std::vector<double>& xs) {
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc / static_cast<double>(xs.size());
}

}  // namespace

TEST_CASE("baoab step against the hand-evaluated flat-potential update") {
  LangevinParams params;
  params.delta = 0.0;
  const BaoabCoeffs coeffs = BaoabCoeffs::make(params, 0.01);
  const PotentialGradient flat = [](double, double, double& d1, double& d2) { d1 = d2 = 0.0; };
  double state[4] = {0.0, 0.0, 1.0, 0.0};
  baoab_step_with_noise(params, coeffs, flat, state, 0.0, 0.0);
  const double decay = std::exp(-0.01);
  CHECK(state[2] == doctest::Approx(decay).epsilon(1e-14));
  CHECK(state[0] == doctest::Approx(0.005 + 0.005 * decay).epsilon(1e-12));
  CHECK(state[1] == 0.0);
  CHECK(state[3] == 0.0);
}

TEST_CASE("baoab with gamma = 0 reduces to velocity Verlet: bounded energy drift") {
  LangevinParams params;  // delta = 0.5 potential
  params.gamma = 0.0;     // integrator-level setting; model factories require gamma > 0
  const double dt = 0.01;
  const BaoabCoeffs coeffs = BaoabCoeffs::make(params, dt);
  const PotentialGradient grad = [&params](double q1, double q2, double& d1, double& d2) {
    langevin_potential_gradient(params, q1, q2, d1, d2);
  };
  double state[4] = {1.0, 0.5, 0.3, -0.2};
  auto energy = [&](const double* s) {
    return 0.5 * (s[2] * s[2] + s[3] * s[3]) + langevin_potential(params, s[0], s[1]);
  };
  const double h0 = energy(state);
  double max_drift = 0.0;
  for (int step = 0; step < 10000; ++step) {
    baoab_step_with_noise(params, coeffs, grad, state, 0.0, 0.0);
    max_drift = std::max(max_drift, std::abs(energy(state) - h0));
  }
  CHECK(max_drift <= 1e-3);
}

TEST_CASE("baoab single-step displacement vanishes as dt -> 0") {
  LangevinParams params;
  const PotentialGradient grad = [&params](double q1, double q2, double& d1, double& d2) {
    langevin_potential_gradient(params, q1, q2, d1, d2);
  };
  double prev_disp = 1e300;
  for (double dt : {1e-2, 1e-4, 1e-6}) {
    const BaoabCoeffs coeffs = BaoabCoeffs::make(params, dt);
    double state[4] = {1.0, 2.0, 0.5, -0.5};
    const double before[4] = {state[0], state[1], state[2], state[3]};
    baoab_step_with_noise(params, coeffs, grad, state, 0.0, 0.0);
    double disp = 0.0;
    for (int i = 0; i < 4; ++i) disp += std::abs(state[i] - before[i]);
    CHECK(disp < prev_disp);
    prev_disp = disp;
  }
  CHECK(prev_disp < 1e-5);
}

TEST_CASE("em step deterministic part") {
  // zero-diffusion variants expose the drift map exactly
  DynamicsModel ou = make_ou();
  ou.diffusion = [](std::span<const double>, std::span<double> out) { out[0] = 0.0; };
  double x[1] = {1.0};
  Rng rng = stream_rng(1, 0);
  em_step(ou, x, 0.01, rng);
  CHECK(x[0] == doctest::Approx(0.99).epsilon(1e-15));

  MultiscaleParams mp;
  mp.alpha = 1.0;
  DynamicsModel fast = make_multiscale_fast(mp);
  fast.diffusion = [](std::span<const double>, std::span<double> out) {
    out[0] = out[1] = out[2] = out[3] = 0.0;
  };
  double y[2] = {1.0, 0.0};
  em_step(fast, y, 0.01, rng);
  CHECK(y[0] == doctest::Approx(0.99).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(0.01).epsilon(1e-15));

  DynamicsModel frozen = make_ou();
  frozen.drift = [](std::span<const double>, std::span<double> out) { out[0] = 0.0; };
  frozen.diffusion = [](std::span<const double>, std::span<double> out) { out[0] = 0.0; };
  double z[1] = {0.7};
  em_step(frozen, z, 0.5, rng);
  CHECK(z[0] == 0.7);
}

TEST_CASE("replica streams are independent of worker partitioning") {
  const DynamicsModel ou = make_ou();
  Observables obs;
  obs.f = kIdentity;
  obs.g = kIdentity;
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = 0.5;
  cfg.n_replicas = 3;
  cfg.seed = 1234;

  const auto whole = simulate_replicas(ou, obs, cfg);
  std::vector<Trajectory> split(3);
  for (std::size_t k = 0; k < 3; ++k)
    simulate_replicas_into(ou, obs, cfg, k, 1, {split.data() + k, 1});

  REQUIRE(whole.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    REQUIRE(whole[k].n_points() == split[k].n_points());
    for (std::size_t i = 0; i < whole[k].n_points(); ++i) {
      CHECK(whole[k].f_series[i] == split[k].f_series[i]);
      CHECK(whole[k].g_series[i] == split[k].g_series[i]);
    }
  }
}

TEST_CASE("stationary start: mean of f(X0)^2 matches Var(N(0,1))") {
  const DynamicsModel ou = make_ou();
  Observables obs;
  obs.f = kIdentity;
  obs.g = kIdentity;
  SimConfig cfg;
  cfg.dt = 0.05;
  cfg.horizon = 0.05;  // shortest runs: only initial draws matter here
  cfg.n_replicas = 10000;
  cfg.seed = 99;
  const auto trajs = simulate_replicas(ou, obs, cfg);
  std::vector<double> sq(trajs.size());
  for (std::size_t k = 0; k < trajs.size(); ++k) sq[k] = trajs[k].f_at_zero * trajs[k].f_at_zero;
  CHECK(sample_mean(sq) == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("horizon equal to dt yields exactly two grid points") {
  const DynamicsModel ou = make_ou();
  Observables obs;
  obs.f = kIdentity;
  obs.g = kIdentity;
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = 0.01;
  cfg.n_replicas = 1;
  const auto trajs = simulate_replicas(ou, obs, cfg);
  CHECK(trajs[0].n_points() == 2);
  CHECK(trajs[0].f_at_zero == trajs[0].f_series[0]);
}

TEST_CASE("grid sizing avoids floating truncation (T=5, dt=0.01 gives 501 points)") {
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = 5.0;
  CHECK(cfg.n_steps() == 500);
}

TEST_CASE("ou weak accuracy: E[X_0 X_1] = exp(-1) within 4 standard errors") {
  const DynamicsModel ou = make_ou();
  Observables obs;
  obs.f = kIdentity;
  obs.g = kIdentity;
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = 1.0;
  cfg.n_replicas = 100000;
  cfg.seed = 7;
  const auto trajs = simulate_replicas(ou, obs, cfg);
  std::vector<double> prods(trajs.size());
  for (std::size_t k = 0; k < trajs.size(); ++k)
    prods[k] = trajs[k].f_at_zero * trajs[k].g_series.back();
  const double mean = sample_mean(prods);
  double var = 0.0;
  for (double p : prods) var += (p - mean) * (p - mean);
  var /= static_cast<double>(prods.size() - 1);
  const double se = std::sqrt(var / static_cast<double>(prods.size()));
  CHECK(std::abs(mean - std::exp(-1.0)) <= 4.0 * se);
}

TEST_CASE("langevin stationarity is preserved by baoab at dt = 0.01") {
  LangevinParams params;
  const DynamicsModel lang = make_langevin(params);
  Observables obs;
  obs.f = [](std::span<const double> s) { return s[2]; };  // p1
  obs.g = obs.f;
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = 100.0;
  cfg.n_replicas = 100;
  cfg.seed = 31;
  const auto trajs = simulate_replicas(lang, obs, cfg);
  double acc = 0.0;
  std::size_t count = 0;
  for (const auto& t : trajs) {
    for (double p : t.f_series) acc += p * p;
    count += t.n_points();
  }
  const double time_avg_variance = acc / static_cast<double>(count);
  // beta^{-1} M_11 = 1
  CHECK(time_avg_variance == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("non-finite observables abort with the replica index") {
  const DynamicsModel ou = make_ou();
  Observables obs;
  obs.f = [](std::span<const double>) { return std::numeric_limits<double>::quiet_NaN(); };
  obs.g = kIdentity;
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = 0.1;
  cfg.n_replicas = 2;
  CHECK_THROWS_WITH_AS(simulate_replicas(ou, obs, cfg),
                       doctest::Contains("replica"), NumericError);
}

TEST_CASE("sim config validation") {
  SimConfig cfg;
  cfg.dt = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.horizon = 0.001;
  cfg.dt = 0.01;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.n_replicas = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("corrected and static streams are recorded when requested") {
  const DynamicsModel ou = make_ou();
  Observables obs;
  obs.f = kIdentity;
  obs.g = kIdentity;
  obs.g_corr = [](std::span<const double> s) { return 2.0 * s[0]; };
  obs.psi_g = [](std::span<const double> s) { return s[0] + 1.0; };
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = 0.05;
  cfg.n_replicas = 2;
  const auto trajs = simulate_replicas(ou, obs, cfg);
  for (const auto& t : trajs) {
    REQUIRE(t.g_corr.size() == t.n_points());
    REQUIRE(t.psi_g_series.size() == t.n_points());
    CHECK(t.f_corr.empty());
    for (std::size_t i = 0; i < t.n_points(); ++i) {
      CHECK(t.g_corr[i] == 2.0 * t.g_series[i]);
      CHECK(t.psi_g_series[i] == t.g_series[i] + 1.0);
    }
  }
}
