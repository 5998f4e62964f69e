#include "gkcv/integrate.hpp"

#include <cmath>
#include <stdexcept>

namespace gkcv {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double wrap_torus(double q) {
  q = std::fmod(q, kTwoPi);
  return q < 0.0 ? q + kTwoPi : q;
}

// eigendecomposition of a symmetric 2x2 [[a,b],[b,c]] = Q diag(l1,l2) Q^T
void sym_eig2(double a, double b, double c, double& l1, double& l2, double& c0,
              double& s0) {
  if (b == 0.0) {
    l1 = a;
    l2 = c;
    c0 = 1.0;
    s0 = 0.0;
    return;
  }
  const double tr = a + c;
  const double diff = a - c;
  const double disc = std::sqrt(diff * diff + 4.0 * b * b);
  l1 = 0.5 * (tr + disc);
  l2 = 0.5 * (tr - disc);
  const double t = (l1 - a) / b;
  const double norm = std::sqrt(1.0 + t * t);
  c0 = 1.0 / norm;
  s0 = t / norm;
}

}  // namespace

void SimConfig::validate() const {
  if (!(dt > 0.0)) throw ConfigError("sim: dt must be > 0");
  if (!(horizon >= dt)) throw ConfigError("sim: horizon must be >= dt");
  if (n_replicas < 1) throw ConfigError("sim: n_replicas must be >= 1");
}

std::size_t SimConfig::n_steps() const {
  return static_cast<std::size_t>(std::floor(horizon / dt + 1e-9));
}

BaoabCoeffs BaoabCoeffs::make(const LangevinParams& params, double dt) {
  BaoabCoeffs c;
  c.dt = dt;
  const double det = params.mass[0] * params.mass[3] - params.mass[1] * params.mass[2];
  c.minv[0] = params.mass[3] / det;
  c.minv[1] = -params.mass[1] / det;
  c.minv[2] = -params.mass[2] / det;
  c.minv[3] = params.mass[0] / det;

  // functions of M applied through its eigenbasis
  double l1, l2, c0, s0;
  sym_eig2(params.mass[0], params.mass[1], params.mass[3], l1, l2, c0, s0);
  const double d1 = std::exp(-params.gamma * dt / l1);
  const double d2 = std::exp(-params.gamma * dt / l2);
  const double n1 = std::sqrt((1.0 - d1 * d1) * l1 / params.beta);
  const double n2 = std::sqrt((1.0 - d2 * d2) * l2 / params.beta);
  auto assemble = [&](double v1, double v2, double* out) {
    out[0] = c0 * c0 * v1 + s0 * s0 * v2;
    out[1] = c0 * s0 * (v1 - v2);
    out[2] = out[1];
    out[3] = s0 * s0 * v1 + c0 * c0 * v2;
  };
  assemble(d1, d2, c.ou_decay);
  assemble(n1, n2, c.ou_noise);
  return c;
}

void baoab_step_with_noise(const LangevinParams& params, const BaoabCoeffs& coeffs,
                           const PotentialGradient& grad_v, std::span<double> s, double xi1,
                           double xi2) {
  const double half = 0.5 * coeffs.dt;
  double g1, g2;

  grad_v(s[0], s[1], g1, g2);  // B
  s[2] -= half * g1;
  s[3] -= half * g2;

  s[0] = wrap_torus(s[0] + half * (coeffs.minv[0] * s[2] + coeffs.minv[1] * s[3]));  // A
  s[1] = wrap_torus(s[1] + half * (coeffs.minv[2] * s[2] + coeffs.minv[3] * s[3]));

  const double p1 = coeffs.ou_decay[0] * s[2] + coeffs.ou_decay[1] * s[3] +
                    coeffs.ou_noise[0] * xi1 + coeffs.ou_noise[1] * xi2;  // O
  const double p2 = coeffs.ou_decay[2] * s[2] + coeffs.ou_decay[3] * s[3] +
                    coeffs.ou_noise[2] * xi1 + coeffs.ou_noise[3] * xi2;
  s[2] = p1;
  s[3] = p2;

  s[0] = wrap_torus(s[0] + half * (coeffs.minv[0] * s[2] + coeffs.minv[1] * s[3]));  // A
  s[1] = wrap_torus(s[1] + half * (coeffs.minv[2] * s[2] + coeffs.minv[3] * s[3]));

  grad_v(s[0], s[1], g1, g2);  // B
  s[2] -= half * g1;
  s[3] -= half * g2;
}

void baoab_step(const LangevinParams& params, std::span<double> state, double dt, Rng& rng) {
  const BaoabCoeffs coeffs = BaoabCoeffs::make(params, dt);
  std::normal_distribution<double> normal;
  const double xi1 = normal(rng), xi2 = normal(rng);
  auto grad = [&params](double q1, double q2, double& d1, double& d2) {
    langevin_potential_gradient(params, q1, q2, d1, d2);
  };
  baoab_step_with_noise(params, coeffs, grad, state, xi1, xi2);
}

void em_step(const DynamicsModel& model, std::span<double> state, double dt, Rng& rng) {
  const std::size_t d = model.dim_state;
  const std::size_t dw = model.dim_noise;
  double b[8], sigma[16], xi[8];
  model.drift(state, {b, d});
  model.diffusion(state, {sigma, d * dw});
  std::normal_distribution<double> normal;
  for (std::size_t k = 0; k < dw; ++k) xi[k] = normal(rng);
  const double sqrt_dt = std::sqrt(dt);
  for (std::size_t i = 0; i < d; ++i) {
    double noise = 0.0;
    for (std::size_t k = 0; k < dw; ++k) noise += sigma[i * dw + k] * xi[k];
    state[i] += b[i] * dt + sqrt_dt * noise;
  }
}

namespace {

void run_one_replica(const DynamicsModel& model, const Observables& obs, const SimConfig& cfg,
                     std::size_t replica_index, Trajectory& out) {
  const std::size_t n = cfg.n_steps();
  out.dt = cfg.dt;
  out.horizon = cfg.horizon;
  out.f_series.resize(n + 1);
  out.g_series.resize(n + 1);
  if (obs.g_corr) out.g_corr.resize(n + 1);
  if (obs.f_corr) out.f_corr.resize(obs.f_corr_at_zero_only ? 1 : n + 1);
  if (obs.psi_g) out.psi_g_series.resize(n + 1);
  if (obs.psi_f) out.psi_f_series.resize(n + 1);

  Rng rng = stream_rng(cfg.seed, replica_index);
  std::vector<double> state(model.dim_state);
  model.invariant_sampler(rng, state);

  const bool use_baoab = model.langevin.has_value();
  BaoabCoeffs coeffs;
  PotentialGradient grad;
  if (use_baoab) {
    coeffs = BaoabCoeffs::make(*model.langevin, cfg.dt);
    grad = [&params = *model.langevin](double q1, double q2, double& d1, double& d2) {
      langevin_potential_gradient(params, q1, q2, d1, d2);
    };
  }
  std::normal_distribution<double> normal;

  auto record = [&](std::size_t idx) {
    const std::span<const double> x(state);
    out.f_series[idx] = obs.f(x);
    out.g_series[idx] = obs.g(x);
    const bool want_f_corr = obs.f_corr && (idx == 0 || !obs.f_corr_at_zero_only);
    if (obs.g_corr) out.g_corr[idx] = obs.g_corr(x);
    if (want_f_corr) out.f_corr[idx] = obs.f_corr(x);
    if (obs.psi_g) out.psi_g_series[idx] = obs.psi_g(x);
    if (obs.psi_f) out.psi_f_series[idx] = obs.psi_f(x);
    const bool finite =
        std::isfinite(out.f_series[idx]) && std::isfinite(out.g_series[idx]) &&
        (!obs.g_corr || std::isfinite(out.g_corr[idx])) &&
        (!want_f_corr || std::isfinite(out.f_corr[idx])) &&
        (!obs.psi_g || std::isfinite(out.psi_g_series[idx])) &&
        (!obs.psi_f || std::isfinite(out.psi_f_series[idx]));
    if (!finite)
      throw NumericError("replica " + std::to_string(replica_index) +
                         ": non-finite observable at grid index " + std::to_string(idx));
  };

  record(0);
  out.f_at_zero = out.f_series[0];
  for (std::size_t step = 1; step <= n; ++step) {
    if (use_baoab) {
      const double xi1 = normal(rng), xi2 = normal(rng);
      baoab_step_with_noise(*model.langevin, coeffs, grad, state, xi1, xi2);
    } else {
      em_step(model, state, cfg.dt, rng);
    }
    record(step);
  }
}

}  // namespace

void simulate_replicas_into(const DynamicsModel& model, const Observables& obs,
                            const SimConfig& cfg, std::size_t first_replica_index,
                            std::size_t count, std::span<Trajectory> out) {
  cfg.validate();
  if (!obs.f || !obs.g) throw std::invalid_argument("simulate_replicas: f and g are required");
  if (out.size() < count) throw std::invalid_argument("simulate_replicas: output too small");
  parallel_for(count, [&](std::size_t i) {
    run_one_replica(model, obs, cfg, first_replica_index + i, out[i]);
  });
}

std::vector<Trajectory> simulate_replicas(const DynamicsModel& model, const Observables& obs,
                                          const SimConfig& cfg) {
  std::vector<Trajectory> trajs(cfg.n_replicas);
  simulate_replicas_into(model, obs, cfg, 0, cfg.n_replicas, trajs);
  return trajs;
}

}  // namespace gkcv
