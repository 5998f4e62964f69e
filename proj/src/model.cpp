#include "gkcv/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace gkcv {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct Mat2 {
  double a = 1, b = 0, c = 0, d = 1;  // row-major [[a,b],[c,d]]
};

Mat2 inverse2(const Mat2& m) {
  const double det = m.a * m.d - m.b * m.c;
  return {m.d / det, -m.b / det, -m.c / det, m.a / det};
}

// Cholesky factor L (lower) of a symmetric 2x2 [[a,b],[b,c]].
Mat2 cholesky2(double a, double b, double c) {
  const double l11 = std::sqrt(a);
  const double l21 = b / l11;
  const double l22 = std::sqrt(c - l21 * l21);
  return {l11, 0.0, l21, l22};
}

}  // namespace

void LangevinParams::validate() const {
  if (!(beta > 0.0)) throw ConfigError("langevin: beta must be > 0");
  if (!(gamma > 0.0)) throw ConfigError("langevin: gamma must be > 0");
  if (mass[1] != mass[2]) throw ConfigError("langevin: mass matrix must be symmetric");
  const double det = mass[0] * mass[3] - mass[1] * mass[2];
  if (!(mass[0] > 0.0) || !(det > 0.0))
    throw ConfigError("langevin: mass matrix must be positive definite");
  const double norm = std::hypot(e[0], e[1]);
  if (std::abs(norm - 1.0) > 1e-12) throw ConfigError("langevin: |e| must equal 1");
}

void MultiscaleParams::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("multiscale: alpha must be > 0");
  if (!(nu_cube_halfwidth > 0.0)) throw ConfigError("multiscale: nu_cube_halfwidth must be > 0");
}

double langevin_potential(const LangevinParams& p, double q1, double q2) {
  return -0.5 * (std::cos(2.0 * q1) + std::cos(q2)) - p.delta * std::cos(q1) * std::cos(q2);
}

void langevin_potential_gradient(const LangevinParams& p, double q1, double q2, double& d1,
                                 double& d2) {
  d1 = std::sin(2.0 * q1) + p.delta * std::sin(q1) * std::cos(q2);
  d2 = 0.5 * std::sin(q2) + p.delta * std::cos(q1) * std::sin(q2);
}

DynamicsModel make_ou() {
  DynamicsModel m;
  m.name = "ou";
  m.dim_state = 1;
  m.dim_noise = 1;
  m.drift = [](std::span<const double> x, std::span<double> out) { out[0] = -x[0]; };
  m.diffusion = [](std::span<const double>, std::span<double> out) {
    out[0] = std::sqrt(2.0);
  };
  m.adjoint_drift = m.drift;  // reversible: L* = L
  m.periodic_mask = {0};
  m.invariant_sampler = [](Rng& rng, std::span<double> out) {
    std::normal_distribution<double> normal;
    out[0] = normal(rng);
  };
  m.gaussian_invariant = GaussianMeasure{{1.0}};
  return m;
}

DynamicsModel make_langevin(const LangevinParams& params) {
  params.validate();
  DynamicsModel m;
  m.name = "langevin";
  m.dim_state = 4;
  m.dim_noise = 2;
  m.langevin = params;
  m.periodic_mask = {1, 1, 0, 0};

  const Mat2 minv = inverse2({params.mass[0], params.mass[1], params.mass[2], params.mass[3]});
  const LangevinParams p = params;

  m.drift = [p, minv](std::span<const double> s, std::span<double> out) {
    const double v1 = minv.a * s[2] + minv.b * s[3];
    const double v2 = minv.c * s[2] + minv.d * s[3];
    double g1, g2;
    langevin_potential_gradient(p, s[0], s[1], g1, g2);
    out[0] = v1;
    out[1] = v2;
    out[2] = -g1 - p.gamma * v1;
    out[3] = -g2 - p.gamma * v2;
  };
  // Hamiltonian transport flips sign under the L2(mu)-adjoint; the
  // friction/diffusion part is self-adjoint. Verified by the pairing test.
  m.adjoint_drift = [p, minv](std::span<const double> s, std::span<double> out) {
    const double v1 = minv.a * s[2] + minv.b * s[3];
    const double v2 = minv.c * s[2] + minv.d * s[3];
    double g1, g2;
    langevin_potential_gradient(p, s[0], s[1], g1, g2);
    out[0] = -v1;
    out[1] = -v2;
    out[2] = g1 - p.gamma * v1;
    out[3] = g2 - p.gamma * v2;
  };
  const double noise = std::sqrt(2.0 * params.gamma / params.beta);
  m.diffusion = [noise](std::span<const double>, std::span<double> out) {
    out[0] = 0.0;
    out[1] = 0.0;
    out[2] = 0.0;
    out[3] = 0.0;
    out[4] = noise;
    out[5] = 0.0;
    out[6] = 0.0;
    out[7] = noise;
  };

  // Position sampler: uniform proposal on the torus, acceptance
  // exp(-beta (V - V_min)) with V_min from a 200x200 grid search.
  double vmin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 200; ++i)
    for (int j = 0; j < 200; ++j)
      vmin = std::min(vmin, langevin_potential(params, kTwoPi * i / 200.0, kTwoPi * j / 200.0));
  const Mat2 pchol =
      cholesky2(params.mass[0] / params.beta, params.mass[1] / params.beta,
                params.mass[3] / params.beta);

  m.invariant_sampler = [p, vmin, pchol](Rng& rng, std::span<double> out) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (;;) {
      const double q1 = kTwoPi * uniform(rng);
      const double q2 = kTwoPi * uniform(rng);
      const double accept = std::exp(-p.beta * (langevin_potential(p, q1, q2) - vmin));
      if (uniform(rng) <= accept) {
        out[0] = q1;
        out[1] = q2;
        break;
      }
    }
    std::normal_distribution<double> normal;
    const double z1 = normal(rng), z2 = normal(rng);
    out[2] = pchol.a * z1;
    out[3] = pchol.c * z1 + pchol.d * z2;
  };
  return m;
}

DynamicsModel make_multiscale_fast(const MultiscaleParams& params) {
  params.validate();
  DynamicsModel m;
  m.name = "multiscale_fast";
  m.dim_state = 2;
  m.dim_noise = 2;
  m.periodic_mask = {0, 0};
  const double alpha = params.alpha;
  m.drift = [alpha](std::span<const double> y, std::span<double> out) {
    out[0] = -y[0] - alpha * y[1];
    out[1] = -y[1] + alpha * y[0];
  };
  // rotation part is antisymmetric in L2(mu); its sign flips in the adjoint
  m.adjoint_drift = [alpha](std::span<const double> y, std::span<double> out) {
    out[0] = -y[0] + alpha * y[1];
    out[1] = -y[1] - alpha * y[0];
  };
  m.diffusion = [](std::span<const double>, std::span<double> out) {
    out[0] = 1.0;
    out[1] = 0.0;
    out[2] = 0.0;
    out[3] = 1.0;
  };
  const double std_dev = std::sqrt(0.5);
  m.invariant_sampler = [std_dev](Rng& rng, std::span<double> out) {
    std::normal_distribution<double> normal;
    out[0] = std_dev * normal(rng);
    out[1] = std_dev * normal(rng);
  };
  m.gaussian_invariant = GaussianMeasure{{0.5, 0.5}};
  return m;
}

ScalarField multiscale_slow_observable(int component, const MultiscaleParams& params) {
  switch (component) {
    case 1:
      return [](std::span<const double> y) { return y[0]; };
    case 2:
      return [](std::span<const double> y) { return y[1]; };
    case 3: {
      const double x1 = params.x_frozen[0], x2 = params.x_frozen[1];
      return [x1, x2](std::span<const double> y) { return x1 * y[1] - x2 * y[0]; };
    }
    default:
      throw std::invalid_argument("multiscale_slow_observable: component must be 1, 2 or 3");
  }
}

namespace {

double generator_with_derivatives(const DynamicsModel& model, const TestFunction& phi,
                                  std::span<const double> state, bool adjoint) {
  const std::size_t d = model.dim_state;
  std::vector<double> b(d), grad(d), hess(d), sigma(d * model.dim_noise);
  if (adjoint) {
    if (!model.has_adjoint())
      throw std::invalid_argument("no adjoint available for model '" + model.name + "'");
    model.adjoint_drift(state, b);
  } else {
    model.drift(state, b);
  }
  phi.gradient(state, grad);
  phi.hessian_diag(state, hess);
  model.diffusion(state, sigma);
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double s2 = 0.0;
    for (int k = 0; k < model.dim_noise; ++k) {
      const double v = sigma[i * model.dim_noise + k];
      s2 += v * v;
    }
    acc += b[i] * grad[i] + 0.5 * s2 * hess[i];
  }
  return acc;
}

}  // namespace

double analytic_generator(const DynamicsModel& model, const TestFunction& phi,
                          std::span<const double> state) {
  return generator_with_derivatives(model, phi, state, false);
}

double analytic_adjoint_generator(const DynamicsModel& model, const TestFunction& phi,
                                  std::span<const double> state) {
  return generator_with_derivatives(model, phi, state, true);
}

double FdStencil::apply(const ScalarField& phi) const {
  thread_local std::vector<double> point;
  point.assign(center.begin(), center.end());
  const std::span<const double> view(point.data(), dim);
  const double phi0 = has_second() ? phi(view) : 0.0;
  double acc = 0.0;
  for (const auto& term : terms) {
    const double base = center[term.coord];
    point[term.coord] = base + term.step;
    const double phi_plus = phi(view);
    point[term.coord] = base - term.step;
    const double phi_minus = phi(view);
    point[term.coord] = base;
    acc += term.second_order ? term.factor * ((phi_plus - phi0) + (phi_minus - phi0))
                             : term.factor * (phi_plus - phi_minus);
  }
  return acc;
}

FdStencil generator_fd_stencil(const DynamicsModel& model, std::span<const double> state,
                               bool adjoint) {
  static const double h1_base = std::cbrt(std::numeric_limits<double>::epsilon());
  static const double h2_base = std::pow(std::numeric_limits<double>::epsilon(), 0.25);
  const std::size_t d = model.dim_state;

  std::vector<double> b(d), sigma(d * model.dim_noise);
  if (adjoint) {
    if (!model.has_adjoint())
      throw std::invalid_argument("no adjoint available for model '" + model.name + "'");
    model.adjoint_drift(state, b);
  } else {
    model.drift(state, b);
  }
  model.diffusion(state, sigma);

  FdStencil st;
  st.dim = d;
  st.center.assign(state.begin(), state.end());
  st.terms.reserve(2 * d);

  for (std::size_t i = 0; i < d; ++i) {
    const double scale = std::max(1.0, std::abs(state[i]));
    if (b[i] != 0.0) {
      double h = h1_base * scale;
      volatile double tmp = state[i] + h;
      h = tmp - state[i];  // exactly representable step
      st.terms.push_back({i, h, b[i] / (2.0 * h), false});
    }
    double s2 = 0.0;
    for (int k = 0; k < model.dim_noise; ++k) {
      const double v = sigma[i * model.dim_noise + k];
      s2 += v * v;
    }
    if (s2 != 0.0) {
      double h = h2_base * scale;
      volatile double tmp = state[i] + h;
      h = tmp - state[i];
      st.terms.push_back({i, h, 0.5 * s2 / (h * h), true});
    }
  }
  return st;
}

namespace {

double apply_stencil(const DynamicsModel& model, const ScalarField& phi,
                     std::span<const double> state, bool adjoint) {
  return generator_fd_stencil(model, state, adjoint).apply(phi);
}

}  // namespace

double apply_generator_fd(const DynamicsModel& model, const ScalarField& phi,
                          std::span<const double> state) {
  return apply_stencil(model, phi, state, false);
}

double apply_adjoint_generator_fd(const DynamicsModel& model, const ScalarField& phi,
                                  std::span<const double> state) {
  return apply_stencil(model, phi, state, true);
}

ScalarField centered_field(const DynamicsModel& model, ScalarField field, std::size_t n_samples,
                           std::uint64_t seed) {
  Rng rng = stream_rng(seed, 0);
  std::vector<double> state(model.dim_state);
  double mean = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    model.invariant_sampler(rng, state);
    mean += (field(state) - mean) / static_cast<double>(i + 1);
  }
  return [f = std::move(field), mean](std::span<const double> x) { return f(x) - mean; };
}

}  // namespace gkcv
