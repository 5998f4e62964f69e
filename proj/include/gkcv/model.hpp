#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gkcv/common.hpp"

namespace gkcv {

// Scalar test function with analytic derivatives, used to apply generators
// without finite differences.
struct TestFunction {
  ScalarField value;
  std::function<void(std::span<const double>, std::span<double>)> gradient;
  std::function<void(std::span<const double>, std::span<double>)> hessian_diag;
};

// Marks a centered Gaussian invariant measure with diagonal covariance;
// enables Gauss-Hermite static-term quadrature.
struct GaussianMeasure {
  std::vector<double> variance_diag;
};

struct LangevinParams {
  double beta = 1.0;
  double gamma = 1.0;
  std::array<double, 4> mass{1.0, 0.0, 0.0, 1.0};  // row-major 2x2, SPD
  double delta = 0.5;                               // potential nonseparability
  std::array<double, 2> e{1.0, 0.0};                // transport direction, |e| = 1
  void validate() const;                            // throws ConfigError
};

struct MultiscaleParams {
  double alpha = 1.0;
  std::array<double, 3> x_frozen{0.0, 0.0, 0.0};
  double nu_cube_halfwidth = 4.0;
  void validate() const;
};

// One SDE dX = b dt + sigma dW together with its invariant measure and the
// drift of the L2(mu)-adjoint generator where known.
struct DynamicsModel {
  std::string name;
  int dim_state = 0;
  int dim_noise = 0;
  std::function<void(std::span<const double>, std::span<double>)> drift;
  // row-major dim_state x dim_noise
  std::function<void(std::span<const double>, std::span<double>)> diffusion;
  // empty when no analytic adjoint is available
  std::function<void(std::span<const double>, std::span<double>)> adjoint_drift;
  std::vector<char> periodic_mask;
  std::function<void(Rng&, std::span<double>)> invariant_sampler;
  std::optional<GaussianMeasure> gaussian_invariant;
  std::optional<LangevinParams> langevin;  // set for the Langevin model

  bool has_adjoint() const { return static_cast<bool>(adjoint_drift); }
};

DynamicsModel make_ou();
DynamicsModel make_langevin(const LangevinParams& params);
DynamicsModel make_multiscale_fast(const MultiscaleParams& params);

double langevin_potential(const LangevinParams& p, double q1, double q2);
void langevin_potential_gradient(const LangevinParams& p, double q1, double q2, double& d1,
                                 double& d2);

// Slow-drift components of the multiscale system as observables of the fast
// state, with the slow variables frozen: f1 = y1, f2 = y2, f3 = x1 y2 - x2 y1.
ScalarField multiscale_slow_observable(int component, const MultiscaleParams& params);

// L phi and L* phi using analytic derivatives of phi.
double analytic_generator(const DynamicsModel& model, const TestFunction& phi,
                          std::span<const double> state);
double analytic_adjoint_generator(const DynamicsModel& model, const TestFunction& phi,
                                  std::span<const double> state);

// Centered-difference discretization of the generator. First derivatives use
// step cbrt(eps_mach), second derivatives qdrt(eps_mach), both scaled by
// max(1, |x_i|); torus coordinates are perturbed without wrapping. The
// built-in models have diagonal sigma sigma^T, so no mixed stencils arise.
//
// apply() evaluates grouped differences, (phi+ - phi0) + (phi- - phi0), so a
// constant phi yields exactly zero. As a flat linear combination the same
// operator reads: factor at x +/- step*e for first-order terms (with the
// minus sign on the negative side), and factor at both sides plus -2*factor
// at the center for second-order terms; the gradient code in the surrogate
// module walks terms in that expansion.
struct FdStencilTerm {
  std::size_t coord = 0;
  double step = 0.0;         // exactly representable perturbation
  double factor = 0.0;       // b_i/(2h) or s2_i/(2 h^2)
  bool second_order = false;
};

struct FdStencil {
  std::size_t dim = 0;
  std::vector<double> center;
  std::vector<FdStencilTerm> terms;
  bool has_second() const {
    for (const auto& t : terms)
      if (t.second_order) return true;
    return false;
  }
  double apply(const ScalarField& phi) const;
};

FdStencil generator_fd_stencil(const DynamicsModel& model, std::span<const double> state,
                               bool adjoint = false);

double apply_generator_fd(const DynamicsModel& model, const ScalarField& phi,
                          std::span<const double> state);
// Throws std::invalid_argument when the model has no analytic adjoint drift.
double apply_adjoint_generator_fd(const DynamicsModel& model, const ScalarField& phi,
                                  std::span<const double> state);

// Subtracts a Monte Carlo estimate of E_mu[field] computed from n_samples
// invariant draws; estimators require mu-centered observables.
ScalarField centered_field(const DynamicsModel& model, ScalarField field,
                           std::size_t n_samples = 1000000, std::uint64_t seed = 0x5eedc0de);

}  // namespace gkcv
