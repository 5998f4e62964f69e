#pragma once

#include <array>
#include <functional>

#include "gkcv/estimate.hpp"

namespace gkcv::oracle {

// Stationary autocovariance of the unit Ornstein-Uhlenbeck process.
inline double ou_autocovariance(double t) { return std::exp(-std::abs(t)); }

// Closed-form bias/variance of the truncated time-correlation estimator for
// the OU process with identity observables, one replica.
double ou_gk_bias(double T);      // -exp(-T)
double ou_gk_variance(double T);  // 2T - 1 + exp(-2T)

// Mean / bias of the weighted double-integral estimator: quadrature of
// int_0^T (1 - theta/T) w(theta/T) exp(-theta) dtheta (and minus one).
double ou_he_mean(double T, const WeightFunction& w);
double ou_he_bias(double T, const WeightFunction& w);

// One-replica variance of the weighted estimator. The inner lag-covariance
// double integral is evaluated in closed piecewise-exponential form; the
// outer 2-D integral by tensor Gauss-Legendre with node-doubling convergence
// control (throws NumericError if 200^2 vs 400^2 disagree beyond 1e-4).
double ou_he_variance(double T, const WeightFunction& w);

// Exposed for validation: covariance of the two lag integrals,
// Cov(A(u), A(v)) with A(u) = int_0^{T-u} X_s X_{s+u} ds.
double ou_lag_covariance(double T, double u, double v);

// Residual of the triangular-domain change-of-variables identity
//   int_0^T int_0^t f(t-s) ds dt = int_0^T f(theta) (T - theta) dtheta
// and of its scaled form with f((t-s)/T); returns the larger of the two.
double cov_identity_check(const std::function<double(double)>& f, double T);

struct HomogenizedCoefficients {
  std::array<double, 3> F;
  std::array<double, 9> A0;   // row-major
  std::array<double, 9> AAt;  // A0 + A0^T
};

// Effective drift and diffusion of the slow block: the fast-generator Poisson
// equations are solved exactly on the span of linear functions of y, then the
// coefficients are Gaussian moments against N(0, I/2).
HomogenizedCoefficients homogenized_oracle(double alpha, const std::array<double, 3>& x);

}  // namespace gkcv::oracle
