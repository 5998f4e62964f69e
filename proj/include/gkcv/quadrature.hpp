#pragma once

#include <functional>
#include <vector>

namespace gkcv::quad {

struct GaussRule {
  std::vector<double> x;
  std::vector<double> w;
};

// n-point Gauss-Legendre rule on [-1, 1].
GaussRule gauss_legendre(int n);

// n-point Gauss-Hermite rule for the weight exp(-x^2) on the real line.
GaussRule gauss_hermite(int n);

// Adaptive bisection with a nested GL7/GL15 pair per interval. Throws
// NumericError if the recursion depth limit is hit before the local error
// estimate meets the tolerance.
double adaptive(const std::function<double(double)>& f, double a, double b, double rel_tol,
                double abs_tol = 0.0, int max_depth = 48);

// E[f(X)] for X ~ N(0, variance); node count doubled until the relative
// change is below rel_tol.
double gaussian_expect_1d(const std::function<double(double)>& f, double variance,
                          double rel_tol = 1e-10);

// E[f(X1, X2)] for independent centered Gaussians with the given variances.
double gaussian_expect_2d(const std::function<double(double, double)>& f, double var1, double var2,
                          double rel_tol = 1e-10);

// Tensor Gauss-Legendre over [ax,bx] x [ay,by] with n nodes per axis.
double tensor_gl_2d(const std::function<double(double, double)>& f, double ax, double bx, double ay,
                    double by, int n);

}  // namespace gkcv::quad
