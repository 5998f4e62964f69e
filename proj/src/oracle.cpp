#include "gkcv/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "gkcv/quadrature.hpp"

namespace gkcv::oracle {

double ou_gk_bias(double T) { return -std::exp(-T); }

double ou_gk_variance(double T) { return 2.0 * T - 1.0 + std::exp(-2.0 * T); }

double ou_he_mean(double T, const WeightFunction& w) {
  return quad::adaptive(
      [&](double theta) { return (1.0 - theta / T) * w.eval(theta / T) * std::exp(-theta); }, 0.0,
      T, 1e-8);
}

double ou_he_bias(double T, const WeightFunction& w) { return ou_he_mean(T, w) - 1.0; }

namespace {

// int_a^b (al + bl t) e^(c + d t) dt, exact
double linear_exp_integral(double al, double bl, double c, double d, double a, double b) {
  if (d == 0.0) {
    const double ec = std::exp(c);
    return ec * (al * (b - a) + 0.5 * bl * (b * b - a * a));
  }
  auto antideriv = [&](double t) {
    return std::exp(c + d * t) * ((al + bl * t) / d - bl / (d * d));
  };
  return antideriv(b) - antideriv(a);
}

}  // namespace

// Cov(A(u), A(v)) for A(u) = int_0^{T-u} X_s X_{s+u} ds under the stationary
// OU process. With theta = sigma - s the two non-product Isserlis terms are
//   h1 = exp(-|theta| - |theta + v - u|),  h2 = exp(-|theta + v| - |theta - u|),
// and the (s, sigma) box integrates to int L(theta) (h1 + h2) dtheta with the
// piecewise-linear overlap length L. Both factors are piecewise exp(c + d t),
// so every piece has a closed form.
double ou_lag_covariance(double T, double u, double v) {
  const double A = T - u;  // s range
  const double B = T - v;  // sigma range
  if (A <= 0.0 || B <= 0.0) return 0.0;

  double cuts[6] = {-A, B, 0.0, u - v, -v, u};
  std::sort(std::begin(cuts), std::end(cuts));

  double acc = 0.0;
  double lo = -A;
  for (int piece = 0; piece <= 6; ++piece) {
    const double hi = piece < 6 ? std::clamp(cuts[piece], -A, B) : B;
    if (hi <= lo) continue;
    const double mid = 0.5 * (lo + hi);

    // L(theta) = min(A, B - theta) - max(0, -theta) as al + bl*theta
    double al, bl;
    if (A <= B - mid) {
      al = A;
      bl = 0.0;
    } else {
      al = B;
      bl = -1.0;
    }
    if (mid < 0.0) {
      al += 0.0;
      bl += 1.0;  // minus (-theta)
    }

    const double s1 = mid >= 0.0 ? 1.0 : -1.0;
    const double s2 = mid + v - u >= 0.0 ? 1.0 : -1.0;
    const double s3 = mid + v >= 0.0 ? 1.0 : -1.0;
    const double s4 = mid - u >= 0.0 ? 1.0 : -1.0;
    // exponent of h1: -s1*theta - s2*(theta + v - u)
    acc += linear_exp_integral(al, bl, -s2 * (v - u), -s1 - s2, lo, hi);
    // exponent of h2: -s3*(theta + v) - s4*(theta - u)
    acc += linear_exp_integral(al, bl, -s3 * v + s4 * u, -s3 - s4, lo, hi);
    lo = hi;
  }
  return acc;
}

double ou_he_variance(double T, const WeightFunction& w) {
  // Var = (1/T^2) int over [0,T]^2 of w(u/T) w(v/T) Cov(A(u), A(v)); the
  // integrand is symmetric under (u,v) swap, so integrate over the triangle
  // u <= v (mapped to a square via u = s v) and double. This keeps the
  // diagonal kink of Cov on the domain edge.
  auto triangle_integral = [&](int n) {
    const double val = quad::tensor_gl_2d(
        [&](double vv, double s) {
          const double uu = s * vv;
          return vv * w.eval(uu / T) * w.eval(vv / T) * ou_lag_covariance(T, uu, vv);
        },
        0.0, T, 0.0, 1.0, n);
    return 2.0 * val / (T * T);
  };
  const double coarse = triangle_integral(200);
  const double fine = triangle_integral(400);
  if (std::abs(fine - coarse) > 1e-4 * std::max(std::abs(fine), 1e-12))
    throw NumericError("ou_he_variance: outer quadrature did not converge between 200^2 and 400^2 nodes");
  return fine;
}

double cov_identity_check(const std::function<double(double)>& f, double T) {
  const double tol = 1e-12;
  const double lhs1 = quad::adaptive(
      [&](double t) { return quad::adaptive(f, 0.0, t, tol, 1e-14); }, 0.0, T, tol, 1e-14);
  const double rhs1 =
      quad::adaptive([&](double theta) { return f(theta) * (T - theta); }, 0.0, T, tol, 1e-14);

  const double lhs2 = quad::adaptive(
      [&](double t) {
        return quad::adaptive([&](double s) { return f((t - s) / T); }, 0.0, t, tol, 1e-14);
      },
      0.0, T, tol, 1e-14);
  const double rhs2 =
      T * T * quad::adaptive([&](double v) { return f(v) * (1.0 - v); }, 0.0, 1.0, tol, 1e-14);

  return std::max(std::abs(lhs1 - rhs1), std::abs(lhs2 - rhs2));
}

HomogenizedCoefficients homogenized_oracle(double alpha, const std::array<double, 3>& x) {
  // On the span of linear functions a y1 + b y2 the fast generator acts as
  // -L (a, b) = M (a, b) with M = [[1, -alpha], [alpha, 1]]; solve M c = e_i.
  const double det = 1.0 + alpha * alpha;
  // c1 solves -L phi = y1, c2 solves -L phi = y2
  const std::array<double, 2> c1{1.0 / det, -alpha / det};
  const std::array<double, 2> c2{alpha / det, 1.0 / det};
  // phi3 = x1 phi2 - x2 phi1 by linearity of f3 = x1 y2 - x2 y1
  const std::array<double, 2> c3{x[0] * c2[0] - x[1] * c1[0], x[0] * c2[1] - x[1] * c1[1]};

  // observable coefficient vectors: f1 = y1, f2 = y2, f3 = -x2 y1 + x1 y2
  const std::array<std::array<double, 2>, 3> fcoef{{{1.0, 0.0}, {0.0, 1.0}, {-x[1], x[0]}}};
  const std::array<std::array<double, 2>, 3> phi{{c1, c2, c3}};

  // <l . y, m . y> under N(0, I/2) is (l . m) / 2
  auto half_dot = [](const std::array<double, 2>& l, const std::array<double, 2>& m) {
    return 0.5 * (l[0] * m[0] + l[1] * m[1]);
  };

  HomogenizedCoefficients out{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out.A0[i * 3 + j] = half_dot(fcoef[i], phi[j]);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out.AAt[i * 3 + j] = out.A0[i * 3 + j] + out.A0[j * 3 + i];

  // F_i = sum_j <f_j, d(phi_i)/dx_j>; phi1, phi2 carry no x-dependence, and
  // d(phi3)/dx = (phi2, -phi1, 0)
  out.F = {0.0, 0.0, half_dot(fcoef[0], c2) - half_dot(fcoef[1], c1)};
  return out;
}

}  // namespace gkcv::oracle
