#include "gkcv/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "gkcv/common.hpp"

namespace gkcv::quad {

namespace {

// Eigenvalues of a symmetric tridiagonal matrix (diag all zero here, but kept
// general) by Sturm-sequence bisection. Robust and dependency-free; n stays
// small (<= a few hundred nodes).
std::vector<double> tridiag_eigenvalues(const std::vector<double>& diag,
                                        const std::vector<double>& offdiag) {
  const int n = static_cast<int>(diag.size());
  std::vector<double> b2(n, 0.0);
  double radius = 0.0;
  for (int i = 0; i < n; ++i) {
    double r = std::abs(diag[i]);
    if (i > 0) r += std::abs(offdiag[i - 1]);
    if (i + 1 < n) r += std::abs(offdiag[i]);
    radius = std::max(radius, r);
  }
  for (int i = 0; i + 1 < n; ++i) b2[i] = offdiag[i] * offdiag[i];

  // number of eigenvalues < lambda
  auto count_below = [&](double lambda) {
    int count = 0;
    double d = 1.0;
    for (int i = 0; i < n; ++i) {
      d = diag[i] - lambda - (i > 0 ? b2[i - 1] / d : 0.0);
      if (d == 0.0) d = -1e-300;
      if (d < 0.0) ++count;
    }
    return count;
  };

  std::vector<double> eig(n);
  for (int k = 0; k < n; ++k) {
    double lo = -radius, hi = radius;
    for (int iter = 0; iter < 200; ++iter) {
      double mid = 0.5 * (lo + hi);
      if (mid == lo || mid == hi) break;
      if (count_below(mid) <= k)
        lo = mid;
      else
        hi = mid;
    }
    eig[k] = 0.5 * (lo + hi);
  }
  std::sort(eig.begin(), eig.end());
  return eig;
}

// Golub-Welsch nodes from the Jacobi matrix, weights via the Christoffel
// function w_i = mu0 / sum_k p_k(x_i)^2 with orthonormal polynomials p_k.
GaussRule rule_from_recurrence(int n, double mu0, const std::vector<double>& offdiag) {
  std::vector<double> diag(n, 0.0);
  GaussRule rule;
  rule.x = tridiag_eigenvalues(diag, offdiag);
  rule.w.resize(n);
  for (int i = 0; i < n; ++i) {
    const double x = rule.x[i];
    double pm = 0.0;
    double p = 1.0;  // unnormalized p0; normalization cancels in the ratio below
    double ssq = p * p;
    for (int k = 0; k + 1 < n; ++k) {
      double pn = (x * p - (k > 0 ? offdiag[k - 1] * pm : 0.0)) / offdiag[k];
      pm = p;
      p = pn;
      ssq += p * p;
    }
    rule.w[i] = mu0 / ssq;
  }
  return rule;
}

const GaussRule& cached_gl(int n) {
  static std::mutex m;
  static std::map<int, GaussRule> cache;  // node-based: references stay valid
  std::lock_guard<std::mutex> lock(m);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, gauss_legendre(n)).first;
  return it->second;
}

struct AdaptiveState {
  const std::function<double(double)>* f;
  double tol_scale = 1.0;  // |I| estimate for relative tolerance
  double rel_tol = 0.0, abs_tol = 0.0;
  int max_depth = 48;
};

double gl_on(const GaussRule& rule, const std::function<double(double)>& f, double a, double b) {
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.x.size(); ++i) acc += rule.w[i] * f(mid + half * rule.x[i]);
  return half * acc;
}

double adaptive_rec(const AdaptiveState& st, double a, double b, double coarse, int depth) {
  const GaussRule& g7 = cached_gl(7);
  const GaussRule& g15 = cached_gl(15);
  const double fine = gl_on(g15, *st.f, a, b);
  const double err = std::abs(fine - coarse);
  const double tol = std::max(st.abs_tol, st.rel_tol * st.tol_scale);
  // local acceptance scaled by interval share keeps the global error near tol
  if (err <= tol * 0.5 || err <= 1e-16 * std::abs(fine)) return fine;
  if (depth >= st.max_depth)
    throw NumericError("adaptive quadrature did not converge (depth limit)");
  const double mid = 0.5 * (a + b);
  AdaptiveState sub = st;
  sub.rel_tol = st.rel_tol * 0.5;
  sub.abs_tol = st.abs_tol * 0.5;
  return adaptive_rec(sub, a, mid, gl_on(g7, *st.f, a, mid), depth + 1) +
         adaptive_rec(sub, mid, b, gl_on(g7, *st.f, mid, b), depth + 1);
}

}  // namespace

GaussRule gauss_legendre(int n) {
  std::vector<double> off(n > 1 ? n - 1 : 0);
  for (int k = 1; k < n; ++k) off[k - 1] = k / std::sqrt(4.0 * k * k - 1.0);
  return rule_from_recurrence(n, 2.0, off);
}

GaussRule gauss_hermite(int n) {
  std::vector<double> off(n > 1 ? n - 1 : 0);
  for (int k = 1; k < n; ++k) off[k - 1] = std::sqrt(0.5 * k);
  return rule_from_recurrence(n, std::sqrt(M_PI), off);
}

double adaptive(const std::function<double(double)>& f, double a, double b, double rel_tol,
                double abs_tol, int max_depth) {
  if (a == b) return 0.0;
  AdaptiveState st;
  st.f = &f;
  st.rel_tol = rel_tol;
  st.abs_tol = abs_tol;
  st.max_depth = max_depth;
  const double coarse = gl_on(cached_gl(7), f, a, b);
  st.tol_scale = std::max(std::abs(gl_on(cached_gl(15), f, a, b)), 1e-30);
  return adaptive_rec(st, a, b, coarse, 0);
}

double gaussian_expect_1d(const std::function<double(double)>& f, double variance,
                          double rel_tol) {
  const double scale = std::sqrt(2.0 * variance);
  const double inv_sqrt_pi = 1.0 / std::sqrt(M_PI);
  double prev = 0.0;
  for (int n = 24; n <= 384; n *= 2) {
    const GaussRule rule = gauss_hermite(n);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += rule.w[i] * f(scale * rule.x[i]);
    acc *= inv_sqrt_pi;
    if (n > 24 && std::abs(acc - prev) <= rel_tol * std::max(1e-14, std::abs(acc))) return acc;
    prev = acc;
  }
  throw NumericError("gaussian_expect_1d did not converge");
}

double gaussian_expect_2d(const std::function<double(double, double)>& f, double var1, double var2,
                          double rel_tol) {
  const double s1 = std::sqrt(2.0 * var1), s2 = std::sqrt(2.0 * var2);
  const double norm = 1.0 / M_PI;
  double prev = 0.0;
  for (int n = 24; n <= 192; n *= 2) {
    const GaussRule rule = gauss_hermite(n);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      double inner = 0.0;
      for (int j = 0; j < n; ++j) inner += rule.w[j] * f(s1 * rule.x[i], s2 * rule.x[j]);
      acc += rule.w[i] * inner;
    }
    acc *= norm;
    if (n > 24 && std::abs(acc - prev) <= rel_tol * std::max(1e-14, std::abs(acc))) return acc;
    prev = acc;
  }
  throw NumericError("gaussian_expect_2d did not converge");
}

double tensor_gl_2d(const std::function<double(double, double)>& f, double ax, double bx, double ay,
                    double by, int n) {
  const GaussRule rule = gauss_legendre(n);
  const double mx = 0.5 * (ax + bx), hx = 0.5 * (bx - ax);
  const double my = 0.5 * (ay + by), hy = 0.5 * (by - ay);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = mx + hx * rule.x[i];
    double inner = 0.0;
    for (int j = 0; j < n; ++j) inner += rule.w[j] * f(x, my + hy * rule.x[j]);
    acc += rule.w[i] * inner;
  }
  return acc * hx * hy;
}

}  // namespace gkcv::quad
