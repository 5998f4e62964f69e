#pragma once

#include <cstddef>
#include <string_view>

// Dense inner loops shared by the estimators and the network code: dot
// products (plain and reversed), axpy updates, and small dense matrix
// kernels. A scalar reference backend always exists; an AVX2+FMA backend is
// selected at runtime on capable x86-64 hosts. The two backends agree to
// rounding (association order differs), which the kernel tests check.
//
// Set GKCV_SIMD=scalar (or =avx2) to force a backend.

namespace gkcv::kernels {

struct Backend {
  const char* name;
  // sum_i a[i]*b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // sum_i a[i]*b[n-1-i]
  double (*dot_rev)(const double* a, const double* b, std::size_t n);
  // sum_i a[i]
  double (*sum)(const double* a, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y[i] += alpha * x[n-1-i]
  void (*axpy_rev)(double alpha, const double* x, double* y, std::size_t n);
  // y = W x (+ bias if non-null); W row-major, rows x cols
  void (*matvec)(const double* w, std::size_t rows, std::size_t cols, const double* x,
                 const double* bias, double* y);
  // y = W^T u; y has cols entries (overwritten)
  void (*matvec_t)(const double* w, std::size_t rows, std::size_t cols, const double* u, double* y);
  // W[r][c] += alpha * u[r] * v[c]
  void (*rank1_update)(double alpha, const double* u, const double* v, double* w, std::size_t rows,
                       std::size_t cols);
};

const Backend& scalar_backend();

// Returns null if the named backend is unavailable on this host.
const Backend* backend_by_name(std::string_view name);

// Backend chosen at startup (env override, then best available).
const Backend& active();

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline double dot_rev(const double* a, const double* b, std::size_t n) {
  return active().dot_rev(a, b, n);
}
inline double sum(const double* a, std::size_t n) { return active().sum(a, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}
inline void axpy_rev(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy_rev(alpha, x, y, n);
}
inline void matvec(const double* w, std::size_t rows, std::size_t cols, const double* x,
                   const double* bias, double* y) {
  active().matvec(w, rows, cols, x, bias, y);
}
inline void matvec_t(const double* w, std::size_t rows, std::size_t cols, const double* u,
                     double* y) {
  active().matvec_t(w, rows, cols, u, y);
}
inline void rank1_update(double alpha, const double* u, const double* v, double* w,
                         std::size_t rows, std::size_t cols) {
  active().rank1_update(alpha, u, v, w, rows, cols);
}

}  // namespace gkcv::kernels
