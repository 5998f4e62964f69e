#include "gkcv/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace gkcv::kernels {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double dot_rev_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[n - 1 - i];
  return acc;
}

double sum_scalar(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_rev_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[n - 1 - i];
}

void matvec_scalar(const double* w, std::size_t rows, std::size_t cols, const double* x,
                   const double* bias, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = bias ? bias[r] : 0.0;
    const double* row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

void matvec_t_scalar(const double* w, std::size_t rows, std::size_t cols, const double* u,
                     double* y) {
  for (std::size_t c = 0; c < cols; ++c) y[c] = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) y[c] += u[r] * row[c];
  }
}

void rank1_update_scalar(double alpha, const double* u, const double* v, double* w,
                         std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double au = alpha * u[r];
    double* row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += au * v[c];
  }
}

const Backend kScalar = {
    "scalar",       dot_scalar,      dot_rev_scalar, sum_scalar,
    axpy_scalar,    axpy_rev_scalar, matvec_scalar,  matvec_t_scalar,
    rank1_update_scalar,
};

const Backend* select_backend() {
  const Backend* best = &kScalar;
#if defined(GKCV_HAVE_AVX2_TU)
  if (const Backend* avx2 = backend_by_name("avx2")) best = avx2;
#endif
  if (const char* env = std::getenv("GKCV_SIMD")) {
    if (const Backend* forced = backend_by_name(env)) return forced;
    return &kScalar;  // unknown or unavailable name: fail safe
  }
  return best;
}

}  // namespace

const Backend& scalar_backend() { return kScalar; }

#if defined(GKCV_HAVE_AVX2_TU)
const Backend* avx2_backend();  // defined in kernels_avx2.cpp
#endif

const Backend* backend_by_name(std::string_view name) {
  if (name == "scalar") return &kScalar;
#if defined(GKCV_HAVE_AVX2_TU)
  if (name == "avx2") return avx2_backend();
#endif
  return nullptr;
}

const Backend& active() {
  static const Backend* chosen = select_backend();
  return *chosen;
}

}  // namespace gkcv::kernels
