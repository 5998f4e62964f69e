#include "gkcv/kernels.hpp"

#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"

using namespace gkcv;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> normal;
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

// tolerance for reassociated reductions
bool close(double a, double b, double scale) {
  return std::abs(a - b) <= 1e-12 * (1.0 + scale);
}

}  // namespace

TEST_CASE("scalar backend reference values") {
  const auto& s = kernels::scalar_backend();
  const double a[4] = {1, 2, 3, 4};
  const double b[4] = {5, 6, 7, 8};
  CHECK(s.dot(a, b, 4) == 70.0);
  CHECK(s.dot_rev(a, b, 4) == 1 * 8 + 2 * 7 + 3 * 6 + 4 * 5.0);
  CHECK(s.sum(a, 4) == 10.0);
  double y[4] = {0, 0, 0, 0};
  s.axpy(2.0, a, y, 4);
  CHECK(y[3] == 8.0);
  double z[4] = {0, 0, 0, 0};
  s.axpy_rev(1.0, a, z, 4);
  CHECK(z[0] == 4.0);
  CHECK(z[3] == 1.0);
}

TEST_CASE("matvec and rank1 reference values") {
  const auto& s = kernels::scalar_backend();
  // W = [[1,2],[3,4],[5,6]], x = (1,-1), bias = (10,20,30)
  const double w[6] = {1, 2, 3, 4, 5, 6};
  const double x[2] = {1, -1};
  const double bias[3] = {10, 20, 30};
  double y[3];
  s.matvec(w, 3, 2, x, bias, y);
  CHECK(y[0] == 9.0);
  CHECK(y[1] == 19.0);
  CHECK(y[2] == 29.0);
  const double u[3] = {1, 0, 2};
  double yt[2];
  s.matvec_t(w, 3, 2, u, yt);
  CHECK(yt[0] == 11.0);
  CHECK(yt[1] == 14.0);
  double wmut[6] = {0, 0, 0, 0, 0, 0};
  const double v[2] = {1, 2};
  s.rank1_update(0.5, u, v, wmut, 3, 2);
  CHECK(wmut[0] == 0.5);
  CHECK(wmut[1] == 1.0);
  CHECK(wmut[4] == 1.0);
  CHECK(wmut[5] == 2.0);
}

TEST_CASE("active backend matches scalar backend on random data") {
  const auto& scalar = kernels::scalar_backend();
  const auto& act = kernels::active();
  INFO("active backend: ", std::string(act.name));
  std::mt19937_64 rng(7);
  // sweep lengths across all vector-remainder cases
  for (std::size_t n = 0; n <= 67; ++n) {
    auto a = random_vec(rng, n);
    auto b = random_vec(rng, n);
    const double scale = static_cast<double>(n) + 1.0;
    CHECK(close(act.dot(a.data(), b.data(), n), scalar.dot(a.data(), b.data(), n), scale));
    CHECK(close(act.dot_rev(a.data(), b.data(), n), scalar.dot_rev(a.data(), b.data(), n), scale));
    CHECK(close(act.sum(a.data(), n), scalar.sum(a.data(), n), scale));

    // elementwise: backends may fuse the multiply-add, so allow one rounding
    auto y1 = random_vec(rng, n);
    auto y2 = y1;
    act.axpy(0.37, a.data(), y1.data(), n);
    scalar.axpy(0.37, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(close(y1[i], y2[i], 1.0));

    auto z1 = random_vec(rng, n);
    auto z2 = z1;
    act.axpy_rev(-1.25, a.data(), z1.data(), n);
    scalar.axpy_rev(-1.25, a.data(), z2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(close(z1[i], z2[i], 1.0));
  }
}

TEST_CASE("avx2 backend equals scalar backend where available") {
  const auto* avx2 = kernels::backend_by_name("avx2");
  if (!avx2) {
    MESSAGE("avx2 backend unavailable on this host; skipping");
    return;
  }
  const auto& scalar = kernels::scalar_backend();
  std::mt19937_64 rng(99);
  for (std::size_t rows : {1u, 3u, 7u, 15u}) {
    for (std::size_t cols : {1u, 2u, 5u, 12u, 33u}) {
      auto w = random_vec(rng, rows * cols);
      auto x = random_vec(rng, cols);
      auto bias = random_vec(rng, rows);
      std::vector<double> y1(rows), y2(rows);
      avx2->matvec(w.data(), rows, cols, x.data(), bias.data(), y1.data());
      scalar.matvec(w.data(), rows, cols, x.data(), bias.data(), y2.data());
      for (std::size_t i = 0; i < rows; ++i) CHECK(close(y1[i], y2[i], static_cast<double>(cols)));

      auto u = random_vec(rng, rows);
      std::vector<double> t1(cols), t2(cols);
      avx2->matvec_t(w.data(), rows, cols, u.data(), t1.data());
      scalar.matvec_t(w.data(), rows, cols, u.data(), t2.data());
      for (std::size_t i = 0; i < cols; ++i) CHECK(close(t1[i], t2[i], static_cast<double>(rows)));

      auto w1 = w;
      auto w2 = w;
      avx2->rank1_update(0.7, u.data(), x.data(), w1.data(), rows, cols);
      scalar.rank1_update(0.7, u.data(), x.data(), w2.data(), rows, cols);
      for (std::size_t i = 0; i < rows * cols; ++i) CHECK(close(w1[i], w2[i], 1.0));
    }
  }
}

TEST_CASE("empty inputs are no-ops") {
  const auto& act = kernels::active();
  CHECK(act.dot(nullptr, nullptr, 0) == 0.0);
  CHECK(act.sum(nullptr, 0) == 0.0);
  act.axpy(1.0, nullptr, nullptr, 0);
}
