#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

namespace gkcv {

// Thrown on invalid user configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown on numerical failure: divergence, NaN propagation, quadrature
// non-convergence (CLI exit code 3).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

// A scalar observable on model states.
using ScalarField = std::function<double(std::span<const double>)>;

// SplitMix64 finalizer; bijective on 64-bit words.
std::uint64_t mix64(std::uint64_t x);

// Independent stream for one replica: derived from (master seed, index) only,
// so results do not depend on how replicas are partitioned across workers.
Rng stream_rng(std::uint64_t master_seed, std::uint64_t stream_index);

// Worker count: hardware concurrency, capped by the GKCV_THREADS env var.
unsigned worker_count();

// Runs body(i) for i in [0, n). Any exception from a worker is rethrown on
// the calling thread (first one wins).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace gkcv
