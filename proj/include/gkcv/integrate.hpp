#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gkcv/common.hpp"
#include "gkcv/model.hpp"

namespace gkcv {

struct SimConfig {
  double dt = 0.01;
  double horizon = 1.0;
  std::size_t n_replicas = 1;
  std::uint64_t seed = 0;
  void validate() const;
  // floor(horizon / dt), guarded against representation error
  std::size_t n_steps() const;
};

// One replica: observable streams on the uniform grid t_n = n dt,
// n = 0..floor(T/dt). Raw states are not retained.
struct Trajectory {
  double dt = 0.0;
  double horizon = 0.0;
  double f_at_zero = 0.0;  // equals f_series[0]
  std::vector<double> f_series;
  std::vector<double> g_series;
  // optional streams, empty when not requested
  std::vector<double> g_corr;        // (g + L psi_g)(X_t)
  std::vector<double> f_corr;        // (f + L* psi_f*)(X_t)
  std::vector<double> psi_g_series;  // psi_g(X_t), for static terms
  std::vector<double> psi_f_series;  // psi_f*(X_t)
  std::size_t n_points() const { return f_series.size(); }
};

// Observables recorded along a simulation; f and g required, the rest
// optional. Corrected streams are evaluated while stepping, so no states
// need to be stored. With f_corr_at_zero_only set, the corrected f stream is
// evaluated once at the initial condition (the near-zero-cost adjoint
// correction) and f_corr holds a single entry.
struct Observables {
  ScalarField f;
  ScalarField g;
  ScalarField g_corr;
  ScalarField f_corr;
  ScalarField psi_g;
  ScalarField psi_f;
  bool f_corr_at_zero_only = false;
};

// Deterministic pieces of the BAOAB update for one (params, dt) pair. The
// exact momentum (O) step uses the eigendecomposition of M, computed once.
struct BaoabCoeffs {
  double dt = 0.0;
  double minv[4];        // M^{-1}, row-major
  double ou_decay[4];    // exp(-gamma M^{-1} dt)
  double ou_noise[4];    // symmetric square root of beta^{-1} (I - exp(-2 gamma M^{-1} dt)) M
  static BaoabCoeffs make(const LangevinParams& params, double dt);
};

using PotentialGradient = std::function<void(double, double, double&, double&)>;

// One B(dt/2) A(dt/2) O(dt) A(dt/2) B(dt/2) step with externally supplied
// Gaussian noise; positions wrap mod 2 pi in the A sub-steps.
void baoab_step_with_noise(const LangevinParams& params, const BaoabCoeffs& coeffs,
                           const PotentialGradient& grad_v, std::span<double> state, double xi1,
                           double xi2);

// Built-in potential, noise drawn from rng.
void baoab_step(const LangevinParams& params, std::span<double> state, double dt, Rng& rng);

// Euler-Maruyama: x + b(x) dt + sigma(x) sqrt(dt) xi.
void em_step(const DynamicsModel& model, std::span<double> state, double dt, Rng& rng);

// K independent stationary-start replicas. Replica k draws X_0 and its noise
// from a stream derived from (cfg.seed, k) alone, so the result is identical
// for any partitioning of replicas across workers. BAOAB is used for the
// Langevin model, Euler-Maruyama otherwise; observables are recorded at step
// boundaries (post-step). A non-finite observable value aborts with the
// replica index.
std::vector<Trajectory> simulate_replicas(const DynamicsModel& model, const Observables& obs,
                                          const SimConfig& cfg);

// Same, writing into trajectories[first_replica_offset + i] slots of a
// pre-sized buffer; used for chunked streaming over large K.
void simulate_replicas_into(const DynamicsModel& model, const Observables& obs,
                            const SimConfig& cfg, std::size_t first_replica_index,
                            std::size_t count, std::span<Trajectory> out);

}  // namespace gkcv
