#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gkcv/integrate.hpp"
#include "gkcv/model.hpp"

namespace gkcv {

// Lag-damping kernel on [0,1]; zero beyond 1. Catalog entries satisfy
// w(0) = 1.
struct WeightFunction {
  std::string name;
  std::function<double(double)> eval;
};

// Constant, Bartlett, Parzen, Tukey-Hanning, Parzen-Riesz, Parzen-Geometric,
// Parzen-Cauchy.
const std::vector<WeightFunction>& weight_catalog();
const WeightFunction* find_weight(const std::string& name);

// zeta_w = int_0^1 (1 - v) w(v)^2 dv, adaptive quadrature to 1e-8 relative.
double zeta(const WeightFunction& w);

struct EstimatorReport {
  std::string estimator;
  double rho_hat = 0.0;
  // (t, unbiased variance over replicas of the partial estimate up to t);
  // variance entries are NaN when K = 1.
  std::vector<std::pair<double, double>> variance_vs_time;
  double runtime_seconds = 0.0;
  double cost = 0.0;

  double final_variance() const;
  void set_runtime(double seconds);  // also recomputes cost = runtime * final variance
};

std::string report_to_json(const EstimatorReport& report);
EstimatorReport report_from_json(const std::string& text);
// CSV with header "t,variance"; K=1 rows carry "undefined (K=1)".
void report_variance_csv(const EstimatorReport& report, std::ostream& os);

// Which observable streams an estimator contracts. Plain uses (f, g); the
// control-variate variants swap in the corrected streams recorded by the
// simulation: forward g -> g + L psi_g, adjoint f -> f + L* psi_f*, combined
// both. With corrected streams equal to the plain ones, every variant is
// bitwise identical to the plain estimator.
enum class CvKind { Plain, Forward, Adjoint, Combined };

// Streaming accumulators: feed replicas in chunks (deterministic in replica
// index, independent of chunking or worker count), then finalize once.
class GkAccumulator {
 public:
  explicit GkAccumulator(CvKind kind, std::size_t eval_stride = 10);
  void process(std::span<const Trajectory> trajs);
  EstimatorReport finalize(std::string name);
  std::size_t replicas() const { return partials_.size(); }
  const std::vector<std::vector<double>>& partials() const { return partials_; }
  const std::vector<std::size_t>& eval_indices() const { return eval_idx_; }
  double dt() const { return dt_; }
  double accum_seconds() const { return accum_seconds_; }

 private:
  CvKind kind_;
  std::size_t stride_;
  double dt_ = -1.0;
  std::size_t n_ = 0;
  std::size_t base_ = 0;
  std::vector<std::size_t> eval_idx_;
  std::vector<std::vector<double>> partials_;
  double accum_seconds_ = 0.0;
};

class HeAccumulator {
 public:
  HeAccumulator(CvKind kind, WeightFunction w, std::size_t eval_stride = 10);
  void process(std::span<const Trajectory> trajs);
  EstimatorReport finalize(std::string name);
  std::size_t replicas() const { return partials_.size(); }
  const std::vector<std::vector<double>>& partials() const { return partials_; }
  const std::vector<std::size_t>& eval_indices() const { return eval_idx_; }
  double dt() const { return dt_; }
  double accum_seconds() const { return accum_seconds_; }

 private:
  CvKind kind_;
  WeightFunction weight_;
  std::size_t stride_;
  double dt_ = -1.0;
  std::size_t n_ = 0;
  std::size_t base_ = 0;
  std::vector<std::size_t> eval_idx_;
  std::vector<std::vector<double>> weights_at_eval_;  // w(j/m) with trapezoid edge halving
  std::vector<std::vector<double>> partials_;
  double accum_seconds_ = 0.0;
};

// Assembles a report from externally combined per-replica partial estimates
// (used when one quantity sums several estimator runs replica-by-replica).
EstimatorReport report_from_partials(std::string name, double dt,
                                     std::span<const std::size_t> eval_indices,
                                     const std::vector<std::vector<double>>& partials,
                                     double runtime_seconds);

// One-shot wrappers over the accumulators.
EstimatorReport gk_estimate(std::span<const Trajectory> trajs);
EstimatorReport gk_cv_forward(std::span<const Trajectory> trajs);
EstimatorReport gk_cv_adjoint(std::span<const Trajectory> trajs);
EstimatorReport gk_cv_combined(std::span<const Trajectory> trajs);
EstimatorReport he_estimate(std::span<const Trajectory> trajs, const WeightFunction& w);
EstimatorReport he_cv_forward(std::span<const Trajectory> trajs, const WeightFunction& w);
EstimatorReport he_cv_adjoint(std::span<const Trajectory> trajs, const WeightFunction& w);
EstimatorReport he_cv_combined(std::span<const Trajectory> trajs, const WeightFunction& w);

enum class SeriesId { F, G, GCorr, FCorr, PsiG, PsiF };

// (1/TK) sum_k int_0^T a(X_t) b(X_t) dt over recorded streams.
double static_term_mc(std::span<const Trajectory> trajs, SeriesId a, SeriesId b);

// <a, b>_mu by Gauss-Hermite quadrature; only models with a centered Gaussian
// invariant measure of dimension <= 2. Larger models must use static_term_mc.
double static_term_quadrature(const DynamicsModel& model, const ScalarField& a,
                              const ScalarField& b);

enum class EstimatorKind {
  GkPlain,
  GkForward,
  GkAdjoint,
  GkCombined,
  HePlain,
  HeForward,
  HeAdjoint,
  HeCombined,
};

const char* estimator_kind_name(EstimatorKind kind);
EstimatorKind estimator_kind_from_name(const std::string& name);
bool estimator_kind_is_he(EstimatorKind kind);
CvKind estimator_cv_kind(EstimatorKind kind);

// Per-replica asymptotic variance from the corollary formulas: Green-Kubo
// kinds return the linear-in-T slope 2 a b, half-Einstein kinds the constant
// 4 zeta a b. The caller supplies the two inner-product factors appropriate
// for the kind (corrected or plain).
double asymptotic_variance_prediction(EstimatorKind kind, double factor_f, double factor_g,
                                      double zeta_w);

}  // namespace gkcv
