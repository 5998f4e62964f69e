#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gkcv/config.hpp"
#include "gkcv/estimate.hpp"
#include "gkcv/surrogate.hpp"

namespace gkcv {

enum class Experiment { OuWeights, LangevinMobility, MultiscaleCoeffs };

const char* experiment_name(Experiment e);

struct ExperimentConfig {
  Experiment experiment = Experiment::OuWeights;
  SimConfig sim;
  double horizon_he = 0.0;  // 0: use sim.horizon
  std::optional<TrainConfig> train;
  std::string train_load_dir;
  std::vector<std::string> weights;          // ou_weights study
  std::string he_weight = "constant";       // weight for the he estimators
  std::vector<EstimatorKind> estimators;
  std::string output_dir = "out";
  bool zero_surrogates = false;
  LangevinParams langevin;
  MultiscaleParams multiscale;
  std::vector<std::string> multiscale_quantities{"A0_11", "F3"};
  std::size_t static_samples = 1000000;  // iid mu-samples for langevin statics
  std::size_t oracle_points = 6;         // he-variance oracle curve resolution
  bool fail_on_check = false;

  double he_horizon() const { return horizon_he > 0.0 ? horizon_he : sim.horizon; }
  void validate() const;
  static ExperimentConfig from_config(const Config& cfg);
};

// One estimator's outcome: the report covers the correction estimator alone;
// the static part (zero for plain estimators) completes the transport
// coefficient.
struct EstimatorOutcome {
  std::string name;
  EstimatorKind kind = EstimatorKind::GkPlain;
  EstimatorReport report;
  double static_term = 0.0;
  double rho_total = 0.0;
};

struct RunManifest {
  std::string experiment;
  Config config_echo;
  std::uint64_t sim_seed = 0;
  std::uint64_t train_seed = 0;
  std::vector<EstimatorOutcome> outcomes;
  std::string oracle_json = "{}";  // experiment-specific comparisons
  std::string checks_json = "{}";
  bool checks_passed = true;
  double wall_train = 0.0;
  double wall_simulate = 0.0;
  double wall_estimate = 0.0;
  // extra CSV artifacts: (filename, contents)
  std::vector<std::pair<std::string, std::string>> extra_csv;

  std::string to_json() const;
};

RunManifest run_ou_weights(const ExperimentConfig& cfg);
RunManifest run_langevin_mobility(const ExperimentConfig& cfg);
RunManifest run_multiscale_coeffs(const ExperimentConfig& cfg);
RunManifest run_experiment(const ExperimentConfig& cfg);

// Writes manifest.json, one variance_<estimator>.csv per outcome, any extra
// CSV artifacts, and summary.csv (runtime/variance/cost ratios normalized by
// the matching plain row).
void emit_reports(const RunManifest& manifest, const std::string& output_dir);

// <a, b>_mu by plain iid Monte Carlo over invariant draws.
double static_iid_mc(const DynamicsModel& model, const ScalarField& a, const ScalarField& b,
                     std::size_t n_samples, std::uint64_t seed);

}  // namespace gkcv
