#include "gkcv/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gkcv/kernels.hpp"
#include "gkcv/oracle.hpp"
#include "json.hpp"

namespace gkcv {

namespace {

double clock_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const std::vector<std::string> kKnownKeys = {
    "experiment",        "sim.dt",
    "sim.horizon",       "sim.horizon_he",
    "sim.n_replicas",    "sim.seed",
    "train.learning_rate", "train.batch_size",
    "train.n_steps",     "train.seed",
    "train.load_dir",    "train.checkpoint_every",
    "weights",           "he.weight",
    "estimators",        "output_dir",
    "zero_surrogates",   "langevin.beta",
    "langevin.gamma",    "langevin.delta",
    "langevin.mass",     "langevin.e",
    "multiscale.alpha",  "multiscale.x",
    "multiscale.cube_halfwidth",
    "multiscale.quantities",
    "static.samples",    "oracle.points",
    "check.fail_on_violation",
};

}  // namespace

const char* experiment_name(Experiment e) {
  switch (e) {
    case Experiment::OuWeights:
      return "ou_weights";
    case Experiment::LangevinMobility:
      return "langevin_mobility";
    case Experiment::MultiscaleCoeffs:
      return "multiscale_coeffs";
  }
  throw std::invalid_argument("unknown experiment");
}

void ExperimentConfig::validate() const {
  sim.validate();
  bool any_cv = false;
  for (EstimatorKind kind : estimators)
    if (estimator_cv_kind(kind) != CvKind::Plain) any_cv = true;
  if (any_cv && !train && train_load_dir.empty() && !zero_surrogates)
    throw ConfigError("control-variate estimators require a train section "
                      "(or train.load_dir, or zero_surrogates)");
  if (!find_weight(he_weight)) throw ConfigError("he.weight '" + he_weight + "' not in catalog");
  for (const std::string& w : weights)
    if (!find_weight(w)) throw ConfigError("weight '" + w + "' not in catalog");
  if (experiment == Experiment::OuWeights) {
    for (EstimatorKind kind : estimators)
      if (estimator_cv_kind(kind) != CvKind::Plain)
        throw ConfigError("ou_weights study runs plain estimators only");
  }
  if (train) train->validate();
  if (experiment == Experiment::LangevinMobility) langevin.validate();
  if (experiment == Experiment::MultiscaleCoeffs) multiscale.validate();
}

ExperimentConfig ExperimentConfig::from_config(const Config& cfg) {
  cfg.validate_keys(kKnownKeys);
  ExperimentConfig out;
  const std::string exp = cfg.get_string("experiment", "");
  if (exp == "ou_weights")
    out.experiment = Experiment::OuWeights;
  else if (exp == "langevin_mobility")
    out.experiment = Experiment::LangevinMobility;
  else if (exp == "multiscale_coeffs")
    out.experiment = Experiment::MultiscaleCoeffs;
  else
    throw ConfigError("experiment must be one of ou_weights, langevin_mobility, "
                      "multiscale_coeffs (got '" + exp + "')");

  out.sim.dt = cfg.get_double("sim.dt", 0.01);
  out.sim.horizon = cfg.get_double("sim.horizon", out.experiment == Experiment::OuWeights ? 10.0 : 5.0);
  out.horizon_he = cfg.get_double("sim.horizon_he",
                                  out.experiment == Experiment::LangevinMobility ? 10.0 : 0.0);
  out.sim.n_replicas = cfg.get_uint("sim.n_replicas", 1000);
  out.sim.seed = cfg.get_uint("sim.seed", 0);

  if (cfg.has("train.learning_rate") || cfg.has("train.batch_size") || cfg.has("train.n_steps") ||
      cfg.has("train.seed")) {
    TrainConfig train;
    const bool multiscale = out.experiment == Experiment::MultiscaleCoeffs;
    train.learning_rate = cfg.get_double("train.learning_rate", 0.002);
    train.batch_size = cfg.get_uint("train.batch_size", multiscale ? 1000 : 500);
    train.n_steps = cfg.get_uint("train.n_steps", multiscale ? 1000 : 2000);
    train.seed = cfg.get_uint("train.seed", 1);
    train.checkpoint_every = cfg.get_uint("train.checkpoint_every", 100);
    out.train = train;
  }
  out.train_load_dir = cfg.get_string("train.load_dir", "");

  out.weights = cfg.get_list("weights", {"constant", "bartlett"});
  out.he_weight = cfg.get_string("he.weight", "constant");
  std::vector<std::string> est_names = cfg.get_list("estimators", {"gk_plain", "he_plain"});
  out.estimators.clear();
  for (const std::string& name : est_names) out.estimators.push_back(estimator_kind_from_name(name));
  out.output_dir = cfg.get_string("output_dir", "out");
  out.zero_surrogates = cfg.get_bool("zero_surrogates", false);

  out.langevin.beta = cfg.get_double("langevin.beta", 1.0);
  out.langevin.gamma = cfg.get_double("langevin.gamma", 1.0);
  out.langevin.delta = cfg.get_double("langevin.delta", 0.5);
  const auto mass = cfg.get_double_list("langevin.mass", {1.0, 0.0, 0.0, 1.0});
  if (mass.size() != 4) throw ConfigError("langevin.mass needs 4 entries (row-major 2x2)");
  std::copy(mass.begin(), mass.end(), out.langevin.mass.begin());
  const auto e = cfg.get_double_list("langevin.e", {1.0, 0.0});
  if (e.size() != 2) throw ConfigError("langevin.e needs 2 entries");
  out.langevin.e = {e[0], e[1]};

  out.multiscale.alpha = cfg.get_double("multiscale.alpha", 1.0);
  const auto x = cfg.get_double_list("multiscale.x", {-0.0057, 1.73, -1.04});
  if (x.size() != 3) throw ConfigError("multiscale.x needs 3 entries");
  out.multiscale.x_frozen = {x[0], x[1], x[2]};
  out.multiscale.nu_cube_halfwidth = cfg.get_double("multiscale.cube_halfwidth", 4.0);
  out.multiscale_quantities = cfg.get_list("multiscale.quantities", {"A0_11", "F3"});

  out.static_samples = cfg.get_uint("static.samples", 1000000);
  out.oracle_points = cfg.get_uint("oracle.points", 6);
  out.fail_on_check = cfg.get_bool("check.fail_on_violation", false);
  out.validate();
  return out;
}

double static_iid_mc(const DynamicsModel& model, const ScalarField& a, const ScalarField& b,
                     std::size_t n_samples, std::uint64_t seed) {
  constexpr std::size_t kBlock = 4096;
  const std::size_t n_blocks = (n_samples + kBlock - 1) / kBlock;
  std::vector<double> block_means(n_blocks, 0.0);
  parallel_for(n_blocks, [&](std::size_t blk) {
    Rng rng = stream_rng(seed, blk);
    std::vector<double> state(model.dim_state);
    const std::size_t count = std::min(kBlock, n_samples - blk * kBlock);
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      model.invariant_sampler(rng, state);
      acc += a(state) * b(state);
    }
    block_means[blk] = acc / static_cast<double>(count) *
                       (static_cast<double>(count) / static_cast<double>(n_samples));
  });
  return kernels::sum(block_means.data(), n_blocks) ;
}

namespace {

// ---------------------------------------------------------------------------
// shared estimator-run machinery

struct SurrogatePair {
  // scalar fields over model states; null when absent
  ScalarField psi_g;
  ScalarField psi_f;
};

Observables build_observables(const DynamicsModel& model, const ScalarField& f,
                              const ScalarField& g, const SurrogatePair& pair, EstimatorKind kind,
                              bool zero_surrogates) {
  Observables obs;
  obs.f = f;
  obs.g = g;
  const CvKind cv = estimator_cv_kind(kind);
  const bool want_fwd = cv == CvKind::Forward || cv == CvKind::Combined;
  const bool want_adj = cv == CvKind::Adjoint || cv == CvKind::Combined;
  if (want_fwd) {
    if (zero_surrogates) {
      obs.g_corr = g;  // bitwise-identical stream
    } else {
      obs.g_corr = [&model, g, psi = pair.psi_g](std::span<const double> x) {
        return g(x) + apply_generator_fd(model, psi, x);
      };
    }
  }
  if (want_adj) {
    if (zero_surrogates) {
      obs.f_corr = f;
    } else {
      obs.f_corr = [&model, f, psi = pair.psi_f](std::span<const double> x) {
        return f(x) + apply_adjoint_generator_fd(model, psi, x);
      };
    }
    obs.f_corr_at_zero_only = !estimator_kind_is_he(kind);
  }
  return obs;
}

std::size_t chunk_size(const SimConfig& cfg, int n_streams) {
  const std::size_t bytes_per_replica = (cfg.n_steps() + 1) * sizeof(double) * n_streams;
  const std::size_t budget = std::size_t(256) << 20;
  return std::max<std::size_t>(1, std::min(cfg.n_replicas, budget / std::max<std::size_t>(1, bytes_per_replica)));
}

int stream_count(const Observables& obs) {
  int n = 2;
  if (obs.g_corr) ++n;
  if (obs.f_corr && !obs.f_corr_at_zero_only) ++n;
  if (obs.psi_g) ++n;
  if (obs.psi_f) ++n;
  return n;
}

struct RunTimings {
  double simulate = 0.0;
  double estimate = 0.0;
};

// Simulates in chunks with the given seed and feeds every accumulator pass.
template <typename ProcessFn>
double chunked_simulation(const DynamicsModel& model, const Observables& obs, const SimConfig& cfg,
                          ProcessFn&& process) {
  const std::size_t chunk = chunk_size(cfg, stream_count(obs));
  std::vector<Trajectory> buffer(chunk);
  double sim_seconds = 0.0;
  for (std::size_t done = 0; done < cfg.n_replicas; done += chunk) {
    const std::size_t count = std::min(chunk, cfg.n_replicas - done);
    const double t0 = clock_seconds();
    simulate_replicas_into(model, obs, cfg, done, count, buffer);
    sim_seconds += clock_seconds() - t0;
    process(std::span<const Trajectory>(buffer.data(), count));
  }
  return sim_seconds;
}

EstimatorOutcome run_single(const DynamicsModel& model, const ScalarField& f, const ScalarField& g,
                            const SurrogatePair& pair, EstimatorKind kind, const SimConfig& cfg,
                            const WeightFunction& weight, const std::string& name,
                            double static_term, RunTimings& timings) {
  const Observables obs = build_observables(model, f, g, pair, kind, false);
  EstimatorOutcome outcome;
  outcome.name = name;
  outcome.kind = kind;
  outcome.static_term = static_term;
  double sim_seconds = 0.0;
  if (estimator_kind_is_he(kind)) {
    HeAccumulator acc(estimator_cv_kind(kind), weight);
    sim_seconds = chunked_simulation(model, obs, cfg,
                                     [&](std::span<const Trajectory> t) { acc.process(t); });
    outcome.report = acc.finalize(name);
  } else {
    GkAccumulator acc(estimator_cv_kind(kind));
    sim_seconds = chunked_simulation(model, obs, cfg,
                                     [&](std::span<const Trajectory> t) { acc.process(t); });
    outcome.report = acc.finalize(name);
  }
  timings.simulate += sim_seconds;
  timings.estimate += outcome.report.runtime_seconds;
  outcome.report.set_runtime(outcome.report.runtime_seconds + sim_seconds);
  outcome.rho_total = outcome.static_term + outcome.report.rho_hat;
  return outcome;
}

// Zero-surrogate variant reuses the corrected-stream code path with the
// identical plain streams.
EstimatorOutcome run_single_zero(const DynamicsModel& model, const ScalarField& f,
                                 const ScalarField& g, EstimatorKind kind, const SimConfig& cfg,
                                 const WeightFunction& weight, const std::string& name,
                                 RunTimings& timings) {
  const Observables obs = build_observables(model, f, g, {}, kind, true);
  EstimatorOutcome outcome;
  outcome.name = name;
  outcome.kind = kind;
  double sim_seconds = 0.0;
  if (estimator_kind_is_he(kind)) {
    HeAccumulator acc(estimator_cv_kind(kind), weight);
    sim_seconds = chunked_simulation(model, obs, cfg,
                                     [&](std::span<const Trajectory> t) { acc.process(t); });
    outcome.report = acc.finalize(name);
  } else {
    GkAccumulator acc(estimator_cv_kind(kind));
    sim_seconds = chunked_simulation(model, obs, cfg,
                                     [&](std::span<const Trajectory> t) { acc.process(t); });
    outcome.report = acc.finalize(name);
  }
  timings.simulate += sim_seconds;
  timings.estimate += outcome.report.runtime_seconds;
  outcome.report.set_runtime(outcome.report.runtime_seconds + sim_seconds);
  outcome.rho_total = outcome.report.rho_hat;
  return outcome;
}

std::vector<double> partial_means(const std::vector<std::vector<double>>& partials) {
  std::vector<double> means(partials.front().size(), 0.0);
  for (const auto& p : partials)
    for (std::size_t e = 0; e < means.size(); ++e) means[e] += p[e];
  for (auto& m : means) m /= static_cast<double>(partials.size());
  return means;
}

nlohmann::json outcome_to_json(const EstimatorOutcome& o) {
  nlohmann::json j;
  j["name"] = o.name;
  j["kind"] = estimator_kind_name(o.kind);
  j["static_term"] = o.static_term;
  j["rho_total"] = o.rho_total;
  j["report"] = nlohmann::json::parse(report_to_json(o.report));
  return j;
}

}  // namespace

std::string RunManifest::to_json() const {
  nlohmann::json j;
  j["experiment"] = experiment;
  nlohmann::json cfg = nlohmann::json::object();
  for (const auto& [k, v] : config_echo.entries()) cfg[k] = v;
  j["config"] = std::move(cfg);
  j["seeds"] = {{"sim", sim_seed}, {"train", train_seed}};
  nlohmann::json ests = nlohmann::json::array();
  for (const auto& o : outcomes) ests.push_back(outcome_to_json(o));
  j["estimators"] = std::move(ests);
  j["oracle"] = nlohmann::json::parse(oracle_json);
  j["checks"] = nlohmann::json::parse(checks_json);
  j["checks_passed"] = checks_passed;
  j["wall_clock"] = {{"train", wall_train}, {"simulate", wall_simulate}, {"estimate", wall_estimate}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// ou weight study

RunManifest run_ou_weights(const ExperimentConfig& cfg) {
  RunManifest manifest;
  manifest.experiment = experiment_name(cfg.experiment);
  manifest.sim_seed = cfg.sim.seed;

  const DynamicsModel ou = make_ou();
  const ScalarField identity = [](std::span<const double> s) { return s[0]; };
  Observables obs;
  obs.f = identity;
  obs.g = identity;

  const bool want_gk =
      std::find(cfg.estimators.begin(), cfg.estimators.end(), EstimatorKind::GkPlain) !=
      cfg.estimators.end();
  const bool want_he =
      std::find(cfg.estimators.begin(), cfg.estimators.end(), EstimatorKind::HePlain) !=
      cfg.estimators.end();

  GkAccumulator gk(CvKind::Plain);
  std::vector<HeAccumulator> hes;
  if (want_he)
    for (const std::string& w : cfg.weights) hes.emplace_back(CvKind::Plain, *find_weight(w));

  const double sim_seconds =
      chunked_simulation(ou, obs, cfg.sim, [&](std::span<const Trajectory> chunk) {
        if (want_gk) gk.process(chunk);
        for (auto& acc : hes) acc.process(chunk);
      });
  manifest.wall_simulate = sim_seconds;

  nlohmann::json oracle_blob;
  oracle_blob["rho_exact"] = 1.0;
  nlohmann::json checks = nlohmann::json::object();

  auto emit_curve_csv = [&](const std::string& fname, const std::vector<std::size_t>& idx,
                            double dt, const std::vector<double>& means,
                            const EstimatorReport& report) {
    std::ostringstream os;
    os << "t,mean,bias,variance\n";
    for (std::size_t e = 0; e < idx.size(); ++e) {
      const double t = static_cast<double>(idx[e]) * dt;
      const double var = report.variance_vs_time[e].second;
      os << fmt(t) << ',' << fmt(means[e]) << ',' << fmt(means[e] - 1.0) << ',';
      if (std::isfinite(var))
        os << fmt(var);
      else
        os << "undefined (K=1)";
      os << '\n';
    }
    manifest.extra_csv.emplace_back(fname, os.str());
  };

  if (want_gk) {
    EstimatorOutcome outcome;
    outcome.name = "gk_plain";
    outcome.kind = EstimatorKind::GkPlain;
    outcome.report = gk.finalize("gk_plain");
    manifest.wall_estimate += outcome.report.runtime_seconds;
    outcome.report.set_runtime(outcome.report.runtime_seconds + sim_seconds);
    outcome.rho_total = outcome.report.rho_hat;
    emit_curve_csv("ou_gk.csv", gk.eval_indices(), gk.dt(), partial_means(gk.partials()),
                   outcome.report);

    // analytic reference curve on the same grid
    std::ostringstream os;
    os << "t,bias,variance\n";
    for (std::size_t m : gk.eval_indices()) {
      const double t = static_cast<double>(m) * gk.dt();
      os << fmt(t) << ',' << fmt(oracle::ou_gk_bias(t)) << ',' << fmt(oracle::ou_gk_variance(t))
         << '\n';
    }
    manifest.extra_csv.emplace_back("oracle_gk.csv", os.str());

    if (cfg.sim.n_replicas > 1) {
      const double expected = oracle::ou_gk_variance(cfg.sim.horizon);
      const double rel = std::abs(outcome.report.final_variance() - expected) / expected;
      checks["gk_variance_rel_error"] = rel;
      if (rel > 0.1) manifest.checks_passed = false;
    }
    manifest.outcomes.push_back(std::move(outcome));
  }

  for (std::size_t wi = 0; wi < hes.size(); ++wi) {
    auto& acc = hes[wi];
    const std::string wname = cfg.weights[wi];
    const std::string name = "he_" + wname + "_plain";
    EstimatorOutcome outcome;
    outcome.name = name;
    outcome.kind = EstimatorKind::HePlain;
    outcome.report = acc.finalize(name);
    manifest.wall_estimate += outcome.report.runtime_seconds;
    outcome.report.set_runtime(outcome.report.runtime_seconds + sim_seconds);
    outcome.rho_total = outcome.report.rho_hat;
    emit_curve_csv("ou_he_" + wname + ".csv", acc.eval_indices(), acc.dt(),
                   partial_means(acc.partials()), outcome.report);

    // quadrature oracle at a coarse horizon grid (T,value series)
    const WeightFunction& w = *find_weight(wname);
    std::ostringstream os;
    os << "t,bias,variance\n";
    nlohmann::json curve = nlohmann::json::array();
    for (std::size_t i = 1; i <= cfg.oracle_points; ++i) {
      const double t = cfg.sim.horizon * static_cast<double>(i) /
                       static_cast<double>(cfg.oracle_points);
      const double bias = oracle::ou_he_bias(t, w);
      const double var = oracle::ou_he_variance(t, w);
      os << fmt(t) << ',' << fmt(bias) << ',' << fmt(var) << '\n';
      curve.push_back({t, bias, var});
    }
    manifest.extra_csv.emplace_back("oracle_he_" + wname + ".csv", os.str());
    oracle_blob["he_" + wname] = std::move(curve);

    if (cfg.sim.n_replicas > 1) {
      const double expected = oracle::ou_he_variance(cfg.sim.horizon, w);
      const double rel = std::abs(outcome.report.final_variance() - expected) / expected;
      checks["he_" + wname + "_variance_rel_error"] = rel;
      if (rel > 0.1) manifest.checks_passed = false;
    }
    manifest.outcomes.push_back(std::move(outcome));
  }

  manifest.oracle_json = oracle_blob.dump();
  manifest.checks_json = checks.dump();
  return manifest;
}

// ---------------------------------------------------------------------------
// langevin mobility

namespace {

struct TrainedPair {
  Surrogate psi_g;
  Surrogate psi_f;
  double wall_train = 0.0;
  LossHistory history_g, history_f;
};

TrainedPair obtain_langevin_surrogates(const ExperimentConfig& cfg, const DynamicsModel& model,
                                       const ScalarField& f_e) {
  TrainedPair out;
  if (!cfg.train_load_dir.empty()) {
    out.psi_g = load_surrogate(cfg.train_load_dir + "/psi_g.gkcvnet");
    out.psi_f = load_surrogate(cfg.train_load_dir + "/psi_f.gkcvnet");
    return out;
  }
  if (!cfg.train) throw ConfigError("langevin control variates need train settings");
  const double t0 = clock_seconds();
  TrainConfig tg = *cfg.train;
  out.psi_g = make_langevin_net(tg.seed);
  const PinnProblem forward_problem = poisson_problem(model, f_e, false);
  out.history_g = adam_train(out.psi_g, forward_problem, tg);

  TrainConfig tf = *cfg.train;
  tf.seed = tg.seed + 1;
  out.psi_f = make_langevin_net(tf.seed);
  const PinnProblem adjoint_problem = poisson_problem(model, f_e, true);
  out.history_f = adam_train(out.psi_f, adjoint_problem, tf);
  out.wall_train = clock_seconds() - t0;
  return out;
}

}  // namespace

RunManifest run_langevin_mobility(const ExperimentConfig& cfg) {
  RunManifest manifest;
  manifest.experiment = experiment_name(cfg.experiment);
  manifest.sim_seed = cfg.sim.seed;
  manifest.train_seed = cfg.train ? cfg.train->seed : 0;

  const DynamicsModel model = make_langevin(cfg.langevin);
  const LangevinParams& p = cfg.langevin;
  const double det = p.mass[0] * p.mass[3] - p.mass[1] * p.mass[2];
  const double minv[4] = {p.mass[3] / det, -p.mass[1] / det, -p.mass[2] / det, p.mass[0] / det};
  const std::array<double, 2> e = p.e;
  const ScalarField f_e = [minv0 = minv[0], minv1 = minv[1], minv2 = minv[2], minv3 = minv[3],
                           e](std::span<const double> s) {
    return e[0] * (minv0 * s[2] + minv1 * s[3]) + e[1] * (minv2 * s[2] + minv3 * s[3]);
  };

  bool any_cv = false;
  for (EstimatorKind kind : cfg.estimators)
    if (estimator_cv_kind(kind) != CvKind::Plain) any_cv = true;

  SurrogatePair pair;
  TrainedPair trained;
  if (any_cv && !cfg.zero_surrogates) {
    trained = obtain_langevin_surrogates(cfg, model, f_e);
    manifest.wall_train = trained.wall_train;
    pair.psi_g = surrogate_field(trained.psi_g);
    pair.psi_f = surrogate_field(trained.psi_f);
  }

  RunTimings timings;
  nlohmann::json oracle_blob;
  // sanity moment: E_mu[f_e^2] = beta^{-1} e^T M^{-1} e
  const double fe2 = static_iid_mc(model, f_e, f_e, cfg.static_samples, cfg.sim.seed ^ 0xfe2);
  const double fe2_expected =
      (e[0] * (minv[0] * e[0] + minv[1] * e[1]) + e[1] * (minv[2] * e[0] + minv[3] * e[1])) /
      p.beta;
  oracle_blob["fe_second_moment"] = {{"estimate", fe2}, {"expected", fe2_expected}};

  auto static_for = [&](EstimatorKind kind) -> double {
    if (cfg.zero_surrogates) return 0.0;
    switch (estimator_cv_kind(kind)) {
      case CvKind::Plain:
        return 0.0;
      case CvKind::Forward:
        return static_iid_mc(model, f_e, pair.psi_g, cfg.static_samples, cfg.sim.seed ^ 0x51);
      case CvKind::Adjoint:
        return static_iid_mc(model, pair.psi_f, f_e, cfg.static_samples, cfg.sim.seed ^ 0x52);
      case CvKind::Combined: {
        const ScalarField lpsi_g = [&model, psi = pair.psi_g](std::span<const double> x) {
          return apply_generator_fd(model, psi, x);
        };
        return static_iid_mc(model, pair.psi_f, f_e, cfg.static_samples, cfg.sim.seed ^ 0x52) +
               static_iid_mc(model, f_e, pair.psi_g, cfg.static_samples, cfg.sim.seed ^ 0x51) +
               static_iid_mc(model, pair.psi_f, lpsi_g, cfg.static_samples, cfg.sim.seed ^ 0x53);
      }
    }
    return 0.0;
  };

  const WeightFunction& weight = *find_weight(cfg.he_weight);
  for (EstimatorKind kind : cfg.estimators) {
    SimConfig sim = cfg.sim;
    if (estimator_kind_is_he(kind)) sim.horizon = cfg.he_horizon();
    const std::string name = estimator_kind_name(kind);
    EstimatorOutcome outcome =
        cfg.zero_surrogates && estimator_cv_kind(kind) != CvKind::Plain
            ? run_single_zero(model, f_e, f_e, kind, sim, weight, name, timings)
            : run_single(model, f_e, f_e, pair, kind, sim, weight, name, static_for(kind),
                         timings);
    manifest.outcomes.push_back(std::move(outcome));
  }
  manifest.wall_simulate = timings.simulate;
  manifest.wall_estimate = timings.estimate;

  // mobility = beta <f_e, -L^{-1} f_e>
  nlohmann::json mobility = nlohmann::json::object();
  for (const auto& o : manifest.outcomes) mobility[o.name] = p.beta * o.rho_total;
  oracle_blob["mobility"] = std::move(mobility);

  // variance-ratio checks against the plain rows
  nlohmann::json checks = nlohmann::json::object();
  auto find_outcome = [&](const std::string& name) -> const EstimatorOutcome* {
    for (const auto& o : manifest.outcomes)
      if (o.name == name) return &o;
    return nullptr;
  };
  if (!cfg.zero_surrogates) {
    for (const char* family : {"gk", "he"}) {
      const EstimatorOutcome* plain = find_outcome(std::string(family) + "_plain");
      if (!plain || !std::isfinite(plain->report.final_variance())) continue;
      const double base = plain->report.final_variance();
      double fwd = -1.0, adj = -1.0, comb = -1.0;
      if (const auto* o = find_outcome(std::string(family) + "_forward"))
        fwd = o->report.final_variance() / base;
      if (const auto* o = find_outcome(std::string(family) + "_adjoint"))
        adj = o->report.final_variance() / base;
      if (const auto* o = find_outcome(std::string(family) + "_combined"))
        comb = o->report.final_variance() / base;
      nlohmann::json fam;
      if (fwd >= 0.0) fam["forward_ratio"] = fwd;
      if (adj >= 0.0) fam["adjoint_ratio"] = adj;
      if (comb >= 0.0) fam["combined_ratio"] = comb;
      bool ok = true;
      if (fwd >= 0.0 && fwd > 0.2) ok = false;
      if (adj >= 0.0 && adj > 0.2) ok = false;
      if (comb >= 0.0 && comb > 0.05) ok = false;
      if (comb >= 0.0 && fwd >= 0.0 && adj >= 0.0 && !(comb < std::min(fwd, adj))) ok = false;
      fam["passed"] = ok;
      if (!ok) manifest.checks_passed = false;
      checks[family] = std::move(fam);
    }
  }
  manifest.oracle_json = oracle_blob.dump();
  manifest.checks_json = checks.dump();
  return manifest;
}

// ---------------------------------------------------------------------------
// multiscale homogenized coefficients

namespace {

// fields over the fast state y with the slow variables frozen
ScalarField net_component_field(const Surrogate& net, const std::array<double, 3>& x, int comp) {
  return [net, x, comp](std::span<const double> y) {
    thread_local NetWorkspace ws;
    const double in[5] = {x[0], x[1], x[2], y[0], y[1]};
    double out[3];
    forward(net, {in, 5}, out, ws);
    return out[comp];
  };
}

ScalarField x_gradient_field(const Surrogate& net, const std::array<double, 3>& x, int comp,
                             int xj) {
  return [net, x, comp, xj](std::span<const double> y) {
    double grad[9];
    x_gradient(net, x, y, grad);
    return grad[comp * 3 + xj];
  };
}

struct PairedRun {
  std::vector<std::vector<double>> partials;
  std::vector<std::size_t> eval_idx;
  double dt = 0.0;
  double sim_seconds = 0.0;
  double accum_seconds = 0.0;
};

}  // namespace

RunManifest run_multiscale_coeffs(const ExperimentConfig& cfg) {
  RunManifest manifest;
  manifest.experiment = experiment_name(cfg.experiment);
  manifest.sim_seed = cfg.sim.seed;
  manifest.train_seed = cfg.train ? cfg.train->seed : 0;

  const MultiscaleParams& params = cfg.multiscale;
  const DynamicsModel fast = make_multiscale_fast(params);
  const std::array<double, 3>& x0 = params.x_frozen;

  bool any_cv = false;
  for (EstimatorKind kind : cfg.estimators)
    if (estimator_cv_kind(kind) != CvKind::Plain) any_cv = true;

  Surrogate net_fwd, net_adj;
  bool have_nets = false;
  if (any_cv && !cfg.zero_surrogates) {
    if (!cfg.train_load_dir.empty()) {
      net_fwd = load_surrogate(cfg.train_load_dir + "/multiscale_fwd.gkcvnet");
      net_adj = load_surrogate(cfg.train_load_dir + "/multiscale_adj.gkcvnet");
    } else {
      if (!cfg.train) throw ConfigError("multiscale control variates need train settings");
      const double t0 = clock_seconds();
      TrainConfig tf = *cfg.train;
      auto fwd = multiscale_train(params, tf, false);
      TrainConfig ta = *cfg.train;
      ta.seed = tf.seed + 1;
      auto adj = multiscale_train(params, ta, true);
      net_fwd = std::move(fwd.first);
      net_adj = std::move(adj.first);
      manifest.wall_train = clock_seconds() - t0;
    }
    have_nets = true;
  }

  const auto homog = oracle::homogenized_oracle(params.alpha, x0);
  nlohmann::json oracle_blob;
  oracle_blob["F"] = homog.F;
  oracle_blob["A0"] = homog.A0;
  oracle_blob["AAt"] = homog.AAt;

  const WeightFunction& weight = *find_weight(cfg.he_weight);
  RunTimings timings;
  nlohmann::json checks = nlohmann::json::object();

  // one inner-product term <f_a, -L^{-1} g_b>: the estimator streams plus the
  // surrogate fields serving its control variates
  struct Term {
    ScalarField f, g;
    ScalarField psi_g, psi_f;  // forward / adjoint surrogate fields
  };

  auto run_terms = [&](const std::string& name, EstimatorKind kind,
                       const std::vector<Term>& terms, double static_term) {
    SimConfig sim = cfg.sim;
    if (estimator_kind_is_he(kind)) sim.horizon = cfg.he_horizon();
    std::vector<std::vector<double>> combined;
    std::vector<std::size_t> eval_idx;
    double dt = 0.0;
    double accum_total = 0.0;
    double sim_total = 0.0;
    auto merge = [&combined](const std::vector<std::vector<double>>& partials) {
      if (combined.empty()) {
        combined = partials;
        return;
      }
      for (std::size_t k = 0; k < combined.size(); ++k)
        for (std::size_t e = 0; e < combined[k].size(); ++e) combined[k][e] += partials[k][e];
    };
    for (const Term& term : terms) {
      SurrogatePair pair{term.psi_g, term.psi_f};
      const Observables obs =
          cfg.zero_surrogates && estimator_cv_kind(kind) != CvKind::Plain
              ? build_observables(fast, term.f, term.g, {}, kind, true)
              : build_observables(fast, term.f, term.g, pair, kind, false);
      if (estimator_kind_is_he(kind)) {
        HeAccumulator acc(estimator_cv_kind(kind), weight);
        sim_total += chunked_simulation(fast, obs, sim,
                                        [&](std::span<const Trajectory> t) { acc.process(t); });
        accum_total += acc.accum_seconds();
        eval_idx = acc.eval_indices();
        dt = acc.dt();
        merge(acc.partials());
      } else {
        GkAccumulator acc(estimator_cv_kind(kind));
        sim_total += chunked_simulation(fast, obs, sim,
                                        [&](std::span<const Trajectory> t) { acc.process(t); });
        accum_total += acc.accum_seconds();
        eval_idx = acc.eval_indices();
        dt = acc.dt();
        merge(acc.partials());
      }
    }
    timings.simulate += sim_total;
    timings.estimate += accum_total;
    EstimatorOutcome outcome;
    outcome.name = name;
    outcome.kind = kind;
    outcome.static_term = cfg.zero_surrogates ? 0.0 : static_term;
    outcome.report = report_from_partials(name, dt, eval_idx, combined, accum_total + sim_total);
    outcome.rho_total = outcome.static_term + outcome.report.rho_hat;
    return outcome;
  };

  const ScalarField zero_field = [](std::span<const double>) { return 0.0; };

  auto quantity_terms = [&](const std::string& quantity, EstimatorKind kind,
                            double& static_term) -> std::vector<Term> {
    const CvKind cv = estimator_cv_kind(kind);
    const bool want_fwd = cv == CvKind::Forward || cv == CvKind::Combined;
    const bool want_adj = cv == CvKind::Adjoint || cv == CvKind::Combined;
    static_term = 0.0;
    auto static_parts = [&](const Term& term) {
      if (cfg.zero_surrogates || cv == CvKind::Plain) return 0.0;
      double s = 0.0;
      if (cv == CvKind::Forward) s = static_term_quadrature(fast, term.f, term.psi_g);
      if (cv == CvKind::Adjoint) s = static_term_quadrature(fast, term.psi_f, term.g);
      if (cv == CvKind::Combined) {
        const ScalarField lpsi = [&fast, psi = term.psi_g](std::span<const double> y) {
          return apply_generator_fd(fast, psi, y);
        };
        s = static_term_quadrature(fast, term.psi_f, term.g) +
            static_term_quadrature(fast, term.f, term.psi_g) +
            static_term_quadrature(fast, term.psi_f, lpsi);
      }
      return s;
    };

    std::vector<Term> terms;
    if (quantity == "F3") {
      // F3 = <f1, -L^{-1} d_x1 f3> + <f2, -L^{-1} d_x2 f3>
      for (int j = 0; j < 2; ++j) {
        Term t;
        t.f = multiscale_slow_observable(j + 1, params);
        const double sign = (j == 0) ? 1.0 : -1.0;
        const ScalarField other = multiscale_slow_observable(j == 0 ? 2 : 1, params);
        t.g = [other, sign](std::span<const double> y) { return sign * other(y); };
        t.psi_g = have_nets && want_fwd ? x_gradient_field(net_fwd, x0, 2, j) : zero_field;
        t.psi_f = have_nets && want_adj ? net_component_field(net_adj, x0, j) : zero_field;
        static_term += static_parts(t);
        terms.push_back(std::move(t));
      }
    } else if (quantity.rfind("A0_", 0) == 0 && quantity.size() == 5) {
      const int i = quantity[3] - '1';
      const int j = quantity[4] - '1';
      if (i < 0 || i > 2 || j < 0 || j > 2)
        throw ConfigError("multiscale quantity '" + quantity + "' out of range");
      if (i == 2 || j == 2)
        throw ConfigError("multiscale quantity '" + quantity +
                          "': f3 depends on the frozen x and is supported for F3 only");
      Term t;
      t.f = multiscale_slow_observable(i + 1, params);
      t.g = multiscale_slow_observable(j + 1, params);
      t.psi_g = have_nets && want_fwd ? net_component_field(net_fwd, x0, j) : zero_field;
      t.psi_f = have_nets && want_adj ? net_component_field(net_adj, x0, i) : zero_field;
      static_term += static_parts(t);
      terms.push_back(std::move(t));
    } else {
      throw ConfigError("unknown multiscale quantity '" + quantity + "'");
    }
    return terms;
  };

  for (const std::string& quantity : cfg.multiscale_quantities) {
    double oracle_value = 0.0;
    if (quantity == "F3") {
      oracle_value = homog.F[2];
    } else if (quantity.size() == 5) {
      const int i = quantity[3] - '1', j = quantity[4] - '1';
      oracle_value = homog.A0[i * 3 + j];
    }
    std::vector<const EstimatorOutcome*> quantity_outcomes;
    for (EstimatorKind kind : cfg.estimators) {
      double static_term = 0.0;
      const std::vector<Term> terms = quantity_terms(quantity, kind, static_term);
      const std::string name = quantity + "_" + estimator_kind_name(kind);
      manifest.outcomes.push_back(run_terms(name, kind, terms, static_term));
    }
    for (const auto& o : manifest.outcomes)
      if (o.name.rfind(quantity + "_", 0) == 0) quantity_outcomes.push_back(&o);

    nlohmann::json qchecks = nlohmann::json::object();
    auto by_kind = [&](EstimatorKind kind) -> const EstimatorOutcome* {
      for (const auto* o : quantity_outcomes)
        if (o->kind == kind) return o;
      return nullptr;
    };
    if (const auto* plain = by_kind(EstimatorKind::GkPlain)) {
      const double variance = plain->report.final_variance();
      if (std::isfinite(variance)) {
        // oracle agreement within 3 standard errors
        const double se = std::sqrt(variance / static_cast<double>(cfg.sim.n_replicas));
        const double err = std::abs(plain->rho_total - oracle_value);
        qchecks["gk_plain_abs_error"] = err;
        qchecks["gk_plain_3se"] = 3.0 * se;
        if (err > 3.0 * se) manifest.checks_passed = false;
      }
      if (const auto* comb = by_kind(EstimatorKind::GkCombined);
          comb && !cfg.zero_surrogates && std::isfinite(variance) && variance > 0.0) {
        const double ratio = comb->report.final_variance() / variance;
        qchecks["gk_combined_variance_ratio"] = ratio;
        if (ratio > 0.05) manifest.checks_passed = false;
      }
    }
    checks[quantity] = std::move(qchecks);
    oracle_blob["exact_" + quantity] = oracle_value;
  }

  manifest.wall_simulate = timings.simulate;
  manifest.wall_estimate = timings.estimate;
  manifest.oracle_json = oracle_blob.dump();
  manifest.checks_json = checks.dump();
  return manifest;
}

RunManifest run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  switch (cfg.experiment) {
    case Experiment::OuWeights:
      return run_ou_weights(cfg);
    case Experiment::LangevinMobility:
      return run_langevin_mobility(cfg);
    case Experiment::MultiscaleCoeffs:
      return run_multiscale_coeffs(cfg);
  }
  throw std::invalid_argument("unknown experiment");
}

// ---------------------------------------------------------------------------
// report emission

void emit_reports(const RunManifest& manifest, const std::string& output_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(output_dir, ec);
  if (ec) throw NumericError("cannot create output directory '" + output_dir + "'");

  auto write_file = [&](const std::string& name, const std::string& contents) {
    const std::string path = output_dir + "/" + name;
    std::ofstream os(path, std::ios::trunc | std::ios::binary);
    if (!os) throw NumericError("cannot write '" + path + "'");
    os << contents;
  };

  write_file("manifest.json", manifest.to_json() + "\n");

  for (const auto& outcome : manifest.outcomes) {
    std::ostringstream csv;
    report_variance_csv(outcome.report, csv);
    write_file("variance_" + outcome.name + ".csv", csv.str());
  }
  for (const auto& [name, contents] : manifest.extra_csv) write_file(name, contents);

  if (manifest.outcomes.empty()) return;

  // ratios normalized by the matching plain row (same name with the final
  // cv segment replaced by "plain")
  auto plain_name = [](const std::string& name) {
    const auto pos = name.find_last_of('_');
    return name.substr(0, pos == std::string::npos ? 0 : pos) + "_plain";
  };
  std::ostringstream os;
  os << "estimator,runtime_ratio,variance_ratio,cost_ratio\n";
  for (const auto& outcome : manifest.outcomes) {
    const EstimatorOutcome* base = &outcome;
    const std::string norm = plain_name(outcome.name);
    for (const auto& candidate : manifest.outcomes)
      if (candidate.name == norm) base = &candidate;
    const double runtime_ratio = outcome.report.runtime_seconds / base->report.runtime_seconds;
    os << outcome.name << ',' << fmt(runtime_ratio) << ',';
    const double var = outcome.report.final_variance();
    const double var_base = base->report.final_variance();
    if (std::isfinite(var) && std::isfinite(var_base)) {
      const double variance_ratio = var / var_base;
      os << fmt(variance_ratio) << ',' << fmt(runtime_ratio * variance_ratio);
    } else {
      os << "undefined (K=1),undefined (K=1)";
    }
    os << '\n';
  }
  write_file("summary.csv", os.str());
}

}  // namespace gkcv
