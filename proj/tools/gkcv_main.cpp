// gkcv: transport-coefficient estimation benchmarks with neural-network
// control variates. Subcommands: run (config-driven experiment), oracle
// (closed-form reference curves), train (fit and save surrogates).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gkcv/bench.hpp"
#include "gkcv/oracle.hpp"

namespace {

constexpr int kExitConfigError = 2;
constexpr int kExitNumericError = 3;

using namespace gkcv;

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides,
            bool zero_surrogates, const std::string& out_dir, long long seed,
            const std::string& estimators) {
  Config raw = Config::parse_file(config_path);
  if (seed >= 0) raw.set("sim.seed", std::to_string(seed));
  if (!out_dir.empty()) raw.set("output_dir", out_dir);
  if (!estimators.empty()) raw.set("estimators", estimators);
  if (zero_surrogates) raw.set("zero_surrogates", "true");
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    raw.set(kv.substr(0, eq), kv.substr(eq + 1));
  }

  ExperimentConfig cfg = ExperimentConfig::from_config(raw);
  RunManifest manifest = run_experiment(cfg);
  manifest.config_echo = raw;
  emit_reports(manifest, cfg.output_dir);
  std::printf("experiment %s: %zu estimator(s), reports in %s\n", manifest.experiment.c_str(),
              manifest.outcomes.size(), cfg.output_dir.c_str());
  for (const auto& o : manifest.outcomes) {
    const double var = o.report.final_variance();
    std::printf("  %-28s rho=% .6g  static=% .6g  var=%s  runtime=%.3gs\n", o.name.c_str(),
                o.rho_total, o.static_term,
                std::isfinite(var) ? std::to_string(var).c_str() : "undefined (K=1)",
                o.report.runtime_seconds);
  }
  if (!manifest.checks_passed) {
    std::fprintf(stderr, "warning: one or more oracle/ratio checks failed (see manifest)\n");
    if (cfg.fail_on_check) return kExitNumericError;
  }
  return 0;
}

int cmd_oracle_ou(const std::string& weight_name, double tmax, int points,
                  const std::string& quantity, const std::string& out_path) {
  const WeightFunction* w = find_weight(weight_name);
  if (!w) throw ConfigError("unknown weight '" + weight_name + "'");
  if (!(tmax > 0.0)) throw ConfigError("--tmax must be > 0");
  if (points < 1) throw ConfigError("--points must be >= 1");

  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path, std::ios::trunc);
    if (!file) throw NumericError("cannot write '" + out_path + "'");
    os = &file;
  }

  auto value_at = [&](double t) -> double {
    if (quantity == "gk_bias") return oracle::ou_gk_bias(t);
    if (quantity == "gk_variance") return oracle::ou_gk_variance(t);
    if (quantity == "he_bias") return oracle::ou_he_bias(t, *w);
    if (quantity == "he_variance") return oracle::ou_he_variance(t, *w);
    throw ConfigError("unknown quantity '" + quantity +
                      "' (gk_bias, gk_variance, he_bias, he_variance)");
  };
  (*os) << "T,value\n";
  char buf[64];
  for (int i = 1; i <= points; ++i) {
    const double t = tmax * static_cast<double>(i) / static_cast<double>(points);
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", t, value_at(t));
    (*os) << buf;
  }
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  const Config raw = Config::parse_file(config_path);
  ExperimentConfig cfg = ExperimentConfig::from_config(raw);
  if (!cfg.train) throw ConfigError("train subcommand needs train.* settings in the config");
  const std::string dir = out_dir.empty() ? cfg.output_dir : out_dir;
  std::filesystem::create_directories(dir);

  if (cfg.experiment == Experiment::LangevinMobility) {
    const DynamicsModel model = make_langevin(cfg.langevin);
    const LangevinParams& p = cfg.langevin;
    const double det = p.mass[0] * p.mass[3] - p.mass[1] * p.mass[2];
    const double minv[4] = {p.mass[3] / det, -p.mass[1] / det, -p.mass[2] / det, p.mass[0] / det};
    const ScalarField f_e = [minv0 = minv[0], minv1 = minv[1], minv2 = minv[2], minv3 = minv[3],
                             e = p.e](std::span<const double> s) {
      return e[0] * (minv0 * s[2] + minv1 * s[3]) + e[1] * (minv2 * s[2] + minv3 * s[3]);
    };
    TrainConfig tg = *cfg.train;
    tg.checkpoint_path = dir + "/psi_g_ckpt.gkcvnet";
    Surrogate psi_g = make_langevin_net(tg.seed);
    const LossHistory hg = adam_train(psi_g, poisson_problem(model, f_e, false), tg);
    save_surrogate(psi_g, dir + "/psi_g.gkcvnet", "forward poisson surrogate");

    TrainConfig tf = *cfg.train;
    tf.seed = tg.seed + 1;
    tf.checkpoint_path = dir + "/psi_f_ckpt.gkcvnet";
    Surrogate psi_f = make_langevin_net(tf.seed);
    const LossHistory hf = adam_train(psi_f, poisson_problem(model, f_e, true), tf);
    save_surrogate(psi_f, dir + "/psi_f.gkcvnet", "adjoint poisson surrogate");
    std::printf("trained psi_g (final loss %.4g) and psi_f (final loss %.4g) into %s\n",
                hg.entries.back().second, hf.entries.back().second, dir.c_str());
    return 0;
  }
  if (cfg.experiment == Experiment::MultiscaleCoeffs) {
    TrainConfig tf = *cfg.train;
    tf.checkpoint_path = dir + "/multiscale_fwd_ckpt.gkcvnet";
    auto fwd = multiscale_train(cfg.multiscale, tf, false);
    save_surrogate(fwd.first, dir + "/multiscale_fwd.gkcvnet", "forward slow-drift surrogate");
    TrainConfig ta = *cfg.train;
    ta.seed = tf.seed + 1;
    ta.checkpoint_path = dir + "/multiscale_adj_ckpt.gkcvnet";
    auto adj = multiscale_train(cfg.multiscale, ta, true);
    save_surrogate(adj.first, dir + "/multiscale_adj.gkcvnet", "adjoint slow-drift surrogate");
    std::printf("trained multiscale surrogates (final losses %.4g / %.4g) into %s\n",
                fwd.second.entries.back().second, adj.second.entries.back().second, dir.c_str());
    return 0;
  }
  throw ConfigError("train subcommand supports langevin_mobility and multiscale_coeffs");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transport-coefficient estimators with neural-network control variates"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "run a config-driven experiment");
  std::string run_config;
  std::string run_out;
  std::string run_estimators;
  long long run_seed = -1;
  bool run_zero = false;
  std::vector<std::string> run_sets;
  run->add_option("config", run_config, "config file")->required();
  run->add_option("--seed", run_seed, "override sim.seed");
  run->add_option("--out", run_out, "override output_dir");
  run->add_option("--estimators", run_estimators, "override estimator list (comma separated)");
  run->add_flag("--zero-surrogates", run_zero, "replace every surrogate by zero");
  run->add_option("--set", run_sets, "extra key=value overrides")->take_all();

  // oracle ou
  auto* orc = app.add_subcommand("oracle", "dump closed-form reference curves");
  auto* orc_ou = orc->add_subcommand("ou", "curves for the unit OU benchmark");
  std::string orc_weight = "constant";
  std::string orc_quantity = "he_variance";
  std::string orc_out;
  double orc_tmax = 10.0;
  int orc_points = 20;
  orc_ou->add_option("--weight", orc_weight, "weight function name")->required();
  orc_ou->add_option("--tmax", orc_tmax, "largest horizon")->required();
  orc_ou->add_option("--points", orc_points, "number of grid points");
  orc_ou->add_option("--quantity", orc_quantity, "gk_bias|gk_variance|he_bias|he_variance");
  orc_ou->add_option("--out", orc_out, "write csv here instead of stdout");

  // train
  auto* train = app.add_subcommand("train", "train and save surrogates");
  std::string train_config;
  std::string train_out;
  train->add_option("config", train_config, "config file")->required();
  train->add_option("--out", train_out, "surrogate output directory (default: output_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : kExitConfigError;
  }

  try {
    if (run->parsed())
      return cmd_run(run_config, run_sets, run_zero, run_out, run_seed, run_estimators);
    if (orc->parsed()) {
      if (!orc_ou->parsed()) throw ConfigError("oracle: expected the 'ou' subcommand");
      return cmd_oracle_ou(orc_weight, orc_tmax, orc_points, orc_quantity, orc_out);
    }
    if (train->parsed()) return cmd_train(train_config, train_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfigError;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumericError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumericError;
  }
  return 0;
}
