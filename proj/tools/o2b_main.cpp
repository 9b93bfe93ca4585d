#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <thread>

#include "o2b/acceptance.hpp"
#include "o2b/analysis.hpp"
#include "o2b/errors.hpp"
#include "o2b/losses.hpp"
#include "o2b/harness.hpp"

using namespace o2b;
using nlohmann::json;

namespace {

int default_workers() {
  const unsigned hc = std::thread::hardware_concurrency();
  return static_cast<int>(std::min(hc == 0 ? 1u : hc, 8u));
}

void print_summary(const ExperimentOutput& out) {
  std::cout << "wrote " << out.csv_path << " and " << out.json_path << "\n";
  if (std::isfinite(out.report.bound)) {
    std::cout << "bound (" << out.bound_name << ") = " << fmt17(out.report.bound)
              << ", violation rate = " << fmt17(out.report.violation_rate) << ", quantile("
              << fmt17(out.quantile_level) << ") = " << fmt17(out.report.quantile) << "\n";
  }
}

int emit_bounds(const std::string& path) {
  const ExperimentConfig cfg = parse_config_file(path);
  json j;
  j["params"] = {{"d", cfg.d},         {"T", cfg.T}, {"delta", cfg.delta}, {"r", cfg.r},
                 {"b", cfg.b},         {"l", cfg.l}, {"K", cfg.K}};
  bool flagged = false;
  j["discrete_kl"] = bound_discrete(cfg.d, cfg.T, cfg.delta, &flagged);
  j["discrete_hypothesis_ok"] = !flagged;
  BoundParams bp;
  bp.d = cfg.d;
  bp.T = cfg.T;
  bp.delta = cfg.delta;
  bp.r = cfg.r;
  bp.b = cfg.b;
  bp.l = cfg.l;
  bp.kappa = 0.25;
  bp.mu = static_cast<double>(cfg.d) / cfg.T;
  bp.m = std::log(2.0 / bp.mu);
  j["glm_logistic"] = bound_glm(bp, &flagged);
  j["glm_hypothesis_ok"] = !flagged;
  j["linreg_ewa"] = bound_linreg(bp, LinRegBound::EwaClipped);
  j["linreg_vaw"] = bound_linreg(bp, LinRegBound::VawClipped);
  j["vaw_regret"] = vaw_regret_bound(cfg.d, cfg.T, cfg.r, cfg.l, cfg.b);
  const double alpha = 1.0 / (8.0 * cfg.l * cfg.l);
  j["aggregation"] = bound_theorem1(std::log(static_cast<double>(cfg.K)) / alpha,
                                    gamma_coef(alpha, 4.0 * cfg.l * cfg.l), cfg.delta, cfg.T);
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"online-to-batch conversion experiments for exp-concave losses"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;
  std::uint64_t seed_override = 0;
  bool seed_set = false;
  int reps_override = 0;
  int workers_override = 0;

  CLI::App* cmd_run = app.add_subcommand("run", "run an experiment from a config file");
  cmd_run->add_option("config", config_path, "config file")->required();
  cmd_run->add_option("--seed", seed_override, "override [run] seed")->each([&](const std::string&) {
    seed_set = true;
  });
  cmd_run->add_option("--reps", reps_override, "override [run] replications");
  cmd_run->add_option("--out", out_override, "override [output] path");
  cmd_run->add_option("--workers", workers_override, "override [run] workers");

  CLI::App* cmd_suite = app.add_subcommand("suite", "built-in suites");
  std::string suite_name;
  cmd_suite->add_option("name", suite_name, "lemmas | acceptance")->required();
  std::string suite_out = "out";
  int suite_workers = default_workers();
  cmd_suite->add_option("--out", suite_out, "output directory");
  cmd_suite->add_option("--workers", suite_workers, "worker count");
  std::uint64_t suite_seed = 1;
  cmd_suite->add_option("--seed", suite_seed, "seed (lemmas suite)");

  CLI::App* cmd_bounds = app.add_subcommand("emit-bounds", "print bound values for parameters");
  std::string bounds_path;
  cmd_bounds->add_option("params", bounds_path, "config file with the parameters")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cmd_run->parsed()) {
      ExperimentConfig cfg = parse_config_file(config_path);
      if (seed_set) cfg.seed = seed_override;
      if (reps_override > 0) cfg.replications = reps_override;
      if (workers_override > 0) cfg.workers = workers_override;
      if (!out_override.empty()) cfg.out_path = out_override;
      const ExperimentOutput out = run_experiment(cfg);
      print_summary(out);
      return 0;
    }
    if (cmd_suite->parsed()) {
      if (suite_name == "lemmas") {
        ExperimentConfig cfg;
        cfg.experiment = "lemma-suite";
        cfg.seed = suite_seed;
        cfg.out_path = suite_out;
        const ExperimentOutput out = run_experiment(cfg);
        std::cout << "wrote " << out.csv_path << " and " << out.json_path << "\n";
        return out.failures == 0 ? 0 : 3;
      }
      if (suite_name == "acceptance") {
        return run_acceptance_suite(suite_out, suite_workers) == 0 ? 0 : 3;
      }
      std::cerr << "unknown suite '" << suite_name << "'\n";
      return 2;
    }
    if (cmd_bounds->parsed()) {
      return emit_bounds(bounds_path);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
