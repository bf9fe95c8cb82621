// Command-line front end: run, audit, sweep and plot.
#include "agsysid/bench.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

using namespace agsysid;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitViolation = 2;
constexpr int kExitFailure = 3;

ExperimentConfig load(const std::string& path, const std::vector<std::string>& overrides) {
  Config cfg = Config::load(path);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw InputError("--set expects key=value, got '" + o + "'");
    cfg.set(o.substr(0, eq), o.substr(eq + 1));
  }
  return experiment_from_config(cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Agnostic system identification experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  int threads = -1;

  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--set", overrides, "Override a config key (key=value)");
  run->add_option("--threads", threads, "Worker threads (0: all cores)")->check(CLI::NonNegativeNumber);

  bool corrupt = false;
  auto* audit = app.add_subcommand("audit", "Check the theoretical bounds on finite-MDP runs");
  audit->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  audit->add_option("--set", overrides, "Override a config key (key=value)");
  audit->add_flag("--corrupt-model", corrupt, "Test hook: claim a zero prediction error when forming the bounds");

  std::vector<std::string> params;
  auto* sweep = app.add_subcommand("sweep", "Run the experiment once per parameter combination");
  sweep->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--param", params, "key=v1,v2,... (repeatable; combinations are crossed)")->required();
  sweep->add_option("--set", overrides, "Override a config key (key=value)");
  sweep->add_option("--threads", threads, "Worker threads (0: all cores)")->check(CLI::NonNegativeNumber);

  std::string result_dir;
  auto* plot = app.add_subcommand("plot", "Redraw the learning-curve SVG of a result directory");
  plot->add_option("result-dir", result_dir, "Directory written by run")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) {
      ExperimentConfig cfg = load(config_path, overrides);
      if (threads >= 0) cfg.threads = threads;
      run_experiment(cfg, std::cout);
    } else if (*audit) {
      ExperimentConfig cfg = load(config_path, overrides);
      if (corrupt) cfg.audit_corrupt_model = true;
      const AuditSuiteResult res = run_audit(cfg, std::cout);
      if (res.violations > 0) {
        std::cerr << "bound violated in " << res.violations << " check(s)\n";
        return kExitViolation;
      }
    } else if (*sweep) {
      const ExperimentConfig base = load(config_path, overrides);
      for (const auto& combo : sweep_grid(params)) {
        Config cfg = Config::load(config_path);
        for (const auto& o : overrides) {
          const auto eq = o.find('=');
          cfg.set(o.substr(0, eq), o.substr(eq + 1));
        }
        std::string tag;
        for (const auto& [k, v] : combo) {
          cfg.set(k, v);
          tag += (tag.empty() ? "" : "_") + k + "=" + v;
        }
        ExperimentConfig ec = experiment_from_config(cfg);
        ec.output = (std::filesystem::path(base.output) / tag).string();
        if (threads >= 0) ec.threads = threads;
        std::cout << "== " << tag << "\n";
        run_experiment(ec, std::cout);
      }
    } else if (*plot) {
      plot_result_dir(result_dir);
      std::cout << "wrote " << (std::filesystem::path(result_dir) / "learning_curves.svg").string() << "\n";
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}
