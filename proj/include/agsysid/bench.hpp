#pragma once

#include "agsysid/audit.hpp"
#include "agsysid/domains.hpp"
#include "agsysid/sysid.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace agsysid {

/// Flat key = value configuration. `include <path>` pulls in another file
/// (relative to the including file); later assignments override earlier ones.
/// `#` starts a comment.
class Config {
 public:
  static Config load(const std::string& path);
  static Config parse(std::string_view text, const std::string& base_dir = ".");

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  void parse_into(std::string_view text, const std::string& base_dir, std::vector<std::string>& stack);

  std::map<std::string, std::string> values_;
};

enum class DomainKind { Gridworld, DelayedPlant };
enum class Algorithm { Batch, Dagger, ExpertSeeded };
const char* to_string(Algorithm a);

struct ExperimentConfig {
  std::string name = "experiment";
  DomainKind domain = DomainKind::Gridworld;
  GridworldConfig grid;
  DelayedPlantConfig plant;
  int test_episodes = 20;
  bool discounted_test = false;
  std::vector<Algorithm> algorithms{Algorithm::Batch, Algorithm::Dagger};
  std::vector<std::string> explorations;  // names from the domain's catalog; empty means all
  int iterations = 10;
  int samples_per_iter = 10;
  double beta = 0.5;
  bool harvest_all = false;
  std::vector<std::uint64_t> seeds{1};
  double oc_tol = 1e-6;
  int oc_max_iters = 100000;
  SelectionMode selection = SelectionMode::Last;
  std::string output;  // empty: the name
  int threads = 0;     // 0: hardware concurrency
  // audit only
  double audit_oc_tol = 1e-9;
  bool audit_corrupt_model = false;
};

/// Throws InputError listing every unknown key and every bad value.
ExperimentConfig experiment_from_config(const Config& config);

/// Output directory: relative paths resolve under $AGSYSID_OUT when it is set.
std::string resolve_output_dir(const std::string& dir);

/// Everything a learning loop needs for one domain instance.
struct DomainSetup {
  std::unique_ptr<LearningProblem> problem;
  std::map<std::string, ExplorationDist> catalog;
  std::vector<std::string> catalog_order;
  Policy expert;
  std::unique_ptr<GridworldDomain> grid;  // set for finite domains
};
DomainSetup build_domain(const ExperimentConfig& config, bool for_audit = false);

/// One learning loop: its curve and its final cost under the selection mode.
struct RunOutcome {
  Algorithm algorithm = Algorithm::Dagger;
  std::string exploration;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  LoopResult result;
  CostEstimate final_cost;
};

RunOutcome run_one(const ExperimentConfig& config, const DomainSetup& setup, Algorithm algorithm,
                   const std::string& exploration, std::uint64_t seed);

struct CurvePoint {
  std::size_t cumulative_samples = 0;
  double mean = 0.0;
  double stderr_ = 0.0;  // across seeds
};

struct Curve {
  Algorithm algorithm = Algorithm::Dagger;
  std::string exploration;
  std::vector<std::uint64_t> seeds;  // the paired seeds used
  std::vector<CurvePoint> points;
  double final_mean = 0.0;
  double final_stderr = 0.0;
  std::string label() const;
};

struct ExperimentResult {
  std::string output_dir;
  std::vector<RunOutcome> runs;  // datasets and per-iteration models are released after each run
  std::vector<Curve> curves;
  std::vector<std::uint64_t> paired_seeds;
  std::vector<std::string> warnings;

  const Curve& curve(Algorithm a, const std::string& exploration) const;
};

/// Runs every (algorithm, exploration, seed), writes per-seed CSVs, the
/// aggregate and summary CSVs and the learning-curve SVG. Seeds that fail are
/// reported and dropped from every curve so the aggregates stay paired.
ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream& log);

/// Aggregate over the seeds that completed for every run of the experiment.
std::vector<Curve> aggregate_curves(const std::vector<RunOutcome>& runs, std::vector<std::uint64_t>& paired_seeds);

void write_aggregate_csv(std::ostream& out, const std::vector<Curve>& curves);
void write_summary_csv(std::ostream& out, const std::vector<Curve>& curves, SelectionMode selection);
std::vector<Curve> read_aggregate_csv(std::string_view text);

struct PlotOptions {
  std::string title;
  bool log_y = true;
  int width = 800;
  int height = 500;
};
/// Cost against cumulative samples, one polyline per curve with a +-stderr band.
std::string render_svg(const std::vector<Curve>& curves, const PlotOptions& options);

/// Rebuilds the SVG of a result directory from its aggregate CSV.
void plot_result_dir(const std::string& dir);

struct AuditSuiteResult {
  std::vector<BoundReport> reports;
  int violations = 0;
  bool empty = false;
  std::string output_dir;
};

/// Exact bound checks on the configured finite-MDP runs. Throws InputError
/// for continuous domains.
AuditSuiteResult run_audit(const ExperimentConfig& config, std::ostream& log);

/// Cartesian product of parameter overrides: "key=v1,v2".
std::vector<std::vector<std::pair<std::string, std::string>>> sweep_grid(const std::vector<std::string>& params);

}  // namespace agsysid
