#include "agsysid/bench.hpp"

#include "agsysid/record.hpp"
#include "agsysid/textio.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace agsysid {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config files

Config Config::load(const std::string& path) {
  Config c;
  std::vector<std::string> stack{fs::weakly_canonical(path).string()};
  c.parse_into(read_file(path), fs::path(path).parent_path().string(), stack);
  return c;
}

Config Config::parse(std::string_view text, const std::string& base_dir) {
  Config c;
  std::vector<std::string> stack;
  c.parse_into(text, base_dir, stack);
  return c;
}

void Config::parse_into(std::string_view text, const std::string& base_dir, std::vector<std::string>& stack) {
  const std::string where = stack.empty() ? std::string("<config>") : stack.back();
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    std::string line(raw);
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto at = where + ":" + std::to_string(line_no);
    if (line.rfind("include", 0) == 0 && line.find('=') == std::string::npos) {
      const std::string rel = trim(line.substr(7));
      if (rel.empty()) throw InputError(at + ": include needs a path");
      const fs::path target = fs::path(base_dir.empty() ? "." : base_dir) / rel;
      if (!fs::exists(target)) throw InputError(at + ": included file '" + target.string() + "' not found");
      const std::string canon = fs::weakly_canonical(target).string();
      if (std::find(stack.begin(), stack.end(), canon) != stack.end())
        throw InputError(at + ": include cycle through '" + canon + "'");
      stack.push_back(canon);
      parse_into(read_file(target.string()), target.parent_path().string(), stack);
      stack.pop_back();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError(at + ": expected 'key = value' or 'include <path>'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw InputError(at + ": empty key");
    values_[key] = trim(line.substr(eq + 1));
  }
}

// ---------------------------------------------------------------------------
// Experiment configuration

const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Batch:
      return "batch";
    case Algorithm::Dagger:
      return "dagger";
    case Algorithm::ExpertSeeded:
      return "expert_seeded";
  }
  return "?";
}

namespace {

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "batch") return Algorithm::Batch;
  if (s == "dagger") return Algorithm::Dagger;
  if (s == "expert_seeded") return Algorithm::ExpertSeeded;
  throw InputError("unknown algorithm '" + s + "' (batch, dagger, expert_seeded)");
}

std::vector<std::string> list_of(const std::string& v) {
  std::vector<std::string> out;
  for (const auto& item : split(v, ',')) {
    std::string t = trim(item);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

long long to_int(const std::string& v) {
  std::size_t used = 0;
  long long n = 0;
  try {
    n = std::stoll(v, &used);
  } catch (const std::exception&) {
    throw InputError("'" + v + "' is not an integer");
  }
  if (used != v.size()) throw InputError("'" + v + "' is not an integer");
  return n;
}

int to_count(const std::string& v, int min) {
  const long long n = to_int(v);
  if (n < min || n > 1000000000) throw InputError("'" + v + "' must be an integer >= " + std::to_string(min));
  return static_cast<int>(n);
}

double to_real(const std::string& v) {
  const double d = parse_real(v);
  if (!std::isfinite(d)) throw InputError("'" + v + "' must be finite");
  return d;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InputError("'" + v + "' is not a boolean");
}

std::vector<std::uint64_t> to_seeds(const std::string& v) {
  std::vector<std::uint64_t> seeds;
  for (const auto& item : list_of(v)) {
    const auto dash = item.find('-', 1);
    if (dash == std::string::npos) {
      const long long s = to_int(item);
      if (s < 0) throw InputError("seeds must be non-negative");
      seeds.push_back(static_cast<std::uint64_t>(s));
      continue;
    }
    const long long lo = to_int(trim(item.substr(0, dash)));
    const long long hi = to_int(trim(item.substr(dash + 1)));
    if (lo < 0 || hi < lo || hi - lo > 100000) throw InputError("bad seed range '" + item + "'");
    for (long long s = lo; s <= hi; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
  }
  std::set<std::uint64_t> seen;
  for (auto s : seeds)
    if (!seen.insert(s).second) throw InputError("seed " + std::to_string(s) + " listed twice");
  return seeds;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"name", [](ExperimentConfig& c, const std::string& v) { c.name = v; }},
      {"domain",
       [](ExperimentConfig& c, const std::string& v) {
         if (v == "gridworld") c.domain = DomainKind::Gridworld;
         else if (v == "delayed_plant") c.domain = DomainKind::DelayedPlant;
         else throw InputError("unknown domain '" + v + "' (gridworld, delayed_plant)");
       }},
      {"grid.rows", [](ExperimentConfig& c, const std::string& v) { c.grid.rows = to_count(v, 3); }},
      {"grid.cols", [](ExperimentConfig& c, const std::string& v) { c.grid.cols = to_count(v, 3); }},
      {"grid.discount", [](ExperimentConfig& c, const std::string& v) { c.grid.discount = to_real(v); }},
      {"grid.step_cost", [](ExperimentConfig& c, const std::string& v) { c.grid.step_cost = to_real(v); }},
      {"grid.trap_cost", [](ExperimentConfig& c, const std::string& v) { c.grid.trap_cost = to_real(v); }},
      {"grid.near_start_mass", [](ExperimentConfig& c, const std::string& v) { c.grid.near_start_mass = to_real(v); }},
      {"grid.expert_noise", [](ExperimentConfig& c, const std::string& v) { c.grid.expert_noise = to_real(v); }},
      {"grid.alias_trap_with_goal",
       [](ExperimentConfig& c, const std::string& v) { c.grid.alias_trap_with_goal = to_bool(v); }},
      {"grid.nominal_fallback", [](ExperimentConfig& c, const std::string& v) { c.grid.nominal_fallback = to_bool(v); }},
      {"plant.delay", [](ExperimentConfig& c, const std::string& v) { c.plant.delay = to_count(v, 0); }},
      {"plant.reference",
       [](ExperimentConfig& c, const std::string& v) {
         if (v == "hover") c.plant.reference = PlantReference::Hover;
         else if (v == "rotation") c.plant.reference = PlantReference::Rotation;
         else throw InputError("unknown reference '" + v + "' (hover, rotation)");
       }},
      {"plant.dt", [](ExperimentConfig& c, const std::string& v) { c.plant.dt = to_real(v); }},
      {"plant.horizon", [](ExperimentConfig& c, const std::string& v) { c.plant.horizon = to_count(v, 1); }},
      {"plant.discount", [](ExperimentConfig& c, const std::string& v) { c.plant.discount = to_real(v); }},
      {"plant.force_noise_std", [](ExperimentConfig& c, const std::string& v) { c.plant.force_noise_std = to_real(v); }},
      {"plant.q_scale", [](ExperimentConfig& c, const std::string& v) { c.plant.q_scale = to_real(v); }},
      {"plant.r_scale", [](ExperimentConfig& c, const std::string& v) { c.plant.r_scale = to_real(v); }},
      {"plant.initial_std", [](ExperimentConfig& c, const std::string& v) { c.plant.initial_std = to_real(v); }},
      {"plant.radius", [](ExperimentConfig& c, const std::string& v) { c.plant.radius = to_real(v); }},
      {"plant.rotations", [](ExperimentConfig& c, const std::string& v) { c.plant.rotations = to_count(v, 1); }},
      {"plant.nu_state_var", [](ExperimentConfig& c, const std::string& v) { c.plant.nu_state_var = to_real(v); }},
      {"plant.nu_action_var", [](ExperimentConfig& c, const std::string& v) { c.plant.nu_action_var = to_real(v); }},
      {"plant.nu_expert_action_var",
       [](ExperimentConfig& c, const std::string& v) { c.plant.nu_expert_action_var = to_real(v); }},
      {"plant.ridge_lambda", [](ExperimentConfig& c, const std::string& v) { c.plant.ridge_lambda = to_real(v); }},
      {"plant.abort_threshold", [](ExperimentConfig& c, const std::string& v) { c.plant.abort_threshold = to_real(v); }},
      {"test_episodes", [](ExperimentConfig& c, const std::string& v) { c.test_episodes = to_count(v, 1); }},
      {"discounted_test", [](ExperimentConfig& c, const std::string& v) { c.discounted_test = to_bool(v); }},
      {"algorithms",
       [](ExperimentConfig& c, const std::string& v) {
         c.algorithms.clear();
         for (const auto& a : list_of(v)) c.algorithms.push_back(algorithm_from_string(a));
       }},
      {"exploration", [](ExperimentConfig& c, const std::string& v) { c.explorations = list_of(v); }},
      {"iterations", [](ExperimentConfig& c, const std::string& v) { c.iterations = to_count(v, 1); }},
      {"samples_per_iter", [](ExperimentConfig& c, const std::string& v) { c.samples_per_iter = to_count(v, 1); }},
      {"beta",
       [](ExperimentConfig& c, const std::string& v) {
         c.beta = to_real(v);
         if (c.beta < 0.0 || c.beta > 1.0) throw InputError("beta must lie in [0,1]");
       }},
      {"harvest_all", [](ExperimentConfig& c, const std::string& v) { c.harvest_all = to_bool(v); }},
      {"seeds", [](ExperimentConfig& c, const std::string& v) { c.seeds = to_seeds(v); }},
      {"oc_tol", [](ExperimentConfig& c, const std::string& v) { c.oc_tol = to_real(v); }},
      {"oc_max_iters", [](ExperimentConfig& c, const std::string& v) { c.oc_max_iters = to_count(v, 1); }},
      {"selection", [](ExperimentConfig& c, const std::string& v) { c.selection = selection_mode_from_string(v); }},
      {"output", [](ExperimentConfig& c, const std::string& v) { c.output = v; }},
      {"threads", [](ExperimentConfig& c, const std::string& v) { c.threads = to_count(v, 0); }},
      {"audit.oc_tol", [](ExperimentConfig& c, const std::string& v) { c.audit_oc_tol = to_real(v); }},
      {"audit.corrupt_model", [](ExperimentConfig& c, const std::string& v) { c.audit_corrupt_model = to_bool(v); }},
  };
  return table;
}

}  // namespace

ExperimentConfig experiment_from_config(const Config& config) {
  ExperimentConfig c;
  std::vector<std::string> unknown;
  std::vector<std::string> bad;
  for (const auto& [key, value] : config.values()) {
    const auto it = setters().find(key);
    if (it == setters().end()) {
      unknown.push_back(key);
      continue;
    }
    try {
      it->second(c, value);
    } catch (const InputError& e) {
      bad.push_back(key + ": " + e.what());
    }
  }
  if (!unknown.empty() || !bad.empty()) {
    std::string msg = "invalid configuration";
    if (!unknown.empty()) {
      msg += "; unknown keys:";
      for (const auto& k : unknown) msg += " " + k;
    }
    for (const auto& b : bad) msg += "; " + b;
    throw InputError(msg);
  }
  if (c.output.empty()) c.output = c.name;
  return c;
}

std::string resolve_output_dir(const std::string& dir) {
  const fs::path p(dir);
  if (p.is_absolute()) return p.string();
  if (const char* root = std::getenv("AGSYSID_OUT"); root != nullptr && *root != '\0') return (fs::path(root) / p).string();
  return p.string();
}

// ---------------------------------------------------------------------------
// Domains and single runs

DomainSetup build_domain(const ExperimentConfig& config, bool for_audit) {
  DomainSetup setup;
  const double tol = for_audit ? config.audit_oc_tol : config.oc_tol;
  if (config.domain == DomainKind::Gridworld) {
    auto dom = std::make_unique<GridworldDomain>(make_aliased_gridworld(config.grid));
    FiniteProblemConfig pc = dom->problem_config();
    pc.oc_tol = tol;
    pc.oc_max_iters = config.oc_max_iters;
    setup.problem = std::make_unique<FiniteProblem>(dom->mdp, pc);
    setup.catalog_order = {"expert", "uniform", "trap_avoiding"};
    setup.catalog.emplace("expert", dom->nu_expert);
    setup.catalog.emplace("uniform", dom->nu_uniform);
    setup.catalog.emplace("trap_avoiding", dom->nu_trap_avoiding);
    setup.expert = dom->expert;
    setup.grid = std::move(dom);
    return setup;
  }
  DelayedPlantDomain dom = make_delayed_plant(config.plant);
  PlantProblemConfig pc = dom.problem;
  pc.oc_tol = tol;
  pc.oc_max_iters = config.oc_max_iters;
  pc.test_episodes = config.test_episodes;
  pc.discounted_test = config.discounted_test;
  setup.problem = std::make_unique<PlantProblem>(dom.plant, pc);
  setup.catalog_order = {"nu_t", "nu_e", "nu_en"};
  setup.catalog.emplace("nu_t", dom.nu_t);
  setup.catalog.emplace("nu_e", dom.nu_e);
  setup.catalog.emplace("nu_en", dom.nu_en);
  setup.expert = dom.expert;
  return setup;
}

namespace {

const ExplorationDist& lookup(const DomainSetup& setup, const std::string& name) {
  const auto it = setup.catalog.find(name);
  if (it == setup.catalog.end()) {
    std::string known;
    for (const auto& n : setup.catalog_order) known += (known.empty() ? "" : ", ") + n;
    throw InputError("unknown exploration distribution '" + name + "' (" + known + ")");
  }
  return it->second;
}

std::vector<std::string> explorations_of(const ExperimentConfig& config, const DomainSetup& setup) {
  const auto names = config.explorations.empty() ? setup.catalog_order : config.explorations;
  for (const auto& n : names) lookup(setup, n);
  return names;
}

LoopOptions loop_options(const ExperimentConfig& config, std::uint64_t seed) {
  LoopOptions o;
  o.iterations = config.iterations;
  o.samples_per_iter = config.samples_per_iter;
  o.beta = config.beta;
  o.seed = seed;
  o.harvest_all = config.harvest_all;
  return o;
}

LoopResult run_algorithm(const LearningProblem& problem, Algorithm algorithm, const ExplorationDist& nu,
                         const LoopOptions& options) {
  switch (algorithm) {
    case Algorithm::Batch:
      return run_batch_curve(problem, nu, options);
    case Algorithm::Dagger:
      return run_dagger(problem, nu, options);
    case Algorithm::ExpertSeeded:
      return run_expert_seeded(problem, nu, options);
  }
  throw InternalError("unknown algorithm");
}

std::string run_stem(Algorithm a, const std::string& exploration, std::uint64_t seed) {
  return std::string(to_string(a)) + "_" + exploration + "_seed" + std::to_string(seed);
}

std::size_t draws_at(const LoopResult& r, std::size_t i) {
  return static_cast<std::size_t>(r.records[i].iteration) * static_cast<std::size_t>(r.options.samples_per_iter);
}

void mean_and_stderr(const std::vector<double>& xs, double& mean, double& se) {
  mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  se = 0.0;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    se = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  }
}

}  // namespace

RunOutcome run_one(const ExperimentConfig& config, const DomainSetup& setup, Algorithm algorithm,
                   const std::string& exploration, std::uint64_t seed) {
  RunOutcome out;
  out.algorithm = algorithm;
  out.exploration = exploration;
  out.seed = seed;
  try {
    const ExplorationDist& nu = lookup(setup, exploration);
    out.result = run_algorithm(*setup.problem, algorithm, nu, loop_options(config, seed));
    const auto& recs = out.result.records;
    switch (config.selection) {
      case SelectionMode::Best:
        out.final_cost = recs[out.result.best_index()].test;
        break;
      case SelectionMode::Last:
        out.final_cost = recs.back().test;
        break;
      case SelectionMode::Mixture:
        out.final_cost = setup.problem->test_cost(select_policy(out.result, SelectionMode::Mixture), seed,
                                                  draws_at(out.result, recs.size() - 1));
        break;
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation

std::string Curve::label() const { return std::string(to_string(algorithm)) + " / " + exploration; }

const Curve& ExperimentResult::curve(Algorithm a, const std::string& exploration) const {
  for (const auto& c : curves)
    if (c.algorithm == a && c.exploration == exploration) return c;
  throw InputError("no curve for " + std::string(to_string(a)) + " / " + exploration);
}

std::vector<Curve> aggregate_curves(const std::vector<RunOutcome>& runs, std::vector<std::uint64_t>& paired_seeds) {
  std::vector<std::uint64_t> seeds;
  std::set<std::uint64_t> failed;
  for (const auto& r : runs) {
    if (std::find(seeds.begin(), seeds.end(), r.seed) == seeds.end()) seeds.push_back(r.seed);
    if (!r.ok) failed.insert(r.seed);
  }
  paired_seeds.clear();
  for (auto s : seeds)
    if (!failed.count(s)) paired_seeds.push_back(s);

  std::vector<Curve> curves;
  for (const auto& r : runs) {
    bool seen = false;
    for (const auto& c : curves) seen = seen || (c.algorithm == r.algorithm && c.exploration == r.exploration);
    if (seen) continue;
    Curve c;
    c.algorithm = r.algorithm;
    c.exploration = r.exploration;
    c.seeds = paired_seeds;
    std::vector<const RunOutcome*> members;
    for (auto s : paired_seeds)
      for (const auto& q : runs)
        if (q.algorithm == r.algorithm && q.exploration == r.exploration && q.seed == s) members.push_back(&q);
    if (!members.empty()) {
      const std::size_t len = members.front()->result.records.size();
      for (std::size_t i = 0; i < len; ++i) {
        std::vector<double> xs;
        for (const auto* m : members) xs.push_back(m->result.records[i].test.mean);
        CurvePoint p;
        p.cumulative_samples = draws_at(members.front()->result, i);
        mean_and_stderr(xs, p.mean, p.stderr_);
        c.points.push_back(p);
      }
      std::vector<double> finals;
      for (const auto* m : members) finals.push_back(m->final_cost.mean);
      mean_and_stderr(finals, c.final_mean, c.final_stderr);
    }
    curves.push_back(std::move(c));
  }
  return curves;
}

void write_aggregate_csv(std::ostream& out, const std::vector<Curve>& curves) {
  out << "# agsysid-aggregate v1\n";
  out << "# columns: algorithm, exploration distribution, number of paired seeds, sample draws so far (iteration"
         " times m), test cost mean over seeds, standard error of that mean across seeds\n";
  out << "algorithm,exploration,seeds,draws,mean,stderr\n";
  for (const auto& c : curves)
    for (const auto& p : c.points)
      out << to_string(c.algorithm) << ',' << c.exploration << ',' << c.seeds.size() << ',' << p.cumulative_samples
          << ',' << format_real(p.mean) << ',' << format_real(p.stderr_) << '\n';
}

void write_summary_csv(std::ostream& out, const std::vector<Curve>& curves, SelectionMode selection) {
  out << "# agsysid-summary v1 selection=" << to_string(selection) << "\n";
  out << "# columns: algorithm, exploration distribution, number of paired seeds, final test cost of the selected"
         " policy (mean over seeds), its standard error\n";
  out << "algorithm,exploration,seeds,final_mean,final_stderr\n";
  for (const auto& c : curves)
    out << to_string(c.algorithm) << ',' << c.exploration << ',' << c.seeds.size() << ',' << format_real(c.final_mean)
        << ',' << format_real(c.final_stderr) << '\n';
}

std::vector<Curve> read_aggregate_csv(std::string_view text) {
  std::vector<Curve> curves;
  bool header_seen = false;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != "algorithm,exploration,seeds,draws,mean,stderr")
        throw InputError("aggregate CSV: unexpected header on line " + std::to_string(line_no));
      header_seen = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 6) throw InputError("aggregate CSV: line " + std::to_string(line_no) + " needs 6 fields");
    const Algorithm a = algorithm_from_string(f[0]);
    if (curves.empty() || curves.back().algorithm != a || curves.back().exploration != f[1]) {
      Curve c;
      c.algorithm = a;
      c.exploration = f[1];
      c.seeds.resize(static_cast<std::size_t>(to_count(f[2], 0)));
      curves.push_back(std::move(c));
    }
    CurvePoint p;
    p.cumulative_samples = static_cast<std::size_t>(to_count(f[3], 0));
    p.mean = parse_real(f[4]);
    p.stderr_ = parse_real(f[5]);
    if (!curves.back().points.empty() && p.cumulative_samples <= curves.back().points.back().cumulative_samples)
      throw InputError("aggregate CSV: draws must increase along a curve (line " + std::to_string(line_no) + ")");
    curves.back().points.push_back(p);
  }
  if (!header_seen) throw InputError("aggregate CSV: missing header");
  return curves;
}

// ---------------------------------------------------------------------------
// SVG

namespace {

std::string fmt(double v, int digits = 2) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string tick_label(double v) {
  char buf[48];
  if (v != 0.0 && (std::fabs(v) >= 1e5 || std::fabs(v) < 1e-2)) {
    std::snprintf(buf, sizeof(buf), "%.0e", v);
  } else {
    std::snprintf(buf, sizeof(buf), "%g", v);
  }
  return buf;
}

std::vector<double> linear_ticks(double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0.0) return {lo};
  const double raw = span / 6.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) ticks.push_back(t);
  return ticks;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

}  // namespace

std::string render_svg(const std::vector<Curve>& curves, const PlotOptions& options) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
                                  "#7f7f7f", "#bcbd22", "#17becf"};
  const double w = options.width;
  const double h = options.height;
  const double left = 80, right = 200, top = 40, bottom = 60;
  const double pw = w - left - right;
  const double ph = h - top - bottom;

  double xmin = kInf, xmax = -kInf, ymin = kInf, ymax = -kInf;
  for (const auto& c : curves)
    for (const auto& p : c.points) {
      xmin = std::min(xmin, static_cast<double>(p.cumulative_samples));
      xmax = std::max(xmax, static_cast<double>(p.cumulative_samples));
      ymin = std::min(ymin, p.mean - p.stderr_);
      ymax = std::max(ymax, p.mean + p.stderr_);
    }
  const bool empty = !std::isfinite(xmin);
  if (empty) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  bool log_y = options.log_y && ymin > 0.0;
  if (options.log_y && !log_y && !empty) {
    // Bands may dip below zero; fall back to the smallest positive mean.
    double pos = kInf;
    for (const auto& c : curves)
      for (const auto& p : c.points)
        if (p.mean > 0.0) pos = std::min(pos, p.mean);
    if (std::isfinite(pos)) {
      ymin = pos;
      log_y = true;
    }
  }
  if (xmax <= xmin) xmax = xmin + 1;
  auto ty = [&](double v) { return log_y ? std::log10(std::max(v, ymin)) : v; };
  double y0 = ty(ymin);
  double y1 = ty(ymax);
  if (log_y) {
    y0 = std::floor(y0);
    y1 = std::ceil(y1);
  }
  if (y1 <= y0) y1 = y0 + 1;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (1.0 - (ty(y) - y0) / (y1 - y0)) * ph; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
    << ' ' << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!options.title.empty())
    s << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
      << escape(options.title) << "</text>\n";
  s << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(pw) << "\" height=\"" << fmt(ph)
    << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (double t : linear_ticks(xmin, xmax)) {
    s << "<line x1=\"" << fmt(px(t)) << "\" y1=\"" << fmt(top + ph) << "\" x2=\"" << fmt(px(t)) << "\" y2=\""
      << fmt(top + ph + 5) << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << fmt(px(t)) << "\" y=\"" << fmt(top + ph + 19) << "\" text-anchor=\"middle\">" << tick_label(t)
      << "</text>\n";
  }
  std::vector<double> yticks;
  if (log_y) {
    for (double e = y0; e <= y1 + 1e-9; e += 1.0) yticks.push_back(std::pow(10.0, e));
  } else {
    yticks = linear_ticks(y0, y1);
  }
  for (double t : yticks) {
    const double y = log_y ? top + (1.0 - (std::log10(t) - y0) / (y1 - y0)) * ph : py(t);
    s << "<line x1=\"" << fmt(left - 5) << "\" y1=\"" << fmt(y) << "\" x2=\"" << fmt(left + pw) << "\" y2=\"" << fmt(y)
      << "\" stroke=\"#dddddd\"/>\n";
    s << "<text x=\"" << fmt(left - 8) << "\" y=\"" << fmt(y + 4) << "\" text-anchor=\"end\">" << tick_label(t)
      << "</text>\n";
  }
  s << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"" << fmt(h - 15)
    << "\" text-anchor=\"middle\">samples collected</text>\n";
  s << "<text x=\"18\" y=\"" << fmt(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
    << fmt(top + ph / 2) << ")\">test cost" << (log_y ? " (log scale)" : "") << "</text>\n";

  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& c = curves[i];
    const char* color = palette[i % 10];
    if (c.points.empty()) continue;
    std::string band;
    for (const auto& p : c.points)
      band += fmt(px(static_cast<double>(p.cumulative_samples))) + "," + fmt(py(p.mean + p.stderr_)) + " ";
    for (auto it = c.points.rbegin(); it != c.points.rend(); ++it)
      band += fmt(px(static_cast<double>(it->cumulative_samples))) + "," + fmt(py(it->mean - it->stderr_)) + " ";
    s << "<polygon points=\"" << band << "\" fill=\"" << color << "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n";
    std::string line;
    for (const auto& p : c.points)
      line += fmt(px(static_cast<double>(p.cumulative_samples))) + "," + fmt(py(p.mean)) + " ";
    s << "<polyline points=\"" << line << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    const double ly = top + 12 + 20.0 * static_cast<double>(i);
    s << "<line x1=\"" << fmt(left + pw + 12) << "\" y1=\"" << fmt(ly) << "\" x2=\"" << fmt(left + pw + 36) << "\" y2=\""
      << fmt(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << fmt(left + pw + 42) << "\" y=\"" << fmt(ly + 4) << "\">" << escape(c.label()) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void plot_result_dir(const std::string& dir) {
  const fs::path agg = fs::path(dir) / "aggregate.csv";
  if (!fs::exists(agg)) throw InputError("no aggregate.csv in '" + dir + "'");
  PlotOptions po;
  po.title = fs::path(dir).filename().string();
  const fs::path cfg = fs::path(dir) / "config.txt";
  if (fs::exists(cfg)) {
    const Config c = Config::load(cfg.string());
    if (c.has("name")) po.title = c.values().at("name");
  }
  write_file_atomic((fs::path(dir) / "learning_curves.svg").string(), render_svg(read_aggregate_csv(read_file(agg.string())), po));
}

// ---------------------------------------------------------------------------
// Experiments

namespace {

std::string canonical_config(const ExperimentConfig& c, const std::vector<std::string>& explorations) {
  std::ostringstream s;
  s << "# resolved configuration\n";
  s << "name = " << c.name << "\n";
  s << "domain = " << (c.domain == DomainKind::Gridworld ? "gridworld" : "delayed_plant") << "\n";
  s << "algorithms = ";
  for (std::size_t i = 0; i < c.algorithms.size(); ++i) s << (i ? "," : "") << to_string(c.algorithms[i]);
  s << "\nexploration = ";
  for (std::size_t i = 0; i < explorations.size(); ++i) s << (i ? "," : "") << explorations[i];
  s << "\niterations = " << c.iterations << "\nsamples_per_iter = " << c.samples_per_iter
    << "\nbeta = " << format_real(c.beta) << "\nharvest_all = " << (c.harvest_all ? "true" : "false") << "\nseeds = ";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) s << (i ? "," : "") << c.seeds[i];
  s << "\noc_tol = " << format_real(c.oc_tol) << "\noc_max_iters = " << c.oc_max_iters
    << "\nselection = " << to_string(c.selection) << "\n";
  if (c.domain == DomainKind::Gridworld) {
    const auto& g = c.grid;
    s << "grid.rows = " << g.rows << "\ngrid.cols = " << g.cols << "\ngrid.discount = " << format_real(g.discount)
      << "\ngrid.step_cost = " << format_real(g.step_cost) << "\ngrid.trap_cost = " << format_real(g.trap_cost)
      << "\ngrid.near_start_mass = " << format_real(g.near_start_mass)
      << "\ngrid.expert_noise = " << format_real(g.expert_noise)
      << "\ngrid.alias_trap_with_goal = " << (g.alias_trap_with_goal ? "true" : "false")
      << "\ngrid.nominal_fallback = " << (g.nominal_fallback ? "true" : "false") << "\n";
  } else {
    const auto& p = c.plant;
    s << "plant.delay = " << p.delay << "\nplant.reference = "
      << (p.reference == PlantReference::Hover ? "hover" : "rotation") << "\nplant.dt = " << format_real(p.dt)
      << "\nplant.horizon = " << p.horizon << "\nplant.discount = " << format_real(p.discount)
      << "\nplant.force_noise_std = " << format_real(p.force_noise_std) << "\nplant.q_scale = " << format_real(p.q_scale)
      << "\nplant.r_scale = " << format_real(p.r_scale) << "\nplant.initial_std = " << format_real(p.initial_std)
      << "\nplant.radius = " << format_real(p.radius) << "\nplant.rotations = " << p.rotations
      << "\nplant.nu_state_var = " << format_real(p.nu_state_var)
      << "\nplant.nu_action_var = " << format_real(p.nu_action_var)
      << "\nplant.nu_expert_action_var = " << format_real(p.nu_expert_action_var)
      << "\nplant.ridge_lambda = " << format_real(p.ridge_lambda)
      << "\nplant.abort_threshold = " << format_real(p.abort_threshold) << "\ntest_episodes = " << c.test_episodes
      << "\ndiscounted_test = " << (c.discounted_test ? "true" : "false") << "\n";
  }
  return s.str();
}

template <typename Task>
void parallel_for(std::size_t count, int threads, Task&& task) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads) : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) task(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream& log) {
  require(!config.algorithms.empty(), "experiment: no algorithms configured");
  require(!config.seeds.empty(), "experiment: no seeds configured");
  const DomainSetup setup = build_domain(config);
  const auto explorations = explorations_of(config, setup);

  struct Task {
    Algorithm algorithm;
    std::string exploration;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (auto a : config.algorithms)
    for (const auto& n : explorations)
      for (auto s : config.seeds) tasks.push_back({a, n, s});

  ExperimentResult res;
  res.output_dir = resolve_output_dir(config.output);
  fs::create_directories(fs::path(res.output_dir) / "runs");
  res.runs.resize(tasks.size());
  parallel_for(tasks.size(), config.threads, [&](std::size_t i) {
    res.runs[i] = run_one(config, setup, tasks[i].algorithm, tasks[i].exploration, tasks[i].seed);
    // Only the per-iteration records and policies are used from here on; harvested
    // plant datasets run to hundreds of MB per run.
    res.runs[i].result.dataset = TransitionDataset{};
    res.runs[i].result.models.clear();
    res.runs[i].result.models.shrink_to_fit();
  });

  std::string failures;
  for (const auto& r : res.runs) {
    const std::string stem = run_stem(r.algorithm, r.exploration, r.seed);
    if (!r.ok) {
      res.warnings.push_back(stem + " failed: " + r.error);
      failures += stem + ": " + r.error + "\n";
      continue;
    }
    std::ostringstream csv;
    r.result.write_csv(csv);
    write_file_atomic((fs::path(res.output_dir) / "runs" / (stem + ".csv")).string(), csv.str());
  }
  if (!failures.empty()) write_file_atomic((fs::path(res.output_dir) / "failures.txt").string(), failures);

  res.curves = aggregate_curves(res.runs, res.paired_seeds);
  if (res.paired_seeds.size() < config.seeds.size())
    res.warnings.push_back("aggregating over " + std::to_string(res.paired_seeds.size()) + " of " +
                           std::to_string(config.seeds.size()) + " seeds");
  std::ostringstream agg;
  write_aggregate_csv(agg, res.curves);
  write_file_atomic((fs::path(res.output_dir) / "aggregate.csv").string(), agg.str());
  std::ostringstream summary;
  write_summary_csv(summary, res.curves, config.selection);
  write_file_atomic((fs::path(res.output_dir) / "summary.csv").string(), summary.str());
  write_file_atomic((fs::path(res.output_dir) / "config.txt").string(), canonical_config(config, explorations));
  PlotOptions po;
  po.title = config.name;
  // drawn from the written CSV so that `plot` on the directory reproduces it
  write_file_atomic((fs::path(res.output_dir) / "learning_curves.svg").string(),
                    render_svg(read_aggregate_csv(agg.str()), po));

  for (const auto& w : res.warnings) log << "warning: " << w << "\n";
  for (const auto& c : res.curves)
    log << c.label() << ": final " << to_string(config.selection) << " cost " << format_real(c.final_mean)
        << " +- " << format_real(c.final_stderr) << " over " << c.seeds.size() << " seeds\n";
  log << "results in " << res.output_dir << "\n";
  return res;
}

// ---------------------------------------------------------------------------
// Audits

AuditSuiteResult run_audit(const ExperimentConfig& config, std::ostream& log) {
  if (config.domain != DomainKind::Gridworld)
    throw InputError("audit: the bounds are checked exactly and need a finite-MDP domain (domain = gridworld)");
  AuditSuiteResult out;
  out.output_dir = resolve_output_dir(config.output);
  if (config.seeds.empty() || config.algorithms.empty()) {
    out.empty = true;
    log << "no audits: the configuration lists no runs\n";
    return out;
  }
  const DomainSetup setup = build_domain(config, true);
  const auto& problem = dynamic_cast<const FiniteProblem&>(*setup.problem);
  const auto explorations = explorations_of(config, setup);
  AuditOptions ao;
  ao.zero_prediction_error = config.audit_corrupt_model;
  const std::vector<Policy> comparison{setup.expert};

  auto take = [&](std::vector<BoundReport> reports, const std::string& prefix) {
    for (auto& r : reports) {
      r.name = prefix + r.name;
      out.reports.push_back(std::move(r));
    }
  };
  for (auto seed : config.seeds)
    for (auto a : config.algorithms)
      for (const auto& n : explorations) {
        const ExplorationDist& nu = lookup(setup, n);
        const std::string prefix = std::string(to_string(a)) + "/" + n + "/seed" + std::to_string(seed) + "/";
        const LoopOptions opts = loop_options(config, seed);
        if (a == Algorithm::Batch) {
          const LoopResult r = run_batch(problem, nu, config.iterations * config.samples_per_iter, seed);
          take(audit_single_model(problem, r, nu, comparison, ao), prefix);
          continue;
        }
        const LoopResult r = run_algorithm(problem, a, nu, opts);
        if (a == Algorithm::Dagger) {
          DaggerAudit d = audit_dagger_bounds(problem, r, nu, comparison, ao);
          d.reports.push_back(d.averaged_chain);
          take(std::move(d.reports), prefix);
        }
        const LastPolicyReport last = audit_last_policy(problem.truth(), r, ao);
        take({last.bound, last.loose_bound}, prefix);
      }
  for (const auto& r : out.reports)
    if (r.asserted && !r.satisfied) ++out.violations;

  fs::create_directories(out.output_dir);
  std::ostringstream csv;
  write_reports_csv(csv, out.reports);
  write_file_atomic((fs::path(out.output_dir) / "bounds.csv").string(), csv.str());
  write_reports_table(log, out.reports);
  log << out.reports.size() << " checks, " << out.violations << " violated; details in "
      << (fs::path(out.output_dir) / "bounds.csv").string() << "\n";
  return out;
}

std::vector<std::vector<std::pair<std::string, std::string>>> sweep_grid(const std::vector<std::string>& params) {
  std::vector<std::vector<std::pair<std::string, std::string>>> grid{{}};
  std::set<std::string> keys;
  for (const auto& p : params) {
    const auto eq = p.find('=');
    if (eq == std::string::npos || eq == 0) throw InputError("sweep parameter '" + p + "' must look like key=v1,v2");
    const std::string key = trim(p.substr(0, eq));
    if (!keys.insert(key).second) throw InputError("sweep parameter '" + key + "' given twice");
    const auto values = list_of(p.substr(eq + 1));
    if (values.empty()) throw InputError("sweep parameter '" + key + "' has no values");
    std::vector<std::vector<std::pair<std::string, std::string>>> next;
    for (const auto& g : grid)
      for (const auto& v : values) {
        auto row = g;
        row.emplace_back(key, v);
        next.push_back(std::move(row));
      }
    grid = std::move(next);
  }
  return grid;
}

}  // namespace agsysid
