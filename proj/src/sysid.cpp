#include "agsysid/sysid.hpp"

#include "agsysid/textio.hpp"

#include <cmath>
#include <ostream>

namespace agsysid {

bool ExplorationDist::needs_set_state() const {
  return std::holds_alternative<ExplicitFinite>(kind) || std::holds_alternative<UniformFinite>(kind) ||
         std::holds_alternative<TrajectoryNoise>(kind);
}

// ---------------------------------------------------------------------------
// Finite MDPs

FiniteProblem::FiniteProblem(FiniteMdp truth, FiniteProblemConfig config)
    : truth_(std::move(truth)), config_(std::move(config)) {
  truth_.validate();
  if (config_.model_class == FiniteModelClass::Aliased) {
    require(static_cast<int>(config_.partition.block_of_state.size()) == truth_.num_states,
            "FiniteProblem: partition size must equal the state count");
  }
}

void FiniteProblem::draw_exploration(const ExplorationDist& nu, int iteration, SimStreams& streams,
                                     TransitionDataset& out) const {
  if (nu.needs_set_state() && !supports_set_state())
    throw CapabilityError("exploration distribution '" + nu.name + "' needs a generative simulator");
  auto from_table = [&](const StateActionDist& dist) {
    const auto [s, a] = dist.sample(streams.init);
    const int next = truth_.step(s, a, streams.env);
    out.add(Sample::finite(iteration, Provenance::Exploration, 0, s, a, next));
  };
  if (const auto* e = std::get_if<ExplorationDist::ExplicitFinite>(&nu.kind)) {
    require(e->dist.table.rows() == truth_.num_states && e->dist.table.cols() == truth_.num_actions,
            "exploration table has wrong shape");
    from_table(e->dist);
  } else if (std::holds_alternative<ExplorationDist::UniformFinite>(nu.kind)) {
    from_table(StateActionDist::uniform(truth_.num_states, truth_.num_actions));
  } else if (const auto* x = std::get_if<ExplorationDist::ExpertPolicy>(&nu.kind)) {
    const auto d = sample_visitation(truth_, x->policy, streams);
    out.add(Sample::finite(iteration, Provenance::Exploration, d.step, d.state, d.action, d.next_state));
  } else {
    throw InputError("exploration distribution '" + nu.name + "' is not defined on a finite MDP");
  }
}

void FiniteProblem::draw_on_policy(const Policy& policy, int iteration, SimStreams& streams, bool harvest_all,
                                   TransitionDataset& out) const {
  if (!harvest_all) {
    const auto d = sample_visitation(truth_, policy, streams);
    out.add(Sample::finite(iteration, Provenance::OnPolicy, d.step, d.state, d.action, d.next_state));
    return;
  }
  for (const auto& d : sample_trajectory(truth_, policy, streams))
    out.add(Sample::finite(iteration, Provenance::OnPolicy, d.step, d.state, d.action, d.next_state));
}

TransitionModel FiniteProblem::initial_model() const { return fit(TransitionDataset{}); }

TransitionModel FiniteProblem::fit(const TransitionDataset& data) const { return fit(data, config_.smoothing); }

TransitionModel FiniteProblem::fit(const TransitionDataset& data, double smoothing) const {
  if (config_.model_class == FiniteModelClass::Aliased)
    return fit_aliased_ftl(data, config_.partition, truth_.num_states, truth_.num_actions, smoothing, config_.fallback);
  return fit_tabular_ftl(data, truth_.num_states, truth_.num_actions, smoothing, config_.fallback);
}

OcSolution FiniteProblem::solve(const TransitionModel& model) const {
  return value_iteration(model, truth_.cost, truth_.discount, config_.oc_tol, config_.oc_max_iters);
}

CostEstimate FiniteProblem::test_cost(const Policy& policy, std::uint64_t, std::size_t) const {
  return CostEstimate{expected_cost(truth_, policy), 0.0, 0};
}

// ---------------------------------------------------------------------------
// Linear plants

PlantProblem::PlantProblem(LinearPlant truth, PlantProblemConfig config)
    : truth_(std::move(truth)), config_(std::move(config)) {
  truth_.validate();
  const auto d = truth_.state_dim();
  const auto k = truth_.control_dim();
  if (config_.base_a.size() == 0) config_.base_a = truth_.dynamics_a;
  if (config_.base_b.size() == 0) config_.base_b = truth_.dynamics_b;
  require(config_.base_a.rows() == d && config_.base_a.cols() == d && config_.base_b.rows() == d &&
              config_.base_b.cols() == k,
          "PlantProblem: base model has wrong shape");
  model_noise_ = config_.model_noise_cov.size() == 0 ? Mat::Identity(d, d) : config_.model_noise_cov;
  require(config_.ridge_lambda > 0.0, "PlantProblem: ridge lambda must be positive");
  require(config_.test_episodes >= 1, "PlantProblem: need at least one test episode");
}

void PlantProblem::add_transitions(const std::vector<PlantTransition>& trs, int iteration, Provenance prov,
                                   bool harvest_all, TransitionDataset& out) const {
  auto add = [&](const PlantTransition& tr) { out.add(Sample{iteration, prov, tr.step, tr.state, tr.action, tr.next_state}); };
  if (!harvest_all) {
    add(trs.back());
    return;
  }
  for (const auto& tr : trs) add(tr);
}

void PlantProblem::draw_exploration(const ExplorationDist& nu, int iteration, SimStreams& streams,
                                    TransitionDataset& out) const {
  if (nu.needs_set_state() && !supports_set_state())
    throw CapabilityError("exploration distribution '" + nu.name + "' needs a generative simulator");
  const PlantSamplingOptions base{std::nullopt, config_.abort_threshold};
  if (const auto* tn = std::get_if<ExplorationDist::TrajectoryNoise>(&nu.kind)) {
    const auto d = truth_.state_dim();
    const auto k = truth_.control_dim();
    const Mat ls = covariance_factor(tn->state_cov);
    const Mat la = covariance_factor(tn->action_cov);
    const int t = std::min(truth_.horizon - 1, static_cast<int>(uniform01(streams.init) * truth_.horizon));
    const Vec x = truth_.target_state(t) + ls * standard_normal(streams.init, d);
    const Vec pending = truth_.target_control(t - 1) + la * standard_normal(streams.action, k);
    const Vec u = truth_.target_control(t) + la * standard_normal(streams.action, k);
    PlantSimulator sim(truth_);
    sim.set_state(x, pending, t);
    const Vec next = sim.step(u, streams.env);
    out.add(Sample{iteration, Provenance::Exploration, t, x, u, next});
  } else if (const auto* e = std::get_if<ExplorationDist::ExpertPolicy>(&nu.kind)) {
    add_transitions({sample_plant_visitation(truth_, e->policy, streams, base)}, iteration, Provenance::Exploration,
                    false, out);
  } else if (const auto* en = std::get_if<ExplorationDist::ExpertPlusNoise>(&nu.kind)) {
    PlantSamplingOptions opts = base;
    opts.action_noise_factor = covariance_factor(en->action_cov);
    add_transitions({sample_plant_visitation(truth_, en->policy, streams, opts)}, iteration, Provenance::Exploration,
                    false, out);
  } else {
    throw InputError("exploration distribution '" + nu.name + "' is not defined on a linear plant");
  }
}

void PlantProblem::draw_on_policy(const Policy& policy, int iteration, SimStreams& streams, bool harvest_all,
                                  TransitionDataset& out) const {
  const PlantSamplingOptions opts{std::nullopt, config_.abort_threshold};
  if (harvest_all) {
    add_transitions(sample_plant_trajectory(truth_, policy, streams, opts), iteration, Provenance::OnPolicy, true, out);
  } else {
    add_transitions({sample_plant_visitation(truth_, policy, streams, opts)}, iteration, Provenance::OnPolicy, false,
                    out);
  }
}

TransitionModel PlantProblem::initial_model() const {
  const auto d = truth_.state_dim();
  const auto k = truth_.control_dim();
  if (config_.model_class == PlantModelClass::TimeVarying) {
    TimeVaryingOffsetModel m;
    m.base_a = config_.base_a;
    m.base_b = config_.base_b;
    m.offset_a.assign(static_cast<std::size_t>(truth_.horizon), Mat::Zero(d, d));
    m.offset_b.assign(static_cast<std::size_t>(truth_.horizon), Mat::Zero(d, k));
    m.reference = truth_.reference;
    m.noise_cov = model_noise_;
    return TransitionModel{std::move(m)};
  }
  return TransitionModel{LinearOffsetModel{config_.base_a, config_.base_b, Mat::Zero(d, d), Mat::Zero(d, k), model_noise_}};
}

TransitionModel PlantProblem::fit(const TransitionDataset& data) const {
  if (data.empty()) return initial_model();
  if (config_.model_class == PlantModelClass::TimeVarying)
    return fit_time_varying(data, config_.base_a, config_.base_b, config_.ridge_lambda, truth_.horizon,
                            truth_.reference, model_noise_);
  return fit_linear_ridge(data, config_.base_a, config_.base_b, config_.ridge_lambda, model_noise_);
}

OcSolution PlantProblem::solve(const TransitionModel& model) const {
  if (config_.model_class == PlantModelClass::TimeVarying) {
    TrackingProblem tp;
    tp.cost_q = truth_.cost_q;
    tp.cost_r = truth_.cost_r;
    tp.terminal_q = Mat::Zero(truth_.state_dim(), truth_.state_dim());
    tp.reference = truth_.reference;
    tp.reference_control = truth_.reference_control;
    tp.horizon = truth_.horizon;
    return tv_lqr_tracking(model, tp);
  }
  Mat a;
  Mat b;
  Vec c;
  model.dynamics_at(0, a, b, c);
  OcSolution sol = riccati_discounted(a, b, truth_.cost_q, truth_.cost_r, truth_.discount, config_.oc_tol,
                                      config_.oc_max_iters);
  // Regulate around the (fixed) target: u = K (x - x*) + u*.
  auto& lin = std::get<LinearFeedbackPolicy>(sol.policy.kind);
  lin.offset = truth_.target_control(0) - lin.gain * truth_.target_state(0);
  return sol;
}

CostEstimate PlantProblem::test_cost(const Policy& policy, std::uint64_t seed, std::size_t budget) const {
  SimStreams streams = SimStreams::from(seed, "test", budget);
  return rollout_cost(truth_, policy, config_.test_episodes, streams, RolloutOptions{config_.discounted_test, 1e12});
}

// ---------------------------------------------------------------------------
// Loops

namespace {

struct Solved {
  Policy policy;
  double slack;
  bool converged;
};

// A failed solve keeps the previous policy and leaves an infinite slack in the ledger.
Solved solve_or_keep(const LearningProblem& problem, const TransitionModel& model, const Policy& previous) {
  try {
    OcSolution sol = problem.solve(model);
    return Solved{std::move(sol.policy), sol.diagnostics.slack, sol.diagnostics.converged};
  } catch (const ConvergenceError&) {
    return Solved{previous, kInf, false};
  } catch (const InputError&) {
    return Solved{previous, kInf, false};
  }
}

Policy first_policy(const LearningProblem& problem, const TransitionModel& model) {
  OcSolution sol = problem.solve(model);
  return std::move(sol.policy);
}

void check_capability(const LearningProblem& problem, const ExplorationDist& nu) {
  if (nu.needs_set_state() && !problem.supports_set_state())
    throw CapabilityError("exploration distribution '" + nu.name + "' needs a generative simulator, but the environment only supports reset");
}

void train_losses(const LearningProblem& problem, const TransitionModel& model, const TransitionDataset& slice,
                  IterationRecord& rec) {
  rec.train_kl = empirical_loss(model, slice, LossKind::KL).value;
  rec.train_cls = problem.is_finite() ? empirical_loss(model, slice, LossKind::Classification).value : std::nan("");
}

std::size_t draw_budget(int n, const LoopOptions& options) {
  return static_cast<std::size_t>(n) * static_cast<std::size_t>(options.samples_per_iter);
}

enum class Branching { Mixed, ExpertFirst };

LoopResult run_loop(const LearningProblem& problem, const ExplorationDist& nu, const LoopOptions& options,
                    Branching branching, const char* name) {
  require(options.iterations >= 1, "learning loop: N must be at least 1");
  require(options.samples_per_iter >= 1, "learning loop: m must be at least 1");
  require(options.beta >= 0.0 && options.beta <= 1.0, "learning loop: beta must lie in [0,1]");
  check_capability(problem, nu);

  LoopResult res;
  res.algorithm = name;
  res.exploration = nu.name;
  res.options = options;
  res.initial_model = problem.initial_model();
  res.initial_policy = first_policy(problem, res.initial_model);

  SimStreams explore = SimStreams::from(options.seed, "explore");
  SimStreams on_policy = SimStreams::from(options.seed, "on_policy");
  Rng coin = make_stream(options.seed, "branch");

  const TransitionModel* model = &res.initial_model;
  const Policy* policy = &res.initial_policy;
  for (int n = 1; n <= options.iterations; ++n) {
    TransitionDataset slice;
    for (int j = 0; j < options.samples_per_iter; ++j) {
      bool from_nu;
      if (branching == Branching::ExpertFirst) {
        from_nu = n == 1;
      } else {
        from_nu = uniform01(coin) < options.beta;
      }
      if (from_nu) {
        problem.draw_exploration(nu, n, explore, slice);
      } else {
        problem.draw_on_policy(*policy, n, on_policy, options.harvest_all, slice);
      }
    }
    IterationRecord rec;
    rec.iteration = n;
    rec.exploration_samples = slice.count(Provenance::Exploration);
    train_losses(problem, *model, slice, rec);
    res.dataset.append(slice);
    rec.cumulative_samples = res.dataset.size();

    res.models.push_back(problem.fit(res.dataset));
    Solved s = solve_or_keep(problem, res.models.back(), *policy);
    res.policies.push_back(std::move(s.policy));
    rec.oc_slack = s.slack;
    rec.oc_converged = s.converged;
    // Keyed by draws so that every algorithm shares the test noise at a budget,
    // even when whole on-policy trajectories are harvested.
    rec.test = problem.test_cost(res.policies.back(), options.seed, draw_budget(n, options));
    res.records.push_back(rec);

    model = &res.models.back();
    policy = &res.policies.back();
  }
  res.samples_consumed = res.dataset.size();
  return res;
}

}  // namespace

LoopResult run_batch(const LearningProblem& problem, const ExplorationDist& nu, int m, std::uint64_t seed) {
  LoopOptions opts;
  opts.iterations = 1;
  opts.samples_per_iter = m;
  opts.beta = 1.0;
  opts.seed = seed;
  LoopResult res = run_batch_curve(problem, nu, opts);
  res.algorithm = "batch";
  return res;
}

LoopResult run_batch_curve(const LearningProblem& problem, const ExplorationDist& nu, const LoopOptions& options) {
  require(options.iterations >= 1, "batch: N must be at least 1");
  require(options.samples_per_iter >= 1, "batch: m must be at least 1");
  check_capability(problem, nu);
  LoopResult res;
  res.algorithm = "batch";
  res.exploration = nu.name;
  res.options = options;
  res.options.beta = 1.0;
  res.initial_model = problem.initial_model();
  res.initial_policy = first_policy(problem, res.initial_model);

  SimStreams explore = SimStreams::from(options.seed, "explore");
  const TransitionModel* model = &res.initial_model;
  const Policy* policy = &res.initial_policy;
  for (int n = 1; n <= options.iterations; ++n) {
    TransitionDataset slice;
    for (int j = 0; j < options.samples_per_iter; ++j) problem.draw_exploration(nu, n, explore, slice);
    IterationRecord rec;
    rec.iteration = n;
    rec.exploration_samples = slice.size();
    train_losses(problem, *model, slice, rec);
    res.dataset.append(slice);
    rec.cumulative_samples = res.dataset.size();
    res.models.push_back(problem.fit(res.dataset));
    Solved s = solve_or_keep(problem, res.models.back(), *policy);
    res.policies.push_back(std::move(s.policy));
    rec.oc_slack = s.slack;
    rec.oc_converged = s.converged;
    rec.test = problem.test_cost(res.policies.back(), options.seed, draw_budget(n, options));
    res.records.push_back(rec);
    model = &res.models.back();
    policy = &res.policies.back();
  }
  res.samples_consumed = res.dataset.size();
  return res;
}

LoopResult run_dagger(const LearningProblem& problem, const ExplorationDist& nu, const LoopOptions& options) {
  return run_loop(problem, nu, options, Branching::Mixed, "dagger");
}

LoopResult run_expert_seeded(const LearningProblem& problem, const ExplorationDist& nu_expert,
                             const LoopOptions& options) {
  return run_loop(problem, nu_expert, options, Branching::ExpertFirst, "expert_seeded");
}

std::size_t LoopResult::best_index() const {
  require(!records.empty(), "LoopResult: empty sequence");
  std::size_t best = 0;
  for (std::size_t i = 1; i < records.size(); ++i)
    if (records[i].test.mean < records[best].test.mean) best = i;
  return best;
}

void LoopResult::write_csv(std::ostream& out) const {
  out << "# agsysid-loop v1 algorithm=" << algorithm << " exploration=" << exploration << " N=" << options.iterations
      << " m=" << options.samples_per_iter << " beta=" << format_real(options.beta) << " seed=" << options.seed
      << " samples_consumed=" << samples_consumed << "\n";
  out << "# columns: iteration, cumulative samples, exploration draws in the slice, KL and 0-1 loss of the"
         " collecting model on the slice, test cost mean and standard error, OC slack, OC converged (0/1)\n";
  out << "iteration,cumulative_samples,exploration_samples,train_kl,train_cls,test_mean,test_stderr,oc_slack,"
         "oc_converged\n";
  for (const auto& r : records) {
    out << r.iteration << ',' << r.cumulative_samples << ',' << r.exploration_samples << ',' << format_real(r.train_kl)
        << ',' << format_real(r.train_cls) << ',' << format_real(r.test.mean) << ',' << format_real(r.test.stderr_)
        << ',' << format_real(r.oc_slack) << ',' << (r.oc_converged ? 1 : 0) << "\n";
  }
}

SelectionMode selection_mode_from_string(std::string_view s) {
  if (s == "best") return SelectionMode::Best;
  if (s == "mixture") return SelectionMode::Mixture;
  if (s == "last") return SelectionMode::Last;
  throw InputError("unknown selection mode '" + std::string(s) + "'");
}

const char* to_string(SelectionMode m) {
  switch (m) {
    case SelectionMode::Best:
      return "best";
    case SelectionMode::Mixture:
      return "mixture";
    case SelectionMode::Last:
      return "last";
  }
  return "?";
}

Policy select_policy(const LoopResult& result, SelectionMode mode) {
  require(!result.policies.empty(), "select_policy: empty sequence");
  switch (mode) {
    case SelectionMode::Best:
      return result.policies[result.best_index()];
    case SelectionMode::Last:
      return result.policies.back();
    case SelectionMode::Mixture:
      if (result.policies.size() == 1) return result.policies.front();
      return Policy::mixture(result.policies);
  }
  throw InternalError("select_policy: unknown mode");
}

}  // namespace agsysid
