#pragma once

#include "agsysid/common.hpp"
#include "agsysid/dataset.hpp"
#include "agsysid/mdp.hpp"
#include "agsysid/model.hpp"
#include "agsysid/oc.hpp"
#include "agsysid/plant.hpp"

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace agsysid {

/// Exploration distribution nu. Every variant yields i.i.d. (s, a) draws whose
/// successor is observed by executing the pair on the system.
struct ExplorationDist {
  struct ExplicitFinite {
    StateActionDist dist;
  };
  struct UniformFinite {};
  /// nu_t: reference state and control plus white Gaussian noise (needs set-state).
  struct TrajectoryNoise {
    Mat state_cov;
    Mat action_cov;
  };
  /// nu_e: expert run from mu with geometric stopping.
  struct ExpertPolicy {
    Policy policy;
  };
  /// nu_en: expert with extra control noise.
  struct ExpertPlusNoise {
    Policy policy;
    Mat action_cov;
  };

  std::variant<ExplicitFinite, UniformFinite, TrajectoryNoise, ExpertPolicy, ExpertPlusNoise> kind;
  std::string name;

  /// Draws are made by placing the system in an arbitrary state.
  bool needs_set_state() const;
};

struct LoopOptions {
  int iterations = 1;          // N
  int samples_per_iter = 1;    // m
  double beta = 0.5;           // probability of an exploration draw
  std::uint64_t seed = 0;
  /// Keep every transition of each on-policy trajectory instead of only the
  /// stopping-step pair. Faster, but the slices are no longer draws from D_{mu,pi}.
  bool harvest_all = false;
};

/// What a learning loop needs from an environment and model class.
class LearningProblem {
 public:
  virtual ~LearningProblem() = default;

  virtual bool is_finite() const = 0;
  /// The environment accepts arbitrary states (generative model).
  virtual bool supports_set_state() const = 0;

  virtual void draw_exploration(const ExplorationDist& nu, int iteration, SimStreams& streams,
                                TransitionDataset& out) const = 0;
  virtual void draw_on_policy(const Policy& policy, int iteration, SimStreams& streams, bool harvest_all,
                              TransitionDataset& out) const = 0;

  virtual TransitionModel initial_model() const = 0;
  virtual TransitionModel fit(const TransitionDataset& data) const = 0;
  virtual OcSolution solve(const TransitionModel& model) const = 0;
  /// Test cost of a policy. The noise stream depends only on (seed, budget) so
  /// that every algorithm evaluated at the same budget sees the same noise.
  virtual CostEstimate test_cost(const Policy& policy, std::uint64_t seed, std::size_t budget) const = 0;
};

enum class FiniteModelClass { Tabular, Aliased };

struct FiniteProblemConfig {
  FiniteModelClass model_class = FiniteModelClass::Tabular;
  StatePartition partition;  // used by the aliased class
  double smoothing = 0.0;
  /// Prediction for pairs without data (per action, states x states); empty means uniform.
  std::vector<Mat> fallback;
  double oc_tol = 1e-6;
  int oc_max_iters = 100000;
  bool generative = true;
};

/// Finite MDP with a tabular or aliased tabular model class; test cost is exact J.
class FiniteProblem final : public LearningProblem {
 public:
  FiniteProblem(FiniteMdp truth, FiniteProblemConfig config);

  bool is_finite() const override { return true; }
  bool supports_set_state() const override { return config_.generative; }
  void draw_exploration(const ExplorationDist& nu, int iteration, SimStreams& streams,
                        TransitionDataset& out) const override;
  void draw_on_policy(const Policy& policy, int iteration, SimStreams& streams, bool harvest_all,
                      TransitionDataset& out) const override;
  TransitionModel initial_model() const override;
  TransitionModel fit(const TransitionDataset& data) const override;
  OcSolution solve(const TransitionModel& model) const override;
  CostEstimate test_cost(const Policy& policy, std::uint64_t seed, std::size_t budget) const override;

  const FiniteMdp& truth() const { return truth_; }
  const FiniteProblemConfig& config() const { return config_; }
  TransitionModel fit(const TransitionDataset& data, double smoothing) const;

 private:
  FiniteMdp truth_;
  FiniteProblemConfig config_;
};

enum class PlantModelClass { LinearOffset, TimeVarying };

struct PlantProblemConfig {
  PlantModelClass model_class = PlantModelClass::LinearOffset;
  Mat base_a;
  Mat base_b;
  double ridge_lambda = 1e-3;
  Mat model_noise_cov;  // empty: identity
  double abort_threshold = 5.0;
  double oc_tol = 1e-6;
  int oc_max_iters = 100000;
  int test_episodes = 20;
  bool discounted_test = false;
  bool generative = true;
};

/// Linear plant learned with linear offset models; test cost from rollouts.
class PlantProblem final : public LearningProblem {
 public:
  PlantProblem(LinearPlant truth, PlantProblemConfig config);

  bool is_finite() const override { return false; }
  bool supports_set_state() const override { return config_.generative; }
  void draw_exploration(const ExplorationDist& nu, int iteration, SimStreams& streams,
                        TransitionDataset& out) const override;
  void draw_on_policy(const Policy& policy, int iteration, SimStreams& streams, bool harvest_all,
                      TransitionDataset& out) const override;
  TransitionModel initial_model() const override;
  TransitionModel fit(const TransitionDataset& data) const override;
  OcSolution solve(const TransitionModel& model) const override;
  CostEstimate test_cost(const Policy& policy, std::uint64_t seed, std::size_t budget) const override;

  const LinearPlant& truth() const { return truth_; }
  const PlantProblemConfig& config() const { return config_; }

 private:
  void add_transitions(const std::vector<PlantTransition>& trs, int iteration, Provenance prov, bool harvest_all,
                       TransitionDataset& out) const;

  LinearPlant truth_;
  PlantProblemConfig config_;
  Mat model_noise_;
};

struct IterationRecord {
  int iteration = 0;
  std::size_t cumulative_samples = 0;
  std::size_t exploration_samples = 0;  // in this iteration's slice
  double train_kl = 0.0;   // loss of the model that collected the slice, on that slice
  double train_cls = 0.0;  // NaN for continuous models
  CostEstimate test;
  double oc_slack = 0.0;
  bool oc_converged = true;
};

struct LoopResult {
  std::string algorithm;
  std::string exploration;
  LoopOptions options;
  TransitionModel initial_model;
  Policy initial_policy;
  std::vector<Policy> policies;         // pi_1..pi_N
  std::vector<TransitionModel> models;  // T^1..T^N (pi_n solves T^n)
  std::vector<IterationRecord> records;
  TransitionDataset dataset;
  std::size_t samples_consumed = 0;

  /// Index of the lowest recorded test cost (earliest on ties).
  std::size_t best_index() const;
  /// One row per iteration under a versioned comment header.
  void write_csv(std::ostream& out) const;
};

/// m draws from nu, one fit, one solve.
LoopResult run_batch(const LearningProblem& problem, const ExplorationDist& nu, int m, std::uint64_t seed);

/// Batch learning curve: the fit after n*m draws of one nu stream, n = 1..N.
/// Entry n equals run_batch with budget n*m and the same seed.
LoopResult run_batch_curve(const LearningProblem& problem, const ExplorationDist& nu, const LoopOptions& options);

/// DAgger for model-based RL. Iteration n draws m transitions, each from nu
/// with probability beta and otherwise from D_{mu,pi_{n-1}}, aggregates,
/// refits and re-solves.
LoopResult run_dagger(const LearningProblem& problem, const ExplorationDist& nu, const LoopOptions& options);

/// Iteration 1 draws all m samples from nu_expert; later iterations draw all
/// of them from the current policy.
LoopResult run_expert_seeded(const LearningProblem& problem, const ExplorationDist& nu_expert,
                             const LoopOptions& options);

enum class SelectionMode { Best, Mixture, Last };
SelectionMode selection_mode_from_string(std::string_view s);
const char* to_string(SelectionMode m);

Policy select_policy(const LoopResult& result, SelectionMode mode);

}  // namespace agsysid
