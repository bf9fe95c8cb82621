#pragma once

#include "agsysid/common.hpp"
#include "agsysid/mdp.hpp"
#include "agsysid/model.hpp"
#include "agsysid/plant.hpp"
#include "agsysid/sysid.hpp"

#include <string>
#include <vector>

namespace agsysid {

struct GridPos {
  int row = 0;
  int col = 0;
};

/// Grid with two absorbing goals, an absorbing low-cost trap and two start
/// cells. The trap is aliased with the main goal, so a model fitted where the
/// goal is common and the trap rare predicts that the trap leads to the goal.
struct GridworldConfig {
  int rows = 4;
  int cols = 4;
  double discount = 0.95;
  double step_cost = 1.0;
  double trap_cost = 0.5;
  double near_start_mass = 0.8;  // mu of the start next to the trap
  double expert_noise = 0.1;     // probability of a uniform random action in the expert exploration policy
  // Negative coordinates select the defaults (see make_aliased_gridworld).
  GridPos start_near_trap{-1, -1};
  GridPos trap{-1, -1};
  GridPos side_goal{-1, -1};
  GridPos goal{-1, -1};
  GridPos start_near_goal{-1, -1};
  bool alias_trap_with_goal = true;
  bool nominal_fallback = true;  // unseen pairs predict nominal moves instead of uniform
};

struct GridworldDomain {
  GridworldConfig config;
  FiniteMdp mdp;
  StatePartition partition;
  Policy expert;        // optimal deterministic policy of the true MDP
  double expert_slack;  // value-iteration guarantee for the expert
  ExplorationDist nu_expert;
  ExplorationDist nu_uniform;
  ExplorationDist nu_trap_avoiding;
  std::vector<int> trap_states;
  double eps_mdl_uniform_l1 = 0.0;
  /// Nominal grid moves with no special cells; the model class's prediction for unseen pairs.
  std::vector<Mat> nominal_moves;

  int state_of(GridPos p) const { return p.row * config.cols + p.col; }
  /// Learning problem over the aliased model class.
  FiniteProblemConfig problem_config() const;
  /// Exact visitation mass of the trap under a policy.
  double trap_mass(const Policy& policy) const;
};

/// Actions: 0 up, 1 down, 2 left, 3 right; moves into walls stay put.
/// Defaults: start_near_trap (0,0), trap (1,0), side_goal (0,min(3,cols-1)),
/// goal (rows-1,0), start_near_goal (rows-1,1). Throws InputError if the grid is
/// smaller than 3x3 or the aliasing is realizable (zero modeling error).
GridworldDomain make_aliased_gridworld(const GridworldConfig& config = {});

enum class PlantReference { Hover, Rotation };

struct DelayedPlantConfig {
  int delay = 1;
  PlantReference reference = PlantReference::Hover;
  double dt = 0.05;
  int horizon = 400;
  double discount = 0.995;
  double force_noise_std = -1.0;  // negative: 1.0 for hover, 0.1 for rotation
  double q_scale = 1.0;
  double r_scale = 0.1;
  double initial_std = 0.1;
  double radius = 5.0;
  int rotations = 4;
  double nu_state_var = 0.0025;
  double nu_action_var = 0.0001;
  double nu_expert_action_var = 0.0001;
  double ridge_lambda = 1e-3;
  double abort_threshold = 5.0;
};

struct DelayedPlantDomain {
  DelayedPlantConfig config;
  LinearPlant plant;
  Mat base_a;
  Mat base_b;
  Policy expert;
  ExplorationDist nu_t;
  ExplorationDist nu_e;
  ExplorationDist nu_en;
  PlantProblemConfig problem;
};

/// Six-state (position and velocity on three coupled axes), two-input plant.
/// The expert is the optimal controller of the delay-free plant.
DelayedPlantDomain make_delayed_plant(const DelayedPlantConfig& config = {});

/// Rows drawn from a symmetric Dirichlet (Marsaglia-Tsang gamma draws).
Vec dirichlet(Rng& rng, Eigen::Index n, double concentration);

struct RandomMdpOptions {
  double discount = 0.9;
  double concentration = 0.5;  // Dirichlet parameter of transition rows
};
FiniteMdp random_finite_mdp(int num_states, int num_actions, Rng& rng, const RandomMdpOptions& options = {});
Policy random_policy(int num_states, int num_actions, Rng& rng);
StateActionDist random_distribution(int num_states, int num_actions, Rng& rng);
/// Perturbed copy of the truth: each row mixed with a random row.
TransitionModel random_model(const FiniteMdp& truth, Rng& rng, double mix);

/// A 3-state instance where the single-model bound is nearly tight: the model
/// is wrong only on one pair that nu barely covers and the learned policy uses.
struct TightInstance {
  FiniteMdp truth;
  TransitionModel model;
  Policy pi_hat;
  Policy pi_prime;
  StateActionDist nu;
};
TightInstance make_tight_instance(double discount = 0.9, double rare_mass = 1e-4);

}  // namespace agsysid
