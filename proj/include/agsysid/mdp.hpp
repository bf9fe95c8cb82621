#pragma once

#include "agsysid/common.hpp"

#include <variant>
#include <vector>

namespace agsysid {

/// Explicit tabular MDP. transition[a](s, s') is the probability of s' after
/// taking a in s; cost(s, a) is known to the learner.
struct FiniteMdp {
  int num_states = 0;
  int num_actions = 0;
  std::vector<Mat> transition;
  Mat cost;
  Vec initial;
  double discount = 0.9;
  double cost_min = 0.0;
  double cost_max = 1.0;

  /// Throws InputError unless every row is a distribution (1e-12), the initial
  /// distribution is normalised, costs lie in [cost_min, cost_max] and 0 <= discount < 1.
  void validate() const;
  double cost_range() const { return cost_max - cost_min; }
  /// Sets cost_min / cost_max to the extremes of the cost table.
  void fit_cost_bounds();
  int step(int state, int action, Rng& rng) const;
};

struct Policy;

struct TabularPolicy {
  Mat probs;  // states x actions
};

/// u = gain * x + offset
struct LinearFeedbackPolicy {
  Mat gain;
  Vec offset;
};

/// u_t = gains[t] * x + offsets[t]; steps past the end reuse the last entry.
struct TimeVaryingAffinePolicy {
  std::vector<Mat> gains;
  std::vector<Vec> offsets;
};

/// Picks one member uniformly at the start of a trajectory and follows it throughout.
struct MixturePolicy {
  std::vector<Policy> members;
};

struct Policy {
  std::variant<TabularPolicy, LinearFeedbackPolicy, TimeVaryingAffinePolicy, MixturePolicy> kind;

  static Policy tabular(Mat probs);
  static Policy deterministic(const std::vector<int>& actions, int num_actions);
  static Policy uniform(int num_states, int num_actions);
  static Policy linear(Mat gain, Vec offset);
  static Policy linear(Mat gain);
  static Policy time_varying(std::vector<Mat> gains, std::vector<Vec> offsets);
  static Policy mixture(std::vector<Policy> members);

  bool is_mixture() const { return std::holds_alternative<MixturePolicy>(kind); }
  const TabularPolicy& as_tabular() const;

  /// Resolve a mixture to the member used for one trajectory (identity otherwise).
  const Policy& pick_member(Rng& rng) const;

  int act(int state, Rng& rng) const;
  Vec act(const Vec& x, int t) const;
};

/// Explicit state-action distribution (rows: states, columns: actions).
struct StateActionDist {
  Mat table;

  double total() const { return table.sum(); }
  std::pair<int, int> sample(Rng& rng) const;
  static StateActionDist uniform(int num_states, int num_actions);
};

/// Exact discounted visitation D_{mu,pi} = (1-g) sum_t g^{t-1} D^t.
/// Mixtures are handled as the average of their members' visitations.
StateActionDist exact_visitation(const FiniteMdp& mdp, const Policy& policy);
StateActionDist exact_visitation(const FiniteMdp& mdp, const Policy& policy, const Vec& start);

/// Residual of the state-action flow equation d = (1-g) mu.pi + g P_pi^T d.
double flow_residual(const FiniteMdp& mdp, const TabularPolicy& policy, const StateActionDist& dist);

/// One transition drawn at the geometric stopping step of a trajectory.
struct VisitDraw {
  int state = 0;
  int action = 0;
  int next_state = 0;
  int step = 0;
  bool truncated = false;
};

/// Step cap for geometric stopping: ceil(50 / (1 - g)).
int stopping_cap(double discount);

/// Run pi from mu, continue w.p. gamma each step and return the pair at the
/// stopping step together with its observed successor. The pair is distributed
/// as D_{mu,pi}.
VisitDraw sample_visitation(const FiniteMdp& mdp, const Policy& policy, SimStreams& streams);
/// Every transition of the same trajectory, ending with the one sample_visitation
/// returns. Harvesting all of them does not give i.i.d. draws from D_{mu,pi}.
std::vector<VisitDraw> sample_trajectory(const FiniteMdp& mdp, const Policy& policy, SimStreams& streams);

/// V_pi from (I - g P_pi) V = C_pi.
Vec policy_value(const FiniteMdp& mdp, const Policy& policy);
/// J_mu(pi) = <mu, V_pi>.
double expected_cost(const FiniteMdp& mdp, const Policy& policy);
/// Bellman residual sup_s |V(s) - C_pi(s) - g (P_pi V)(s)|.
double bellman_residual(const FiniteMdp& mdp, const TabularPolicy& policy, const Vec& value);

/// State-to-state matrix and per-state cost of a tabular policy.
Mat policy_transition(const FiniteMdp& mdp, const TabularPolicy& policy);
Vec policy_cost(const FiniteMdp& mdp, const TabularPolicy& policy);

}  // namespace agsysid
