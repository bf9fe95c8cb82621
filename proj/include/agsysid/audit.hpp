#pragma once

#include "agsysid/common.hpp"
#include "agsysid/mdp.hpp"
#include "agsysid/model.hpp"
#include "agsysid/sysid.hpp"

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace agsysid {

/// A value that may be an infinite sentinel (support violation, zero nu cell).
struct Flagged {
  double value = 0.0;
  bool infinite = false;
};

struct BoundReport {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  std::map<std::string, double> components;
  std::vector<std::string> flags;
  bool asserted = true;  // false when the hypothesis of the bound fails
  bool satisfied = true;
  double slack = 0.0;

  /// Sets slack = rhs - lhs and satisfied = slack >= -1e-9 (or not asserted).
  void finish();
};

inline constexpr double kBoundGrace = 1e-9;

// Distances between two next-state distributions.
double l1_distance(const Vec& p, const Vec& q);
Flagged kl_divergence(const Vec& p, const Vec& q);
/// Probability that s' ~ p differs from the argmax of q (lowest index on ties).
double cls_loss(const Vec& p, const Vec& q);
/// q puts all its mass on one next state.
bool is_deterministic(const Vec& q);

/// E_{(s,a)~dist} of the per-pair losses against the true law.
double l1_prediction_error(const FiniteMdp& truth, const TransitionModel& model, const StateActionDist& dist);
Flagged kl_prediction_error(const FiniteMdp& truth, const TransitionModel& model, const StateActionDist& dist);
double cls_prediction_error(const FiniteMdp& truth, const TransitionModel& model, const StateActionDist& dist);

struct PinskerReport {
  double l1 = 0.0;
  Flagged kl;
  double cls = 0.0;
  bool deterministic_model = false;
  bool kl_chain_holds = true;   // l1 <= sqrt(2 kl) + 1e-12
  bool cls_equality = true;     // l1 == 2 cls within 1e-12 (deterministic models only)
  bool holds() const { return kl_chain_holds && cls_equality; }
};

PinskerReport check_pinsker_chain(const Vec& truth_row, const Vec& model_row);
PinskerReport check_pinsker_chain(const FiniteMdp& truth, const TransitionModel& model, const StateActionDist& dist);

/// sup D_{mu,pi} / nu; cells with nu = 0 and positive D give an infinite sentinel.
Flagged mismatch_coefficient(const StateActionDist& visitation, const StateActionDist& nu);
Flagged mismatch_coefficient(const FiniteMdp& mdp, const Policy& policy, const StateActionDist& nu);

/// H = g C_rng / (1 - g)^2.
double scaling_factor(const FiniteMdp& mdp);

/// The truth with its transitions replaced by the model's.
FiniteMdp model_as_mdp(const FiniteMdp& truth, const TransitionModel& model);

/// Smallest expected loss of any model in the class under dist, per loss kind.
/// Partition = identity gives the unrestricted tabular class (all zero).
struct ModelingError {
  double l1 = 0.0;
  double kl = 0.0;
  double cls = 0.0;
};
ModelingError modeling_error(const FiniteMdp& truth, const StatePartition& partition, const StateActionDist& dist);

/// Minimiser over the simplex of sum_i w_i ||p_i - q||_1 (exact, piecewise-linear).
Vec weighted_l1_median(const std::vector<Vec>& rows, const std::vector<double>& weights);

/// Explicit form of a finite exploration distribution (nu_e via exact visitation).
StateActionDist explicit_distribution(const FiniteMdp& mdp, const ExplorationDist& nu);

struct AuditOptions {
  double regret_smoothing = 1e-3;      // smoothing of the refitted online models in the sampled regret audit
  double convergence_threshold = 0.1;  // last-quartile distance below which the last policy counts as converged
  bool zero_prediction_error = false;  // test hook: claim the model is exact when forming the bound
};

/// Single-model bound: J(pi_hat) <= J(pi') + eps_oc + (c_hat + c')/2 H eps_prd.
std::vector<BoundReport> audit_single_model(const FiniteMdp& truth, const TransitionModel& model, const Policy& pi_hat,
                                        const StateActionDist& nu, std::span<const Policy> comparison,
                                        const AuditOptions& options = {});
std::vector<BoundReport> audit_single_model(const FiniteProblem& problem, const LoopResult& batch,
                                        const ExplorationDist& nu, std::span<const Policy> comparison,
                                        const AuditOptions& options = {});

struct DaggerAudit {
  std::vector<BoundReport> reports;
  std::vector<PinskerReport> chain_per_iteration;
  BoundReport averaged_chain;
  RegretReport kl_regret;  // sampled slices against refitted online models
  double eps_prd_l1 = 0.0;
  double eps_prd_kl = 0.0;
  double eps_mdl_l1 = 0.0;
  double eps_mdl_kl = 0.0;
  double eps_rgt_l1 = 0.0;
  double eps_rgt_kl = 0.0;
};

/// Exact audit of a DAgger run with rho_i = beta nu + (1 - beta) D_{mu,pi_i}:
///   J(pi_hat) <= J(pi_bar) <= J(pi') + mean eps_oc + c' H mean eps_prd
/// plus the split eps_prd = eps_mdl + eps_rgt under rho_bar and its KL form.
DaggerAudit audit_dagger_bounds(const FiniteProblem& problem, const LoopResult& result, const ExplorationDist& nu,
                                std::span<const Policy> comparison, const AuditOptions& options = {});

/// Last-iterate check. distances[i] = ||D_{pi_i} - D_{pi_N}||_1. The exact bound
///   J(pi_N) <= J(pi_bar) + C_rng / (2 (1 - g)) * mean_i distances[i]
/// is asserted only when the last quartile is within the convergence threshold.
struct LastPolicyReport {
  std::vector<double> distances;
  double last_quartile_max = 0.0;
  bool converged = false;
  BoundReport bound;
  BoundReport loose_bound;  // J(pi_N) - J(pi_bar) <= C_rng / (1 - g) * last_quartile_max
};
LastPolicyReport audit_last_policy(const FiniteMdp& truth, const LoopResult& result, const AuditOptions& options = {});

void write_reports_csv(std::ostream& out, std::span<const BoundReport> reports);
void write_reports_table(std::ostream& out, std::span<const BoundReport> reports);

}  // namespace agsysid
