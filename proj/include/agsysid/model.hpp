#pragma once

#include "agsysid/common.hpp"
#include "agsysid/dataset.hpp"

#include <functional>
#include <span>
#include <variant>
#include <vector>

namespace agsysid {

/// Per-(s,a) next-state distributions estimated from counts.
struct TabularModel {
  std::vector<Mat> probs;   // per action: states x states
  std::vector<Mat> counts;  // per action: states x states (may be fractional when weighted)
};

/// States in one block share a predicted next-state distribution per action.
struct AliasedTabularModel {
  std::vector<int> block_of_state;
  int num_blocks = 0;
  std::vector<Mat> block_probs;   // per action: blocks x states
  std::vector<Mat> block_counts;  // per action: blocks x states
};

/// x' = (A + A') x + (B + B') u with fixed Gaussian noise covariance.
struct LinearOffsetModel {
  Mat base_a;
  Mat base_b;
  Mat offset_a;
  Mat offset_b;
  Mat noise_cov;
};

/// x_{t+1} = (A + A'_t) x_t + (B + B'_t) u_t + (x*_{t+1} - x*_t).
struct TimeVaryingOffsetModel {
  Mat base_a;
  Mat base_b;
  std::vector<Mat> offset_a;  // one per step t < horizon
  std::vector<Mat> offset_b;
  std::vector<Vec> reference;  // x*_t, t = 0..horizon (empty: origin)
  Mat noise_cov;

  int horizon() const { return static_cast<int>(offset_a.size()); }
  Vec shift(int t) const;
};

struct TransitionModel {
  std::variant<TabularModel, AliasedTabularModel, LinearOffsetModel, TimeVaryingOffsetModel> kind;

  bool is_finite() const;
  int num_states() const;
  int num_actions() const;
  /// Predicted next-state distribution for (s, a); finite variants only.
  Vec next_distribution(int state, int action) const;
  /// Per-action state x state matrices; finite variants only.
  std::vector<Mat> transition_tensor() const;
  /// Predicted mean next state; continuous variants only.
  Vec predict(const Vec& x, const Vec& u, int t) const;
  const Mat& noise_cov() const;
  /// Effective (A_t, B_t, c_t) for step t of a continuous model.
  void dynamics_at(int t, Mat& a, Mat& b, Vec& c) const;
};

/// Partition of states into aliasing blocks (block ids 0..num_blocks-1).
struct StatePartition {
  std::vector<int> block_of_state;
  int num_blocks() const;
  bool is_singletons() const;
  static StatePartition identity(int num_states);
};

/// Empirical estimator: (count + alpha) / (total + alpha |S|); pairs without data predict uniform,
/// or the matching row of `fallback` (per action, states x states) when one is given.
TransitionModel fit_tabular_ftl(const TransitionDataset& dataset, int num_states, int num_actions, double smoothing = 0.0,
                                const std::vector<Mat>& fallback = {});

/// Same estimator with counts pooled over each aliasing block. A block without
/// data takes the mean of its states' fallback rows.
TransitionModel fit_aliased_ftl(const TransitionDataset& dataset, const StatePartition& partition, int num_states,
                                int num_actions, double smoothing = 0.0, const std::vector<Mat>& fallback = {});

/// Same estimators on fractional counts: weights(s,a) * truth[a](s,.). With the
/// exact data distribution as weights this gives the population loss minimiser.
TransitionModel fit_tabular_weighted(const Mat& weights, const std::vector<Mat>& truth, double smoothing = 0.0);
TransitionModel fit_aliased_weighted(const Mat& weights, const std::vector<Mat>& truth, const StatePartition& partition,
                                     double smoothing = 0.0);

/// Closed-form minimiser of
///   (1/n) sum_i ||x'_i - (A + A') x_i - (B + B') u_i||^2 + (lambda / sqrt(n)) (||A'||_F^2 + ||B'||_F^2).
/// Requires lambda > 0 and n >= 1.
TransitionModel fit_linear_ridge(const TransitionDataset& dataset, const Mat& base_a, const Mat& base_b, double lambda,
                                 const Mat& noise_cov);
TransitionModel fit_linear_ridge(const TransitionDataset& dataset, const Mat& base_a, const Mat& base_b, double lambda);

/// Per-step ridge fits on the samples tagged with each step t < horizon; the
/// regression target subtracts the reference shift x*_{t+1} - x*_t. Steps
/// without samples keep zero offsets.
TransitionModel fit_time_varying(const TransitionDataset& dataset, const Mat& base_a, const Mat& base_b, double lambda,
                                 int horizon, const std::vector<Vec>& reference, const Mat& noise_cov);

struct RidgeDiagnostics {
  double squared_objective = 0.0;  // the objective minimised by fit_linear_ridge
  double raw_objective = 0.0;      // same with unsquared residual norms
  double mean_residual = 0.0;
};

RidgeDiagnostics ridge_objective(const TransitionDataset& dataset, const Mat& base_a, const Mat& base_b,
                                 const Mat& offset_a, const Mat& offset_b, double lambda);

enum class LossKind { L1, KL, Classification };
const char* to_string(LossKind k);

struct LossValue {
  double value = 0.0;
  int floored = 0;  // samples whose predicted likelihood hit the 1e-300 floor
};

inline constexpr double kLogFloor = 1e-300;

/// Mean per-sample loss on a dataset slice.
///  KL: negative log-likelihood (Gaussian NLL with the declared covariance for linear models).
///  Classification: 0-1 loss of the argmax prediction (lowest index on ties).
///  L1 is rejected: it needs the true transition law.
LossValue empirical_loss(const TransitionModel& model, const TransitionDataset& slice, LossKind kind);

using ModelFitter = std::function<TransitionModel(const TransitionDataset&)>;

struct RegretReport {
  std::vector<double> model_losses;     // L_i(T^i)
  std::vector<double> hindsight_losses; // L_i(T*) for the hindsight best on all N slices
  double average_loss = 0.0;
  double hindsight_average = 0.0;
  double average_regret = 0.0;
  std::vector<double> regret_by_prefix;  // average regret after n = 1..N iterations
};

/// models[i] must have been chosen before slices[i] was observed. The
/// hindsight comparator for each prefix is `fit` applied to the aggregate of
/// that prefix's slices.
RegretReport regret_audit(std::span<const TransitionModel> models, std::span<const TransitionDataset> slices,
                          LossKind kind, const ModelFitter& fit);

}  // namespace agsysid
