#pragma once

#include "agsysid/common.hpp"
#include "agsysid/mdp.hpp"

#include <optional>
#include <vector>

namespace agsysid {

/// Discrete-time linear-Gaussian plant with quadratic tracking cost.
///   x_{t+1} = A x_t + B u_applied_t + w_t,   w_t ~ N(0, noise_cov)
/// With actuation_delay = 1 the applied control is the one commanded at the
/// previous step, which the observed state does not reveal.
struct LinearPlant {
  Mat dynamics_a;
  Mat dynamics_b;
  Mat noise_cov;
  Mat cost_q;
  Mat cost_r;
  Vec initial_mean;
  Mat initial_cov;
  double discount = 0.99;
  int actuation_delay = 0;
  std::vector<Vec> reference;          // x*_t for t = 0..horizon; empty means the origin
  std::vector<Vec> reference_control;  // u*_t; empty means zero
  int horizon = 400;

  int state_dim() const { return static_cast<int>(dynamics_a.rows()); }
  int control_dim() const { return static_cast<int>(dynamics_b.cols()); }
  Vec target_state(int t) const;
  Vec target_control(int t) const;
  double stage_cost(const Vec& x, const Vec& u, int t) const;
  void validate() const;
};

/// Symmetric factor L with L L^T = cov; negative eigenvalues are clipped.
Mat covariance_factor(const Mat& cov);

/// Forward simulator. Generative: any (state, pending control, time) can be set.
class PlantSimulator {
 public:
  explicit PlantSimulator(const LinearPlant& plant);

  void reset(Rng& init_rng);
  void set_state(const Vec& x, const Vec& pending, int t);
  /// Command u; returns the next observed state.
  const Vec& step(const Vec& u, Rng& env_rng);

  const Vec& state() const { return x_; }
  const Vec& pending() const { return pending_; }
  int time() const { return t_; }

 private:
  const LinearPlant* plant_;
  Mat noise_factor_;
  Mat init_factor_;
  Vec x_;
  Vec pending_;
  int t_ = 0;
};

struct CostEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  int clamped = 0;  // episodes whose cost hit the ceiling
};

struct RolloutOptions {
  bool discounted = false;   // default: undiscounted sum over the horizon
  double cost_ceiling = 1e12;
};

/// Mean and standard error of the episode cost over full-horizon test episodes
/// (no abort). Each episode draws its own mixture member.
CostEstimate rollout_cost(const LinearPlant& plant, const Policy& policy, int num_episodes, SimStreams& streams,
                          const RolloutOptions& options = {});

struct PlantTransition {
  Vec state;
  Vec action;
  Vec next_state;
  int step = 0;
  bool truncated = false;
  bool aborted = false;
};

struct PlantSamplingOptions {
  std::optional<Mat> action_noise_factor;  // additive control noise (L with L L^T = cov)
  double abort_threshold = kInf;           // stop when ||[dx; du]|| exceeds this
};

/// Geometric-stopping draw from D_{mu,pi} on the plant. The trajectory also
/// ends at the horizon and, during training, when the deviation from the
/// reference exceeds the abort threshold; the transition at that step is returned.
PlantTransition sample_plant_visitation(const LinearPlant& plant, const Policy& policy, SimStreams& streams,
                                        const PlantSamplingOptions& options = {});
/// All transitions of that trajectory (approximate, correlated draws).
std::vector<PlantTransition> sample_plant_trajectory(const LinearPlant& plant, const Policy& policy, SimStreams& streams,
                                                     const PlantSamplingOptions& options = {});

}  // namespace agsysid
