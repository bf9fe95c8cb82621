#include "agsysid/plant.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace agsysid {

Vec LinearPlant::target_state(int t) const {
  if (reference.empty()) return Vec::Zero(state_dim());
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(std::max(t, 0)), reference.size() - 1);
  return reference[i];
}

Vec LinearPlant::target_control(int t) const {
  if (reference_control.empty()) return Vec::Zero(control_dim());
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(std::max(t, 0)), reference_control.size() - 1);
  return reference_control[i];
}

double LinearPlant::stage_cost(const Vec& x, const Vec& u, int t) const {
  const Vec dx = x - target_state(t);
  const Vec du = u - target_control(t);
  return dx.dot(cost_q * dx) + du.dot(cost_r * du);
}

namespace {

bool symmetric(const Mat& m) { return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, m.cwiseAbs().maxCoeff()); }

double min_eigenvalue(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace

void LinearPlant::validate() const {
  const auto d = dynamics_a.rows();
  const auto k = dynamics_b.cols();
  require(d > 0 && dynamics_a.cols() == d, "LinearPlant: A must be square");
  require(dynamics_b.rows() == d && k > 0, "LinearPlant: B has wrong shape");
  require(noise_cov.rows() == d && noise_cov.cols() == d, "LinearPlant: noise covariance has wrong shape");
  require(cost_q.rows() == d && cost_q.cols() == d, "LinearPlant: Q has wrong shape");
  require(cost_r.rows() == k && cost_r.cols() == k, "LinearPlant: R has wrong shape");
  require(initial_mean.size() == d && initial_cov.rows() == d && initial_cov.cols() == d,
          "LinearPlant: initial distribution has wrong shape");
  require(symmetric(cost_q) && min_eigenvalue(cost_q) >= -1e-10, "LinearPlant: Q must be symmetric PSD");
  require(symmetric(cost_r) && min_eigenvalue(cost_r) > 1e-10, "LinearPlant: R must be symmetric PD");
  require(symmetric(noise_cov) && min_eigenvalue(noise_cov) >= -1e-10, "LinearPlant: noise covariance must be PSD");
  require(actuation_delay == 0 || actuation_delay == 1, "LinearPlant: actuation delay must be 0 or 1");
  require(horizon >= 1, "LinearPlant: horizon must be positive");
  require(discount > 0.0 && discount <= 1.0, "LinearPlant: discount must lie in (0,1]");
  for (const auto& r : reference) require(r.size() == d, "LinearPlant: reference state has wrong size");
  for (const auto& r : reference_control) require(r.size() == k, "LinearPlant: reference control has wrong size");
}

Mat covariance_factor(const Mat& cov) {
  Eigen::SelfAdjointEigenSolver<Mat> es(cov);
  const Vec root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

PlantSimulator::PlantSimulator(const LinearPlant& plant)
    : plant_(&plant),
      noise_factor_(covariance_factor(plant.noise_cov)),
      init_factor_(covariance_factor(plant.initial_cov)),
      x_(plant.initial_mean),
      pending_(Vec::Zero(plant.control_dim())) {}

void PlantSimulator::reset(Rng& init_rng) {
  x_ = plant_->initial_mean + init_factor_ * standard_normal(init_rng, plant_->state_dim());
  pending_ = plant_->target_control(0);
  t_ = 0;
}

void PlantSimulator::set_state(const Vec& x, const Vec& pending, int t) {
  x_ = x;
  pending_ = pending;
  t_ = t;
}

const Vec& PlantSimulator::step(const Vec& u, Rng& env_rng) {
  const Vec& applied = plant_->actuation_delay == 1 ? pending_ : u;
  Vec next = plant_->dynamics_a * x_ + plant_->dynamics_b * applied +
             noise_factor_ * standard_normal(env_rng, plant_->state_dim());
  pending_ = u;
  x_ = std::move(next);
  ++t_;
  return x_;
}

CostEstimate rollout_cost(const LinearPlant& plant, const Policy& policy, int num_episodes, SimStreams& streams,
                          const RolloutOptions& options) {
  require(num_episodes >= 1, "rollout_cost: need at least one episode");
  PlantSimulator sim(plant);
  CostEstimate est;
  std::vector<double> totals;
  totals.reserve(static_cast<std::size_t>(num_episodes));
  for (int e = 0; e < num_episodes; ++e) {
    const Policy& member = policy.pick_member(streams.action);
    sim.reset(streams.init);
    double total = 0.0;
    double weight = 1.0;
    bool clamped = false;
    for (int t = 0; t < plant.horizon; ++t) {
      const Vec u = member.act(sim.state(), t);
      total += weight * plant.stage_cost(sim.state(), u, t);
      if (!std::isfinite(total) || total >= options.cost_ceiling) {
        clamped = true;
        break;
      }
      if (options.discounted) weight *= plant.discount;
      sim.step(u, streams.env);
    }
    if (clamped) {
      total = options.cost_ceiling;
      ++est.clamped;
    }
    totals.push_back(total);
  }
  const double n = num_episodes;
  double sum = 0.0;
  for (double v : totals) sum += v;
  est.mean = sum / n;
  if (num_episodes > 1) {
    double ss = 0.0;
    for (double v : totals) ss += (v - est.mean) * (v - est.mean);
    est.stderr_ = std::sqrt(ss / (n - 1.0) / n);
  }
  return est;
}

std::vector<PlantTransition> sample_plant_trajectory(const LinearPlant& plant, const Policy& policy, SimStreams& streams,
                                                     const PlantSamplingOptions& options) {
  const Policy& member = policy.pick_member(streams.action);
  PlantSimulator sim(plant);
  sim.reset(streams.init);
  const int cap = std::min(plant.horizon, plant.discount < 1.0 ? stopping_cap(plant.discount) : plant.horizon);
  const auto d = plant.state_dim();
  const auto k = plant.control_dim();
  Vec deviation(d + k);
  std::vector<PlantTransition> out;
  for (int t = 0;; ++t) {
    Vec u = member.act(sim.state(), t);
    if (options.action_noise_factor) u += *options.action_noise_factor * standard_normal(streams.action, k);
    deviation << sim.state() - plant.target_state(t), u - plant.target_control(t);
    const bool abort = deviation.norm() > options.abort_threshold;
    PlantTransition tr;
    tr.state = sim.state();
    tr.action = u;
    tr.step = t;
    tr.next_state = sim.step(u, streams.env);
    const bool stop = uniform01(streams.stop) >= plant.discount;
    out.push_back(std::move(tr));
    if (stop || abort || t + 1 >= cap) {
      out.back().aborted = abort && !stop;
      out.back().truncated = !stop && !abort;
      return out;
    }
  }
}

PlantTransition sample_plant_visitation(const LinearPlant& plant, const Policy& policy, SimStreams& streams,
                                        const PlantSamplingOptions& options) {
  return std::move(sample_plant_trajectory(plant, policy, streams, options).back());
}

}  // namespace agsysid
