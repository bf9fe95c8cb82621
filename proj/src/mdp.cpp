#include "agsysid/mdp.hpp"

#include <cmath>
#include <sstream>

namespace agsysid {

void FiniteMdp::validate() const {
  require(num_states > 0 && num_actions > 0, "FiniteMdp: empty state or action space");
  require(static_cast<int>(transition.size()) == num_actions, "FiniteMdp: one transition matrix per action required");
  require(discount >= 0.0 && discount < 1.0, "FiniteMdp: discount must lie in [0,1)");
  require(cost.rows() == num_states && cost.cols() == num_actions, "FiniteMdp: cost table has wrong shape");
  require(initial.size() == num_states, "FiniteMdp: initial distribution has wrong size");
  require((initial.array() >= 0.0).all() && std::abs(initial.sum() - 1.0) <= 1e-12,
          "FiniteMdp: initial distribution must be a probability vector");
  for (int a = 0; a < num_actions; ++a) {
    const Mat& p = transition[a];
    require(p.rows() == num_states && p.cols() == num_states, "FiniteMdp: transition matrix has wrong shape");
    require((p.array() >= 0.0).all(), "FiniteMdp: negative transition probability");
    for (int s = 0; s < num_states; ++s) {
      if (std::abs(p.row(s).sum() - 1.0) > 1e-12) {
        std::ostringstream msg;
        msg << "FiniteMdp: transition row (" << s << "," << a << ") sums to " << p.row(s).sum();
        throw InputError(msg.str());
      }
    }
  }
  require(cost_min <= cost_max, "FiniteMdp: cost_min > cost_max");
  require(cost.minCoeff() >= cost_min && cost.maxCoeff() <= cost_max, "FiniteMdp: cost outside declared range");
}

void FiniteMdp::fit_cost_bounds() {
  cost_min = cost.minCoeff();
  cost_max = cost.maxCoeff();
}

int FiniteMdp::step(int state, int action, Rng& rng) const {
  return sample_index(transition[action].row(state).transpose(), rng);
}

Policy Policy::tabular(Mat probs) { return Policy{TabularPolicy{std::move(probs)}}; }

Policy Policy::deterministic(const std::vector<int>& actions, int num_actions) {
  Mat probs = Mat::Zero(static_cast<Eigen::Index>(actions.size()), num_actions);
  for (std::size_t s = 0; s < actions.size(); ++s) probs(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
  return tabular(std::move(probs));
}

Policy Policy::uniform(int num_states, int num_actions) {
  return tabular(Mat::Constant(num_states, num_actions, 1.0 / num_actions));
}

Policy Policy::linear(Mat gain, Vec offset) { return Policy{LinearFeedbackPolicy{std::move(gain), std::move(offset)}}; }

Policy Policy::linear(Mat gain) {
  Vec offset = Vec::Zero(gain.rows());
  return linear(std::move(gain), std::move(offset));
}

Policy Policy::time_varying(std::vector<Mat> gains, std::vector<Vec> offsets) {
  require(gains.size() == offsets.size() && !gains.empty(), "time-varying policy: gains/offsets mismatch");
  return Policy{TimeVaryingAffinePolicy{std::move(gains), std::move(offsets)}};
}

Policy Policy::mixture(std::vector<Policy> members) {
  require(!members.empty(), "mixture policy needs at least one member");
  return Policy{MixturePolicy{std::move(members)}};
}

const TabularPolicy& Policy::as_tabular() const {
  if (const auto* t = std::get_if<TabularPolicy>(&kind)) return *t;
  throw InputError("policy is not tabular");
}

const Policy& Policy::pick_member(Rng& rng) const {
  if (const auto* m = std::get_if<MixturePolicy>(&kind)) {
    const auto n = m->members.size();
    auto k = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
    if (k >= n) k = n - 1;
    return m->members[k].pick_member(rng);
  }
  return *this;
}

int Policy::act(int state, Rng& rng) const {
  const auto& t = as_tabular();
  return sample_index(t.probs.row(state).transpose(), rng);
}

Vec Policy::act(const Vec& x, int t) const {
  if (const auto* lin = std::get_if<LinearFeedbackPolicy>(&kind)) return lin->gain * x + lin->offset;
  if (const auto* tv = std::get_if<TimeVaryingAffinePolicy>(&kind)) {
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(std::max(t, 0)), tv->gains.size() - 1);
    return tv->gains[i] * x + tv->offsets[i];
  }
  throw InputError("policy cannot act on a continuous state without resolving mixtures first");
}

std::pair<int, int> StateActionDist::sample(Rng& rng) const {
  const Eigen::Map<const Vec> flat(table.data(), table.size());
  const int k = sample_index(flat, rng);
  // column-major storage: k = a * rows + s
  return {static_cast<int>(k % table.rows()), static_cast<int>(k / table.rows())};
}

StateActionDist StateActionDist::uniform(int num_states, int num_actions) {
  return {Mat::Constant(num_states, num_actions, 1.0 / (num_states * num_actions))};
}

namespace {

void check_tabular_shape(const FiniteMdp& mdp, const TabularPolicy& p) {
  if (p.probs.rows() != mdp.num_states || p.probs.cols() != mdp.num_actions) {
    throw InputError("tabular policy dimensions do not match the MDP");
  }
}

template <typename Fn>
auto average_over_members(const Policy& policy, Fn&& fn) -> decltype(fn(policy)) {
  const auto& members = std::get<MixturePolicy>(policy.kind).members;
  auto acc = fn(members.front());
  for (std::size_t i = 1; i < members.size(); ++i) acc += fn(members[i]);
  acc /= static_cast<double>(members.size());
  return acc;
}

}  // namespace

Mat policy_transition(const FiniteMdp& mdp, const TabularPolicy& policy) {
  check_tabular_shape(mdp, policy);
  Mat p = Mat::Zero(mdp.num_states, mdp.num_states);
  for (int a = 0; a < mdp.num_actions; ++a) p += policy.probs.col(a).asDiagonal() * mdp.transition[a];
  return p;
}

Vec policy_cost(const FiniteMdp& mdp, const TabularPolicy& policy) {
  check_tabular_shape(mdp, policy);
  return (policy.probs.array() * mdp.cost.array()).rowwise().sum();
}

StateActionDist exact_visitation(const FiniteMdp& mdp, const Policy& policy) {
  return exact_visitation(mdp, policy, mdp.initial);
}

StateActionDist exact_visitation(const FiniteMdp& mdp, const Policy& policy, const Vec& start) {
  if (start.size() != mdp.num_states) throw InputError("start distribution has wrong size");
  if (policy.is_mixture()) {
    Mat table = average_over_members(policy, [&](const Policy& p) { return exact_visitation(mdp, p, start).table; });
    return {std::move(table)};
  }
  const auto& tab = policy.as_tabular();
  const Mat p_pi = policy_transition(mdp, tab);
  const double g = mdp.discount;
  const Mat system = Mat::Identity(mdp.num_states, mdp.num_states) - g * p_pi.transpose();
  Eigen::PartialPivLU<Mat> lu(system);
  if (std::abs(lu.determinant()) < 1e-300) throw InternalError("exact_visitation: singular flow system");
  const Vec state_dist = lu.solve((1.0 - g) * start);
  return {state_dist.asDiagonal() * tab.probs};
}

double flow_residual(const FiniteMdp& mdp, const TabularPolicy& policy, const StateActionDist& dist) {
  // d(s,a) = (1-g) mu(s) pi(a|s) + g pi(a|s) sum_{s0,a0} d(s0,a0) P_{a0}(s0,s)
  Vec inflow = Vec::Zero(mdp.num_states);
  for (int a = 0; a < mdp.num_actions; ++a) inflow += mdp.transition[a].transpose() * dist.table.col(a);
  const Vec state_term = (1.0 - mdp.discount) * mdp.initial + mdp.discount * inflow;
  const Mat expected = state_term.asDiagonal() * policy.probs;
  return (expected - dist.table).cwiseAbs().maxCoeff();
}

int stopping_cap(double discount) {
  // the slack keeps 50 / 0.1 from rounding up to 501
  return static_cast<int>(std::ceil(50.0 / (1.0 - discount) - 1e-9));
}

std::vector<VisitDraw> sample_trajectory(const FiniteMdp& mdp, const Policy& policy, SimStreams& streams) {
  const Policy& member = policy.pick_member(streams.action);
  const int cap = stopping_cap(mdp.discount);
  std::vector<VisitDraw> out;
  int s = sample_index(mdp.initial, streams.init);
  for (int t = 0;; ++t) {
    const int a = member.act(s, streams.action);
    const int next = mdp.step(s, a, streams.env);
    const bool stop = uniform01(streams.stop) >= mdp.discount;
    out.push_back(VisitDraw{s, a, next, t, false});
    if (stop || t + 1 >= cap) {
      out.back().truncated = !stop;
      return out;
    }
    s = next;
  }
}

VisitDraw sample_visitation(const FiniteMdp& mdp, const Policy& policy, SimStreams& streams) {
  return sample_trajectory(mdp, policy, streams).back();
}

Vec policy_value(const FiniteMdp& mdp, const Policy& policy) {
  if (policy.is_mixture()) return average_over_members(policy, [&](const Policy& p) { return policy_value(mdp, p); });
  const auto& tab = policy.as_tabular();
  const Mat p_pi = policy_transition(mdp, tab);
  const Vec c_pi = policy_cost(mdp, tab);
  const Mat system = Mat::Identity(mdp.num_states, mdp.num_states) - mdp.discount * p_pi;
  return system.partialPivLu().solve(c_pi);
}

double expected_cost(const FiniteMdp& mdp, const Policy& policy) { return mdp.initial.dot(policy_value(mdp, policy)); }

double bellman_residual(const FiniteMdp& mdp, const TabularPolicy& policy, const Vec& value) {
  const Vec rhs = policy_cost(mdp, policy) + mdp.discount * policy_transition(mdp, policy) * value;
  return (value - rhs).cwiseAbs().maxCoeff();
}

}  // namespace agsysid
