#include "agsysid/domains.hpp"

#include "agsysid/audit.hpp"
#include "agsysid/oc.hpp"

#include <cmath>
#include <numbers>

namespace agsysid {

namespace {

GridPos or_default(GridPos p, GridPos fallback) { return p.row < 0 || p.col < 0 ? fallback : p; }

}  // namespace

FiniteProblemConfig GridworldDomain::problem_config() const {
  FiniteProblemConfig pc;
  pc.model_class = FiniteModelClass::Aliased;
  pc.partition = partition;
  if (config.nominal_fallback) pc.fallback = nominal_moves;
  return pc;
}

double GridworldDomain::trap_mass(const Policy& policy) const {
  const StateActionDist d = exact_visitation(mdp, policy);
  double mass = 0.0;
  for (int s : trap_states) mass += d.table.row(s).sum();
  return mass;
}

GridworldDomain make_aliased_gridworld(const GridworldConfig& config) {
  const int rows = config.rows;
  const int cols = config.cols;
  require(rows >= 3 && cols >= 3, "gridworld: grid must be at least 3x3");
  require(config.discount > 0.0 && config.discount < 1.0, "gridworld: discount must lie in (0,1)");
  require(config.near_start_mass > 0.0 && config.near_start_mass < 1.0, "gridworld: start mass must lie in (0,1)");
  require(config.expert_noise >= 0.0 && config.expert_noise <= 1.0, "gridworld: expert noise must lie in [0,1]");
  require(config.step_cost >= 0.0 && config.trap_cost >= 0.0, "gridworld: costs must be non-negative");

  GridworldDomain dom;
  dom.config = config;
  auto& cfg = dom.config;
  cfg.start_near_trap = or_default(cfg.start_near_trap, {0, 0});
  cfg.trap = or_default(cfg.trap, {1, 0});
  cfg.side_goal = or_default(cfg.side_goal, {0, std::min(3, cols - 1)});
  cfg.goal = or_default(cfg.goal, {rows - 1, 0});
  cfg.start_near_goal = or_default(cfg.start_near_goal, {rows - 1, 1});

  const std::vector<GridPos> special{cfg.start_near_trap, cfg.trap, cfg.side_goal, cfg.goal, cfg.start_near_goal};
  std::vector<int> ids;
  for (const auto& p : special) {
    require(p.row >= 0 && p.row < rows && p.col >= 0 && p.col < cols, "gridworld: special cell outside the grid");
    const int id = dom.state_of(p);
    for (int other : ids) require(other != id, "gridworld: special cells must be distinct");
    ids.push_back(id);
  }
  const int trap = ids[1];
  const int side_goal = ids[2];
  const int goal = ids[3];

  const int n = rows * cols;
  const int na = 4;
  FiniteMdp& mdp = dom.mdp;
  mdp.num_states = n;
  mdp.num_actions = na;
  mdp.discount = config.discount;
  mdp.transition.assign(na, Mat::Zero(n, n));
  mdp.cost = Mat::Constant(n, na, config.step_cost);
  const int dr[4] = {-1, 1, 0, 0};
  const int dc[4] = {0, 0, -1, 1};
  dom.nominal_moves.assign(na, Mat::Zero(n, n));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int s = r * cols + c;
      const bool absorbing = s == trap || s == goal || s == side_goal;
      for (int a = 0; a < na; ++a) {
        const int nr = r + dr[a];
        const int nc = c + dc[a];
        const int moved = nr >= 0 && nr < rows && nc >= 0 && nc < cols ? nr * cols + nc : s;
        dom.nominal_moves[static_cast<std::size_t>(a)](s, moved) = 1.0;
        mdp.transition[static_cast<std::size_t>(a)](s, absorbing ? s : moved) = 1.0;
      }
    }
  }
  mdp.cost.row(goal).setZero();
  mdp.cost.row(side_goal).setZero();
  mdp.cost.row(trap).setConstant(config.trap_cost);
  mdp.initial = Vec::Zero(n);
  mdp.initial(ids[0]) = config.near_start_mass;
  mdp.initial(ids[4]) = 1.0 - config.near_start_mass;
  mdp.fit_cost_bounds();
  mdp.cost_min = std::min(mdp.cost_min, 0.0);
  mdp.validate();

  // Partition: the trap joins the goal's block.
  dom.partition.block_of_state.resize(static_cast<std::size_t>(n));
  int next_block = 0;
  for (int s = 0; s < n; ++s) {
    if (config.alias_trap_with_goal && s == trap) continue;
    dom.partition.block_of_state[static_cast<std::size_t>(s)] = next_block++;
  }
  if (config.alias_trap_with_goal)
    dom.partition.block_of_state[static_cast<std::size_t>(trap)] = dom.partition.block_of_state[static_cast<std::size_t>(goal)];
  dom.trap_states = {trap};

  const OcSolution opt = value_iteration(mdp, 1e-10, 1000000);
  dom.expert = opt.policy;
  dom.expert_slack = opt.diagnostics.slack;

  const Mat soft = (1.0 - config.expert_noise) * dom.expert.as_tabular().probs +
                   Mat::Constant(n, na, config.expert_noise / na);
  dom.nu_expert = ExplorationDist{ExplorationDist::ExpertPolicy{Policy::tabular(soft)}, "expert"};
  dom.nu_uniform = ExplorationDist{ExplorationDist::UniformFinite{}, "uniform"};
  Mat avoid = Mat::Constant(n, na, 1.0);
  avoid.row(trap).setZero();
  avoid /= avoid.sum();
  dom.nu_trap_avoiding = ExplorationDist{ExplorationDist::ExplicitFinite{StateActionDist{avoid}}, "trap_avoiding"};

  dom.eps_mdl_uniform_l1 = modeling_error(mdp, dom.partition, StateActionDist::uniform(n, na)).l1;
  if (dom.eps_mdl_uniform_l1 <= 1e-12)
    throw InputError("gridworld: the aliasing partition is realizable; the domain must be agnostic");
  return dom;
}

DelayedPlantDomain make_delayed_plant(const DelayedPlantConfig& config) {
  require(config.delay == 0 || config.delay == 1, "delayed plant: delay must be 0 or 1");
  require(config.dt > 0.0 && config.horizon >= 1, "delayed plant: dt and horizon must be positive");
  DelayedPlantDomain dom;
  dom.config = config;
  const double dt = config.dt;
  const bool rotation = config.reference == PlantReference::Rotation;
  const double sigma = config.force_noise_std >= 0.0 ? config.force_noise_std : (rotation ? 0.1 : 1.0);

  Mat coupling(3, 3);
  coupling << 0.4, 0.2, 0.0,
              0.2, 0.3, 0.1,
              0.0, 0.1, 0.2;
  Mat input(3, 2);
  input << 1.0, 0.0,
           0.0, 1.0,
           0.5, -0.5;
  const double damping = 0.3;

  Mat a = Mat::Identity(6, 6);
  a.topRightCorner(3, 3) = dt * Mat::Identity(3, 3);
  a.bottomLeftCorner(3, 3) = -dt * coupling;  // restoring springs between the axes
  a.bottomRightCorner(3, 3) -= dt * damping * Mat::Identity(3, 3);
  Mat b = Mat::Zero(6, 2);
  b.bottomRows(3) = dt * input;
  Mat force = Mat::Zero(6, 3);
  force.bottomRows(3) = dt * Mat::Identity(3, 3);

  LinearPlant& plant = dom.plant;
  plant.dynamics_a = a;
  plant.dynamics_b = b;
  plant.noise_cov = sigma * sigma * force * force.transpose();
  plant.cost_q = config.q_scale * Mat::Identity(6, 6);
  plant.cost_r = config.r_scale * Mat::Identity(2, 2);
  plant.discount = config.discount;
  plant.actuation_delay = config.delay;
  plant.horizon = config.horizon;
  plant.initial_cov = config.initial_std * config.initial_std * Mat::Identity(6, 6);

  if (rotation) {
    const double rate = 2.0 * std::numbers::pi * config.rotations / (config.horizon * dt);
    for (int t = 0; t <= config.horizon; ++t) {
      const double th = rate * dt * t;
      Vec x(6);
      x << config.radius * std::cos(th), config.radius * std::sin(th), 0.0, -config.radius * rate * std::sin(th),
          config.radius * rate * std::cos(th), 0.0;
      plant.reference.push_back(x);
    }
    // Least-squares feedforward that best reproduces the reference on the true plant.
    const auto bqr = b.colPivHouseholderQr();
    for (int t = 0; t < config.horizon; ++t)
      plant.reference_control.push_back(bqr.solve(plant.reference[t + 1] - a * plant.reference[t]));
    plant.initial_mean = plant.reference.front();
  } else {
    plant.initial_mean = Vec::Zero(6);
  }
  plant.validate();

  // The learner starts from x' = x + B u: it knows the inputs but none of the state dynamics.
  dom.base_a = Mat::Identity(6, 6);
  dom.base_b = b;

  const TransitionModel truth_model{LinearOffsetModel{a, b, Mat::Zero(6, 6), Mat::Zero(6, 2), Mat::Identity(6, 6)}};
  if (rotation) {
    TrackingProblem tp{plant.cost_q, plant.cost_r, Mat::Zero(6, 6), plant.reference, plant.reference_control,
                       plant.horizon};
    dom.expert = tv_lqr_tracking(truth_model, tp).policy;
  } else {
    dom.expert = riccati_discounted(a, b, plant.cost_q, plant.cost_r, plant.discount, 1e-10, 1000000).policy;
  }

  dom.nu_t = ExplorationDist{ExplorationDist::TrajectoryNoise{config.nu_state_var * Mat::Identity(6, 6),
                                                              config.nu_action_var * Mat::Identity(2, 2)},
                             "nu_t"};
  dom.nu_e = ExplorationDist{ExplorationDist::ExpertPolicy{dom.expert}, "nu_e"};
  dom.nu_en = ExplorationDist{
      ExplorationDist::ExpertPlusNoise{dom.expert, config.nu_expert_action_var * Mat::Identity(2, 2)}, "nu_en"};

  dom.problem.model_class = rotation ? PlantModelClass::TimeVarying : PlantModelClass::LinearOffset;
  dom.problem.base_a = dom.base_a;
  dom.problem.base_b = dom.base_b;
  dom.problem.ridge_lambda = config.ridge_lambda;
  dom.problem.abort_threshold = config.abort_threshold;
  return dom;
}

namespace {

double gamma_draw(Rng& rng, double shape) {
  if (shape < 1.0) {
    // Boost: G(a) = G(a + 1) * U^(1/a).
    const double u = uniform01(rng);
    return gamma_draw(rng, shape + 1.0) * std::pow(std::max(u, 1e-300), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double x = standard_normal(rng, 1)(0);
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = uniform01(rng);
    if (std::log(std::max(u, 1e-300)) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

}  // namespace

Vec dirichlet(Rng& rng, Eigen::Index n, double concentration) {
  require(n >= 1 && concentration > 0.0, "dirichlet: need n >= 1 and positive concentration");
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = gamma_draw(rng, concentration);
  const double s = v.sum();
  if (s <= 0.0) {
    v.setZero();
    v(0) = 1.0;
    return v;
  }
  v /= s;
  // Exact normalisation so rows pass the 1e-12 validity checks.
  v(n - 1) = std::max(0.0, 1.0 - (v.sum() - v(n - 1)));
  return v;
}

FiniteMdp random_finite_mdp(int num_states, int num_actions, Rng& rng, const RandomMdpOptions& options) {
  require(num_states >= 1 && num_actions >= 1, "random_finite_mdp: empty spaces");
  FiniteMdp m;
  m.num_states = num_states;
  m.num_actions = num_actions;
  m.discount = options.discount;
  for (int a = 0; a < num_actions; ++a) {
    Mat p(num_states, num_states);
    for (int s = 0; s < num_states; ++s) p.row(s) = dirichlet(rng, num_states, options.concentration).transpose();
    m.transition.push_back(std::move(p));
  }
  m.cost.resize(num_states, num_actions);
  for (int s = 0; s < num_states; ++s)
    for (int a = 0; a < num_actions; ++a) m.cost(s, a) = uniform01(rng);
  m.initial = dirichlet(rng, num_states, 1.0);
  m.cost_min = 0.0;
  m.cost_max = 1.0;
  m.validate();
  return m;
}

Policy random_policy(int num_states, int num_actions, Rng& rng) {
  Mat probs(num_states, num_actions);
  for (int s = 0; s < num_states; ++s) probs.row(s) = dirichlet(rng, num_actions, 1.0).transpose();
  return Policy::tabular(std::move(probs));
}

StateActionDist random_distribution(int num_states, int num_actions, Rng& rng) {
  const Vec flat = dirichlet(rng, static_cast<Eigen::Index>(num_states) * num_actions, 1.0);
  return StateActionDist{Eigen::Map<const Mat>(flat.data(), num_states, num_actions)};
}

TransitionModel random_model(const FiniteMdp& truth, Rng& rng, double mix) {
  TabularModel m;
  for (int a = 0; a < truth.num_actions; ++a) {
    Mat p = truth.transition[static_cast<std::size_t>(a)];
    for (int s = 0; s < truth.num_states; ++s)
      p.row(s) = (1.0 - mix) * p.row(s) + mix * dirichlet(rng, truth.num_states, 0.5).transpose();
    m.probs.push_back(p);
    m.counts.push_back(Mat::Zero(truth.num_states, truth.num_states));
  }
  return TransitionModel{std::move(m)};
}

TightInstance make_tight_instance(double discount, double rare_mass) {
  require(discount > 0.0 && discount < 1.0, "tight instance: discount must lie in (0,1)");
  const double g = discount;
  require(rare_mass > 0.0 && rare_mass / (1.0 - g) < 1.0, "tight instance: rare mass too large");
  // States: 0 start, 1 costly absorbing, 2 free absorbing.
  // Action 0 at the start is free but leads to the costly state; the model
  // believes it leads to the free state. Action 1 costs 0.5 and is safe.
  TightInstance inst;
  FiniteMdp& m = inst.truth;
  m.num_states = 3;
  m.num_actions = 2;
  m.discount = g;
  m.transition.assign(2, Mat::Zero(3, 3));
  m.transition[0](0, 1) = 1.0;
  m.transition[1](0, 2) = 1.0;
  for (int a = 0; a < 2; ++a) {
    m.transition[static_cast<std::size_t>(a)](1, 1) = 1.0;
    m.transition[static_cast<std::size_t>(a)](2, 2) = 1.0;
  }
  m.cost.resize(3, 2);
  m.cost << 0.0, 0.5,
            1.0, 1.0,
            0.0, 0.0;
  m.initial = Vec::Zero(3);
  m.initial(0) = 1.0;
  m.cost_min = 0.0;
  m.cost_max = 1.0;
  m.validate();

  TabularModel model{m.transition, {Mat::Zero(3, 3), Mat::Zero(3, 3)}};
  model.probs[0].row(0) << 0.0, 0.0, 1.0;
  inst.model = TransitionModel{std::move(model)};
  inst.pi_hat = value_iteration(inst.model, m.cost, g, 1e-12, 1000000).policy;
  inst.pi_prime = Policy::deterministic({1, 0, 0}, 2);

  // nu covers the learned policy's cells in proportion to its visitation,
  // scaled so the wrong pair gets only rare_mass.
  const double rest = 1.0 - rare_mass / (1.0 - g);
  Mat nu = Mat::Zero(3, 2);
  nu(0, 0) = rare_mass;
  nu(1, 0) = g * rare_mass / (1.0 - g);
  nu(0, 1) = (1.0 - g) * rest;
  nu(2, 0) = g * rest;
  inst.nu = StateActionDist{nu};
  return inst;
}

}  // namespace agsysid
