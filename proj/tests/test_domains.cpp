#include "agsysid/domains.hpp"
#include "agsysid/oc.hpp"
#include "agsysid/sysid.hpp"

#include <doctest.h>

#include <cmath>

using namespace agsysid;

TEST_CASE("default gridworld is agnostic") {
  const GridworldDomain g = make_aliased_gridworld();
  CHECK(g.mdp.num_states == 16);
  CHECK(g.eps_mdl_uniform_l1 > 0.1);
  CHECK(!g.partition.is_singletons());
  const double optimal = expected_cost(g.mdp, value_iteration(g.mdp, 1e-12, 1000000).policy);
  CHECK(expected_cost(g.mdp, g.expert) <= optimal + g.expert_slack + 1e-12);
  CHECK(g.trap_mass(g.expert) < 1e-12);
}

TEST_CASE("gridworld construction errors") {
  GridworldConfig realizable;
  realizable.alias_trap_with_goal = false;
  CHECK_THROWS_AS(make_aliased_gridworld(realizable), InputError);
  GridworldConfig small;
  small.rows = 2;
  CHECK_THROWS_AS(make_aliased_gridworld(small), InputError);
}

TEST_CASE("gridworld train/test mismatch") {
  const GridworldDomain g = make_aliased_gridworld();
  const FiniteProblem problem(g.mdp, g.problem_config());
  int batch_trapped = 0;
  int dagger_clean = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    LoopOptions o;
    o.iterations = 50;
    o.samples_per_iter = 50;
    o.seed = seed;
    const LoopResult batch = run_batch(problem, g.nu_expert, 2500, seed);
    const LoopResult dagger = run_dagger(problem, g.nu_expert, o);
    if (g.trap_mass(batch.policies.back()) > 0.1) ++batch_trapped;
    if (g.trap_mass(select_policy(dagger, SelectionMode::Best)) <= 0.01) ++dagger_clean;
  }
  CHECK(batch_trapped >= 14);
  CHECK(dagger_clean == 20);
}

TEST_CASE("delayed plant without noise or delay") {
  DelayedPlantConfig c;
  c.delay = 0;
  c.force_noise_std = 0.0;
  c.initial_std = 0.0;
  const DelayedPlantDomain d = make_delayed_plant(c);
  SimStreams st = SimStreams::from(1, "plant0");
  CHECK(rollout_cost(d.plant, d.expert, 3, st).mean < 1e-6);
  CHECK(d.plant.state_dim() == 6);
  CHECK(d.plant.control_dim() == 2);
  CHECK(d.plant.horizon == 400);
  CHECK(d.config.dt == 0.05);
  CHECK(d.problem.abort_threshold == 5.0);
}

TEST_CASE("delay raises the expert's cost") {
  DelayedPlantConfig c0;
  c0.delay = 0;
  DelayedPlantConfig c1;
  c1.delay = 1;
  const DelayedPlantDomain d0 = make_delayed_plant(c0);
  const DelayedPlantDomain d1 = make_delayed_plant(c1);
  double j0 = 0.0;
  double j1 = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SimStreams a = SimStreams::from(seed, "expert-cost");
    SimStreams b = SimStreams::from(seed, "expert-cost");
    j0 += rollout_cost(d0.plant, d0.expert, 1, a).mean / 20.0;
    j1 += rollout_cost(d1.plant, d1.expert, 1, b).mean / 20.0;
  }
  CHECK(j1 > j0);
}

TEST_CASE("trajectory-noise exploration stays near the reference") {
  const DelayedPlantDomain d = make_delayed_plant();
  const PlantProblem problem(d.plant, d.problem);
  TransitionDataset data;
  SimStreams st = SimStreams::from(4, "nu_t");
  for (int i = 0; i < 2000; ++i) problem.draw_exploration(d.nu_t, 1, st, data);
  double mean_norm = 0.0;
  for (const auto& s : data.samples())
    mean_norm += (s.state - d.plant.target_state(s.step)).norm() / static_cast<double>(data.size());
  const double sigma = std::sqrt(d.config.nu_state_var);
  CHECK(mean_norm <= 3.0 * sigma * std::sqrt(6.0));
  CHECK(mean_norm > 0.0);
}

TEST_CASE("rotation reference completes its cycles") {
  DelayedPlantConfig c;
  c.reference = PlantReference::Rotation;
  const DelayedPlantDomain d = make_delayed_plant(c);
  REQUIRE(d.plant.reference.size() == 401);
  CHECK((d.plant.reference.front() - d.plant.reference.back()).norm() < 1e-9);
  CHECK(d.problem.model_class == PlantModelClass::TimeVarying);
  // force noise 0.1 enters the velocities over one step
  CHECK(d.plant.noise_cov.diagonal().maxCoeff() == doctest::Approx(0.1 * 0.1 * d.config.dt * d.config.dt));
}

TEST_CASE("random generators") {
  Rng rng = make_stream(1, "gen");
  for (int i = 0; i < 100; ++i) {
    const Vec p = dirichlet(rng, 5, 0.3);
    CHECK(std::fabs(p.sum() - 1.0) < 1e-12);
    CHECK(p.minCoeff() >= 0.0);
  }
  const FiniteMdp m = random_finite_mdp(6, 3, rng);
  CHECK_NOTHROW(m.validate());
  CHECK(std::fabs(random_distribution(6, 3, rng).total() - 1.0) < 1e-12);
}

TEST_CASE("near-tight instance") {
  const TightInstance t = make_tight_instance();
  CHECK_NOTHROW(t.truth.validate());
  CHECK(std::fabs(t.nu.total() - 1.0) < 1e-12);
}
