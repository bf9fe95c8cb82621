#include "agsysid/dataset.hpp"
#include "agsysid/domains.hpp"
#include "agsysid/mdp.hpp"
#include "agsysid/oc.hpp"
#include "agsysid/plant.hpp"
#include "agsysid/textio.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace agsysid;
using agsysid::testing::deterministic_mdp;
using agsysid::testing::vec;

TEST_CASE("reals round-trip through text") {
  Rng rng = make_stream(1, "textio");
  for (int i = 0; i < 1000; ++i) {
    const double v = std::ldexp(uniform01(rng) - 0.5, static_cast<int>(uniform01(rng) * 200) - 100);
    CHECK(parse_real(format_real(v)) == v);
  }
  CHECK(std::isinf(parse_real(format_real(kInf))));
  CHECK_THROWS_AS(parse_real("1.5x"), InputError);
  CHECK(split("a,b,,c", ',').size() == 4);
  CHECK(trim("  x y \t") == "x y");
}

TEST_CASE("named streams are independent") {
  Rng a1 = make_stream(9, "a");
  Rng b1 = make_stream(9, "b");
  Rng a2 = make_stream(9, "a");
  for (int i = 0; i < 100; ++i) a1();  // drawing from one stream
  Rng b2 = make_stream(9, "b");
  CHECK(b1() == b2());
  CHECK(make_stream(9, "a")() == a2());
  CHECK(make_stream(9, "a")() != make_stream(10, "a")());
  CHECK(make_stream(9, "a", 0)() != make_stream(9, "a", 1)());
}

TEST_CASE("visitation of a two-state chain") {
  // s0 -> s1 -> s1, gamma 0.5, start at s0
  const FiniteMdp m = deterministic_mdp({{1, 1}}, Mat::Zero(2, 1), vec({1, 0}), 0.5);
  const StateActionDist d = exact_visitation(m, Policy::uniform(2, 1));
  CHECK(d.table(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(d.table(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("visitation at gamma 0 is the first-step distribution") {
  Rng rng = make_stream(2, "vis0");
  RandomMdpOptions o;
  o.discount = 0.0;
  const FiniteMdp m = random_finite_mdp(4, 2, rng, o);
  const Policy pi = random_policy(4, 2, rng);
  const StateActionDist d = exact_visitation(m, pi);
  const Mat expected = m.initial.asDiagonal() * pi.as_tabular().probs;
  CHECK((d.table - expected).cwiseAbs().maxCoeff() < 1e-14);
  SimStreams st = SimStreams::from(1, "x");
  for (int i = 0; i < 50; ++i) CHECK(sample_visitation(m, pi, st).step == 0);
}

TEST_CASE("visitation properties on random instances") {
  Rng rng = make_stream(3, "visprops");
  for (int i = 0; i < 30; ++i) {
    const FiniteMdp m = random_finite_mdp(2 + i % 6, 1 + i % 3, rng);
    const Policy pi = random_policy(m.num_states, m.num_actions, rng);
    const StateActionDist d = exact_visitation(m, pi);
    CHECK(std::fabs(d.total() - 1.0) < 1e-10);
    CHECK(d.table.minCoeff() >= 0.0);
    CHECK(flow_residual(m, pi.as_tabular(), d) < 1e-10);
    const Vec v = policy_value(m, pi);
    CHECK(bellman_residual(m, pi.as_tabular(), v) < 1e-10);
    const double j_from_d = (d.table.array() * m.cost.array()).sum() / (1.0 - m.discount);
    CHECK(std::fabs(expected_cost(m, pi) - j_from_d) < 1e-9);
    const Policy other = random_policy(m.num_states, m.num_actions, rng);
    const Policy mix = Policy::mixture({pi, other});
    CHECK(std::fabs(expected_cost(m, mix) - 0.5 * (expected_cost(m, pi) + expected_cost(m, other))) < 1e-10);
  }
}

TEST_CASE("policy value closed forms") {
  const FiniteMdp one = deterministic_mdp({{0}}, Mat::Ones(1, 1), vec({1}), 0.9);
  CHECK(policy_value(one, Policy::uniform(1, 1))(0) == doctest::Approx(10.0).epsilon(1e-12));
  const FiniteMdp zero = deterministic_mdp({{1, 0}, {0, 0}}, Mat::Zero(2, 2), vec({0.5, 0.5}), 0.9);
  CHECK(policy_value(zero, Policy::uniform(2, 2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("policy value agrees with Monte-Carlo rollouts") {
  Rng rng = make_stream(4, "mc");
  RandomMdpOptions o;
  o.discount = 0.8;
  const FiniteMdp m = random_finite_mdp(5, 2, rng, o);
  const Policy pi = random_policy(5, 2, rng);
  const int episodes = 20000;
  double sum = 0.0;
  double sq = 0.0;
  SimStreams st = SimStreams::from(4, "mc");
  for (int e = 0; e < episodes; ++e) {
    int s = sample_index(m.initial, st.init);
    double total = 0.0;
    double w = 1.0;
    for (int t = 0; t < 200; ++t) {
      const int a = pi.act(s, st.action);
      total += w * m.cost(s, a);
      w *= m.discount;
      s = m.step(s, a, st.env);
    }
    sum += total;
    sq += total * total;
  }
  const double mean = sum / episodes;
  const double se = std::sqrt((sq / episodes - mean * mean) / episodes);
  CHECK(std::fabs(mean - expected_cost(m, pi)) < 3.0 * se);
}

TEST_CASE("sampling is reproducible and capped") {
  Rng rng = make_stream(5, "cap");
  const FiniteMdp m = random_finite_mdp(4, 2, rng);
  const Policy pi = random_policy(4, 2, rng);
  SimStreams a = SimStreams::from(7, "s");
  SimStreams b = SimStreams::from(7, "s");
  for (int i = 0; i < 200; ++i) {
    const VisitDraw x = sample_visitation(m, pi, a);
    const VisitDraw y = sample_visitation(m, pi, b);
    CHECK(x.state == y.state);
    CHECK(x.action == y.action);
    CHECK(x.next_state == y.next_state);
    CHECK(x.step < stopping_cap(m.discount));
  }
  CHECK(stopping_cap(0.9) == 500);
  const auto traj = sample_trajectory(m, pi, a);
  CHECK(!traj.empty());
}

TEST_CASE("finite MDP validation") {
  FiniteMdp m = deterministic_mdp({{0, 1}}, Mat::Ones(2, 1), vec({1, 0}), 0.9);
  m.transition[0](0, 0) = 0.9;
  CHECK_THROWS_AS(m.validate(), InputError);
  m.transition[0](0, 0) = 1.0;
  m.discount = 1.0;
  CHECK_THROWS_AS(m.validate(), InputError);
  CHECK_THROWS_AS(exact_visitation(deterministic_mdp({{0}}, Mat::Ones(1, 1), vec({1}), 0.5), Policy::uniform(2, 1)),
                  InputError);
}

TEST_CASE("dataset keeps iteration order and round-trips as text") {
  TransitionDataset d;
  d.add(Sample::finite(1, Provenance::Exploration, 0, 0, 1, 2));
  d.add(Sample::finite(2, Provenance::OnPolicy, 3, 2, 0, 1));
  CHECK_THROWS_AS(d.add(Sample::finite(1, Provenance::OnPolicy, 0, 0, 0, 0)), InputError);
  Sample c;
  c.iteration = 2;
  c.state = vec({0.1, 1.0 / 3.0});
  c.action = vec({-2e-17});
  c.next_state = vec({1e300, -0.0});
  TransitionDataset cont;
  cont.add(c);
  for (const TransitionDataset* ds : {&d, &cont}) {
    std::stringstream ss;
    ds->write_csv(ss);
    const TransitionDataset back = TransitionDataset::read_csv(ss);
    REQUIRE(back.size() == ds->size());
    for (std::size_t i = 0; i < ds->size(); ++i) {
      CHECK(back.samples()[i].iteration == ds->samples()[i].iteration);
      CHECK(back.samples()[i].provenance == ds->samples()[i].provenance);
      CHECK(back.samples()[i].step == ds->samples()[i].step);
      CHECK(back.samples()[i].state == ds->samples()[i].state);
      CHECK(back.samples()[i].action == ds->samples()[i].action);
      CHECK(back.samples()[i].next_state == ds->samples()[i].next_state);
    }
  }
  CHECK(d.slice(2).size() == 1);
  CHECK(d.prefix(1).size() == 1);
  CHECK(d.count(Provenance::OnPolicy) == 1);
}

TEST_CASE("plant rollouts") {
  LinearPlant p;
  p.dynamics_a = Mat::Ones(1, 1);
  p.dynamics_b = Mat::Ones(1, 1);
  p.noise_cov = Mat::Zero(1, 1);
  p.cost_q = Mat::Ones(1, 1);
  p.cost_r = Mat::Ones(1, 1);
  p.initial_mean = Vec::Ones(1);
  p.initial_cov = Mat::Zero(1, 1);
  p.horizon = 200;
  const OcSolution s = riccati_discounted(p.dynamics_a, p.dynamics_b, p.cost_q, p.cost_r, 1.0, 1e-14, 100000);
  SimStreams st = SimStreams::from(1, "r");
  const CostEstimate c = rollout_cost(p, s.policy, 3, st);
  CHECK(c.mean == doctest::Approx((1.0 + std::sqrt(5.0)) / 2.0).epsilon(1e-6));
  CHECK(c.stderr_ < 1e-12);

  p.initial_mean = Vec::Zero(1);
  CHECK(rollout_cost(p, s.policy, 2, st).mean == 0.0);

  // an unstable controller is clamped, not an error
  p.initial_mean = Vec::Ones(1);
  const CostEstimate blown = rollout_cost(p, Policy::linear(Mat::Constant(1, 1, 5.0)), 2, st, RolloutOptions{false, 1e6});
  CHECK(blown.clamped == 2);
  CHECK(blown.mean == 1e6);

  SimStreams a = SimStreams::from(2, "r");
  SimStreams b = SimStreams::from(2, "r");
  p.noise_cov = Mat::Ones(1, 1);
  CHECK(rollout_cost(p, s.policy, 5, a).mean == rollout_cost(p, s.policy, 5, b).mean);
}
