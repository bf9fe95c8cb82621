#include "agsysid/domains.hpp"
#include "agsysid/model.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace agsysid;
using agsysid::testing::vec;

namespace {

TransitionDataset finite_data(std::initializer_list<std::array<int, 4>> rows) {
  TransitionDataset d;
  for (const auto& r : rows) d.add(Sample::finite(r[0], Provenance::Exploration, 0, r[1], r[2], r[3]));
  return d;
}

Mat randn(Rng& rng, int r, int c) { return Mat::NullaryExpr(r, c, [&] { return standard_normal(rng, 1)(0); }); }

// Independent solve of the ridge normal equations for Theta = [A' B'].
Mat ridge_oracle(const TransitionDataset& d, const Mat& a, const Mat& b, double lambda) {
  const Eigen::Index dx = a.rows();
  const Eigen::Index du = b.cols();
  const double n = static_cast<double>(d.size());
  Mat zz = Mat::Zero(dx + du, dx + du);
  Mat rz = Mat::Zero(dx, dx + du);
  for (const auto& s : d.samples()) {
    Vec z(dx + du);
    z << s.state, s.action;
    const Vec r = s.next_state - a * s.state - b * s.action;
    zz += z * z.transpose() / n;
    rz += r * z.transpose() / n;
  }
  zz += lambda / std::sqrt(n) * Mat::Identity(dx + du, dx + du);
  return zz.transpose().ldlt().solve(rz.transpose()).transpose();
}

TransitionDataset linear_data(Rng& rng, const Mat& a, const Mat& b, int n, double noise, int step = 0,
                              int iteration = 1) {
  TransitionDataset d;
  for (int i = 0; i < n; ++i) {
    Sample s;
    s.iteration = iteration;
    s.step = step;
    s.state = standard_normal(rng, a.rows());
    s.action = standard_normal(rng, b.cols());
    s.next_state = a * s.state + b * s.action + noise * standard_normal(rng, a.rows());
    d.add(s);
  }
  return d;
}

}  // namespace

TEST_CASE("tabular estimator counts") {
  const TransitionModel empty = fit_tabular_ftl(TransitionDataset{}, 3, 2);
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 2; ++a) CHECK((empty.next_distribution(s, a).array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);

  const TransitionModel m = fit_tabular_ftl(finite_data({{1, 0, 1, 0}, {1, 0, 1, 0}, {1, 0, 1, 1}}), 3, 2);
  const Vec p = m.next_distribution(0, 1);
  CHECK(p(0) == doctest::Approx(2.0 / 3.0));
  CHECK(p(1) == doctest::Approx(1.0 / 3.0));
  CHECK(p(2) == 0.0);

  const TransitionModel smooth = fit_tabular_ftl(finite_data({{1, 0, 1, 0}, {1, 0, 1, 0}, {1, 0, 1, 1}}), 3, 2, 1.0);
  CHECK(smooth.next_distribution(0, 1)(2) == doctest::Approx(1.0 / 6.0));
  CHECK(std::fabs(smooth.next_distribution(0, 1).sum() - 1.0) < 1e-12);
}

TEST_CASE("unseen pairs take the fallback row") {
  std::vector<Mat> fb{Mat::Identity(3, 3), Mat::Identity(3, 3)};
  fb[1].row(2) = vec({0.25, 0.25, 0.5}).transpose();
  const TransitionModel m = fit_tabular_ftl(finite_data({{1, 0, 0, 1}}), 3, 2, 0.0, fb);
  CHECK(m.next_distribution(0, 0)(1) == 1.0);  // data wins
  CHECK(m.next_distribution(1, 0)(1) == 1.0);
  CHECK(m.next_distribution(2, 1)(2) == 0.5);
  CHECK_THROWS_AS(fit_tabular_ftl(TransitionDataset{}, 3, 2, 0.0, {Mat::Identity(2, 2)}), InputError);

  StatePartition part{{0, 0, 1}};
  const TransitionModel al = fit_aliased_ftl(TransitionDataset{}, part, 3, 2, 0.0, fb);
  CHECK(al.next_distribution(0, 0)(0) == 0.5);  // mean of the block's fallback rows
  CHECK(al.next_distribution(1, 0) == al.next_distribution(0, 0));
}

TEST_CASE("tabular estimate minimises empirical log loss") {
  Rng rng = make_stream(1, "mle");
  TransitionDataset d;
  for (int i = 0; i < 40; ++i) {
    const int s = static_cast<int>(uniform01(rng) * 2);
    d.add(Sample::finite(1, Provenance::Exploration, 0, s, 0, uniform01(rng) < 0.3 + 0.4 * s ? 0 : 1));
  }
  const TransitionModel fit = fit_tabular_ftl(d, 2, 1);
  const double best = empirical_loss(fit, d, LossKind::KL).value;
  double grid_min = kInf;
  TabularModel probe = std::get<TabularModel>(fit.kind);
  for (int i = 1; i < 1000; ++i)
    for (int j = 1; j < 1000; ++j) {
      probe.probs[0].row(0) << i / 1000.0, 1.0 - i / 1000.0;
      probe.probs[0].row(1) << j / 1000.0, 1.0 - j / 1000.0;
      grid_min = std::min(grid_min, empirical_loss(TransitionModel{probe}, d, LossKind::KL).value);
    }
  CHECK(best <= grid_min + 1e-9);
}

TEST_CASE("empirical losses") {
  const TransitionDataset d = finite_data({{1, 0, 0, 0}, {1, 0, 0, 0}, {1, 0, 0, 0}, {1, 0, 0, 1}});
  const TransitionModel half = fit_tabular_ftl(TransitionDataset{}, 2, 1);
  CHECK(empirical_loss(half, d, LossKind::KL).value == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  const TransitionModel det = fit_tabular_ftl(finite_data({{1, 0, 0, 1}}), 2, 1);
  CHECK(empirical_loss(det, finite_data({{1, 0, 0, 1}, {1, 0, 0, 1}}), LossKind::Classification).value == 0.0);
  CHECK(empirical_loss(det, d, LossKind::Classification).value == doctest::Approx(0.75));

  const LossValue floored = empirical_loss(det, d, LossKind::KL);
  CHECK(floored.floored == 3);
  CHECK(std::isfinite(floored.value));
  CHECK_THROWS_AS(empirical_loss(det, d, LossKind::L1), InputError);
}

TEST_CASE("aliased predictions are shared within blocks") {
  Rng rng = make_stream(2, "alias");
  TransitionDataset d;
  for (int i = 0; i < 200; ++i)
    d.add(Sample::finite(1, Provenance::Exploration, 0, static_cast<int>(uniform01(rng) * 5),
                         static_cast<int>(uniform01(rng) * 2), static_cast<int>(uniform01(rng) * 5)));
  const StatePartition part{{0, 1, 0, 2, 1}};
  const TransitionModel m = fit_aliased_ftl(d, part, 5, 2);
  for (int a = 0; a < 2; ++a) {
    CHECK(m.next_distribution(0, a) == m.next_distribution(2, a));
    CHECK(m.next_distribution(1, a) == m.next_distribution(4, a));
    CHECK(std::fabs(m.next_distribution(3, a).sum() - 1.0) < 1e-12);
  }
  CHECK(!part.is_singletons());
  CHECK(StatePartition::identity(4).is_singletons());
}

TEST_CASE("ridge fit") {
  Rng rng = make_stream(3, "ridge");
  const Mat a = randn(rng, 3, 3) * 0.3;
  const Mat b = randn(rng, 3, 2);
  const Mat da = randn(rng, 3, 3) * 0.1;
  const Mat db = randn(rng, 3, 2) * 0.1;
  const TransitionDataset d = linear_data(rng, a + da, b + db, 500, 0.0);

  const TransitionModel huge_model = fit_linear_ridge(d, a, b, 1e12);
  const auto& huge = std::get<LinearOffsetModel>(huge_model.kind);
  CHECK(huge.offset_a.norm() < 1e-6);
  CHECK(huge.offset_b.norm() < 1e-6);

  const TransitionModel fit_model = fit_linear_ridge(d, a, b, 1e-3);
  const auto& fit = std::get<LinearOffsetModel>(fit_model.kind);
  const Mat oracle = ridge_oracle(d, a, b, 1e-3);
  Mat theta(3, 5);
  theta << fit.offset_a, fit.offset_b;
  CHECK((theta - oracle).norm() < 1e-3);
  CHECK((theta - oracle).norm() < 1e-9);

  // local optimality: perturbations and a central-difference gradient
  const double f0 = ridge_objective(d, a, b, fit.offset_a, fit.offset_b, 1e-3).squared_objective;
  CHECK(f0 <= ridge_objective(d, a, b, Mat::Zero(3, 3), Mat::Zero(3, 2), 1e-3).squared_objective);
  for (int i = 0; i < 10; ++i) {
    const double f = ridge_objective(d, a, b, fit.offset_a + 1e-3 * randn(rng, 3, 3),
                                     fit.offset_b + 1e-3 * randn(rng, 3, 2), 1e-3)
                         .squared_objective;
    CHECK(f0 <= f);
  }
  double grad_sq = 0.0;
  for (int k = 0; k < 15; ++k) {
    Mat pa = fit.offset_a;
    Mat pb = fit.offset_b;
    Mat ma = fit.offset_a;
    Mat mb = fit.offset_b;
    const double h = 1e-6;
    if (k < 9) {
      pa(k / 3, k % 3) += h;
      ma(k / 3, k % 3) -= h;
    } else {
      pb((k - 9) / 2, (k - 9) % 2) += h;
      mb((k - 9) / 2, (k - 9) % 2) -= h;
    }
    const double g = (ridge_objective(d, a, b, pa, pb, 1e-3).squared_objective -
                      ridge_objective(d, a, b, ma, mb, 1e-3).squared_objective) /
                     (2 * h);
    grad_sq += g * g;
  }
  CHECK(std::sqrt(grad_sq) < 1e-6);

  CHECK_THROWS_AS(fit_linear_ridge(d, a, b, 0.0), InputError);
  CHECK_THROWS_AS(fit_linear_ridge(TransitionDataset{}, a, b, 1.0), InputError);
}

TEST_CASE("ridge on a single sample improves on the base") {
  Rng rng = make_stream(4, "ridge1");
  const Mat a = randn(rng, 2, 2);
  const Mat b = randn(rng, 2, 1);
  const TransitionDataset d = linear_data(rng, a + randn(rng, 2, 2), b, 1, 0.0);
  const TransitionModel fit_model = fit_linear_ridge(d, a, b, 0.5);
  const auto& fit = std::get<LinearOffsetModel>(fit_model.kind);
  const auto fitted = ridge_objective(d, a, b, fit.offset_a, fit.offset_b, 0.5);
  const auto base = ridge_objective(d, a, b, Mat::Zero(2, 2), Mat::Zero(2, 1), 0.5);
  CHECK(fitted.mean_residual <= base.mean_residual);
}

TEST_CASE("time-varying fit") {
  Rng rng = make_stream(5, "tv");
  const Mat a = randn(rng, 2, 2) * 0.3;
  const Mat b = randn(rng, 2, 1);
  const Mat eye = Mat::Identity(2, 2);

  const TransitionDataset d0 = linear_data(rng, a + 0.1 * eye, b, 50, 0.01, 0);
  const TransitionModel tv_model = fit_time_varying(d0, a, b, 1e-3, 4, {}, eye);
  const TransitionModel flat_model = fit_linear_ridge(d0, a, b, 1e-3);
  const auto& tv = std::get<TimeVaryingOffsetModel>(tv_model.kind);
  const auto& flat = std::get<LinearOffsetModel>(flat_model.kind);
  CHECK((tv.offset_a[0] - flat.offset_a).norm() < 1e-12);
  CHECK((tv.offset_b[0] - flat.offset_b).norm() < 1e-12);
  for (int t = 1; t < 4; ++t) {
    CHECK(tv.offset_a[static_cast<std::size_t>(t)].norm() == 0.0);
    CHECK(tv.offset_b[static_cast<std::size_t>(t)].norm() == 0.0);
  }

  // constant reference: the shift term vanishes
  const std::vector<Vec> constant_ref(5, vec({0.3, -0.2}));
  const TransitionModel tvc_model = fit_time_varying(d0, a, b, 1e-3, 4, constant_ref, eye);
  const auto& tvc = std::get<TimeVaryingOffsetModel>(tvc_model.kind);
  CHECK((tvc.offset_a[0] - flat.offset_a).norm() < 1e-12);

  // two regimes
  const Mat ra = 0.2 * randn(rng, 2, 2);
  const Mat rb = -0.2 * randn(rng, 2, 2);
  const TransitionDataset first = linear_data(rng, a + ra, b, 200, 0.05, 0);
  const TransitionDataset second = linear_data(rng, a + rb, b, 200, 0.05, 1);
  TransitionDataset both = first;
  both.append(second);
  const TransitionModel two_model = fit_time_varying(both, a, b, 1e-3, 2, {}, eye);
  const auto& two = std::get<TimeVaryingOffsetModel>(two_model.kind);
  const Mat o0 = ridge_oracle(first, a, b, 1e-3);
  const Mat o1 = ridge_oracle(second, a, b, 1e-3);
  CHECK((two.offset_a[0] - o0.leftCols(2)).norm() < 1e-2);
  CHECK((two.offset_a[1] - o1.leftCols(2)).norm() < 1e-2);
  CHECK((two.offset_a[0] - ra).norm() < 0.05);
  CHECK((two.offset_a[1] - rb).norm() < 0.05);
}

TEST_CASE("regret audit") {
  Rng rng = make_stream(6, "regret");
  const FiniteMdp truth = random_finite_mdp(4, 1, rng);
  auto draw_slice = [&](int it, int m) {
    TransitionDataset s;
    for (int i = 0; i < m; ++i) {
      const int st = static_cast<int>(uniform01(rng) * 4);
      s.add(Sample::finite(it, Provenance::Exploration, 0, st, 0, truth.step(st, 0, rng)));
    }
    return s;
  };
  const ModelFitter fit = [](const TransitionDataset& d) { return fit_tabular_ftl(d, 4, 1, 1e-3); };

  std::vector<TransitionDataset> slices;
  std::vector<TransitionModel> models;
  TransitionDataset agg;
  for (int n = 1; n <= 200; ++n) {
    models.push_back(fit(agg));  // FTL: fitted before the slice is seen
    slices.push_back(draw_slice(n, 20));
    agg.append(slices.back());
  }
  const RegretReport r = regret_audit(models, slices, LossKind::KL, fit);
  CHECK(r.average_regret < 0.05);
  CHECK(r.regret_by_prefix.size() == 200);
  CHECK(r.regret_by_prefix[199] < r.regret_by_prefix[99]);
  CHECK(r.regret_by_prefix[99] < r.regret_by_prefix[49]);

  const RegretReport one = regret_audit(std::span(models).first(1), std::span(slices).first(1), LossKind::KL, fit);
  CHECK(one.average_regret >= 0.0);

  const std::vector<TransitionModel> hindsight(200, fit(agg));
  CHECK(std::fabs(regret_audit(hindsight, slices, LossKind::KL, fit).average_regret) < 1e-12);
  CHECK_THROWS_AS(regret_audit(std::span(models).first(3), std::span(slices).first(2), LossKind::KL, fit), InputError);
}

TEST_CASE("FTL on the aggregate equals the fit on the prefix") {
  Rng rng = make_stream(7, "ftl");
  TransitionDataset agg;
  for (int n = 1; n <= 5; ++n)
    for (int i = 0; i < 7; ++i)
      agg.add(Sample::finite(n, Provenance::OnPolicy, 0, static_cast<int>(uniform01(rng) * 3), 0,
                             static_cast<int>(uniform01(rng) * 3)));
  TransitionDataset manual;
  for (int n = 1; n <= 3; ++n) manual.append(agg.slice(n));
  const TransitionModel a = fit_tabular_ftl(agg.prefix(3), 3, 1);
  const TransitionModel b = fit_tabular_ftl(manual, 3, 1);
  CHECK(std::get<TabularModel>(a.kind).probs[0] == std::get<TabularModel>(b.kind).probs[0]);
}
