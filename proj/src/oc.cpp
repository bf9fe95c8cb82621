#include "agsysid/oc.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace agsysid {

OcSolution value_iteration(const std::vector<Mat>& transition, const Mat& cost, double discount, double tol,
                           int max_iters) {
  require(tol > 0.0, "value_iteration: tol must be positive");
  require(discount >= 0.0 && discount < 1.0, "value_iteration: discount must lie in [0,1)");
  require(!transition.empty() && static_cast<Eigen::Index>(transition.size()) == cost.cols(),
          "value_iteration: action count mismatch");
  const auto n = cost.rows();
  const auto na = cost.cols();
  for (const auto& p : transition)
    require(p.rows() == n && p.cols() == n, "value_iteration: transition matrix has wrong shape");

  Mat q(n, na);
  auto backup = [&](const Vec& v) {
    for (Eigen::Index a = 0; a < na; ++a) q.col(a) = cost.col(a) + discount * (transition[static_cast<std::size_t>(a)] * v);
  };

  OcDiagnostics diag;
  Vec v = Vec::Zero(n);
  Vec next(n);
  for (int it = 0;; ++it) {
    backup(v);
    next = q.rowwise().minCoeff();
    diag.residual = (next - v).cwiseAbs().maxCoeff();
    diag.residual_history.push_back(diag.residual);
    diag.iterations = it;
    diag.converged = diag.residual <= tol;
    if (diag.converged || it >= max_iters) break;
    v = next;
  }
  // q holds the backup of v, so the greedy policy is read off directly.
  std::vector<int> actions(static_cast<std::size_t>(n), 0);
  for (Eigen::Index s = 0; s < n; ++s) {
    int best = 0;
    for (Eigen::Index a = 1; a < na; ++a)
      if (q(s, a) < q(s, best)) best = static_cast<int>(a);
    actions[static_cast<std::size_t>(s)] = best;
  }
  diag.slack = 2.0 * diag.residual / (1.0 - discount);
  return OcSolution{Policy::deterministic(actions, static_cast<int>(na)), v, std::move(diag)};
}

OcSolution value_iteration(const TransitionModel& model, const Mat& cost, double discount, double tol, int max_iters) {
  require(model.is_finite(), "value_iteration: model must be finite");
  return value_iteration(model.transition_tensor(), cost, discount, tol, max_iters);
}

OcSolution value_iteration(const FiniteMdp& mdp, double tol, int max_iters) {
  return value_iteration(mdp.transition, mdp.cost, mdp.discount, tol, max_iters);
}

double spectral_radius(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Mat> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

OcSolution riccati_discounted(const Mat& a, const Mat& b, const Mat& q, const Mat& r, double discount, double tol,
                              int max_iters) {
  const auto d = a.rows();
  const auto k = b.cols();
  require(a.cols() == d && b.rows() == d && q.rows() == d && q.cols() == d && r.rows() == k && r.cols() == k,
          "riccati_discounted: dimension mismatch");
  require(discount > 0.0 && discount <= 1.0, "riccati_discounted: discount must lie in (0,1]");
  require(tol > 0.0, "riccati_discounted: tol must be positive");
  {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (r + r.transpose()), Eigen::EigenvaluesOnly);
    require((r - r.transpose()).cwiseAbs().maxCoeff() <= 1e-10 && es.eigenvalues().minCoeff() > 1e-10,
            "riccati_discounted: R must be symmetric positive definite");
  }

  const double g = discount;
  Mat p = q;
  Mat gain = Mat::Zero(k, d);
  OcDiagnostics diag;
  for (int it = 1;; ++it) {
    const Mat pb = p * b;
    const Mat h = r + g * b.transpose() * pb;
    gain = -g * h.ldlt().solve(pb.transpose() * a);
    // Joseph-like form keeps P symmetric PSD: Q + K^T R K + g (A+BK)^T P (A+BK).
    const Mat closed = a + b * gain;
    Mat next = q + gain.transpose() * r * gain + g * closed.transpose() * p * closed;
    next = 0.5 * (next + next.transpose());
    if (!next.allFinite() || next.cwiseAbs().maxCoeff() > 1e150)
      throw InputError("riccati_discounted: iteration diverges; (sqrt(g) A, sqrt(g) B) is not stabilizable");
    diag.residual = (next - p).cwiseAbs().maxCoeff();
    diag.iterations = it;
    p = std::move(next);
    if (diag.residual <= tol) {
      diag.converged = true;
      break;
    }
    if (it >= max_iters)
      throw ConvergenceError("riccati_discounted: no convergence within max_iters", diag.residual, it);
  }
  // Gain consistent with the final P.
  const Mat pb = p * b;
  gain = -g * (r + g * b.transpose() * pb).ldlt().solve(pb.transpose() * a);

  Eigen::SelfAdjointEigenSolver<Mat> qs(q, Eigen::EigenvaluesOnly);
  const bool q_definite = qs.eigenvalues().minCoeff() > 1e-10;
  if (q_definite && std::sqrt(g) * spectral_radius(a + b * gain) >= 1.0)
    throw InputError("riccati_discounted: closed loop is not stable; (sqrt(g) A, sqrt(g) B) is not stabilizable");
  diag.slack = diag.residual;
  QuadraticValue value{p, Vec::Zero(d), 0.0};
  return OcSolution{Policy::linear(gain), value, std::move(diag)};
}

namespace {

Vec pick(const std::vector<Vec>& seq, int t, Eigen::Index dim) {
  if (seq.empty()) return Vec::Zero(dim);
  return seq[std::min<std::size_t>(static_cast<std::size_t>(t), seq.size() - 1)];
}

}  // namespace

OcSolution tv_lqr_tracking(const TransitionModel& model, const TrackingProblem& problem) {
  require(!model.is_finite(), "tv_lqr_tracking: model must be continuous");
  const int horizon = problem.horizon;
  require(horizon >= 1, "tv_lqr_tracking: horizon must be positive");
  const auto& q = problem.cost_q;
  const auto& r = problem.cost_r;
  const auto d = q.rows();
  const auto k = r.rows();
  const Mat qf = problem.terminal_q.size() == 0 ? Mat::Zero(d, d) : problem.terminal_q;
  require(qf.rows() == d && qf.cols() == d, "tv_lqr_tracking: terminal cost has wrong shape");

  std::vector<QuadraticValue> values(static_cast<std::size_t>(horizon) + 1);
  const Vec r_end = pick(problem.reference, horizon, d);
  values.back() = QuadraticValue{qf, -qf * r_end, r_end.dot(qf * r_end)};

  std::vector<Mat> gains(static_cast<std::size_t>(horizon));
  std::vector<Vec> offsets(static_cast<std::size_t>(horizon));
  Mat a;
  Mat b;
  Vec c;
  for (int t = horizon - 1; t >= 0; --t) {
    model.dynamics_at(t, a, b, c);
    require(a.rows() == d && b.cols() == k, "tv_lqr_tracking: model and cost dimensions differ");
    const Vec ref = pick(problem.reference, t, d);
    const Vec uref = pick(problem.reference_control, t, k);
    // Shift to v = u - u*, which moves B u* into the affine term.
    const Vec cc = c + b * uref;
    const auto& nxt = values[static_cast<std::size_t>(t) + 1];
    const Mat pb = nxt.p_mat * b;
    const Mat h = r + b.transpose() * pb;
    Eigen::LDLT<Mat> ldlt(h);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all())
      throw InputError("tv_lqr_tracking: R + B^T P B is singular");
    const Mat gain = -ldlt.solve(pb.transpose() * a);
    const Vec ff = -ldlt.solve(b.transpose() * (nxt.p_mat * cc + nxt.p_vec));
    const Mat f = a + b * gain;
    const Vec g = b * ff + cc;
    const Vec pg = nxt.p_mat * g;
    QuadraticValue v;
    v.p_mat = q + gain.transpose() * r * gain + f.transpose() * nxt.p_mat * f;
    v.p_mat = 0.5 * (v.p_mat + v.p_mat.transpose());
    v.p_vec = -q * ref + gain.transpose() * (r * ff) + f.transpose() * (pg + nxt.p_vec);
    v.offset = ref.dot(q * ref) + ff.dot(r * ff) + g.dot(pg) + 2.0 * nxt.p_vec.dot(g) + nxt.offset;
    values[static_cast<std::size_t>(t)] = std::move(v);
    gains[static_cast<std::size_t>(t)] = gain;
    offsets[static_cast<std::size_t>(t)] = ff + uref;
  }
  OcDiagnostics diag;
  diag.iterations = horizon;
  diag.converged = true;
  return OcSolution{Policy::time_varying(std::move(gains), std::move(offsets)), std::move(values), std::move(diag)};
}

}  // namespace agsysid
