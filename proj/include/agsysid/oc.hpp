#pragma once

#include "agsysid/common.hpp"
#include "agsysid/mdp.hpp"
#include "agsysid/model.hpp"

#include <variant>
#include <vector>

namespace agsysid {

/// V(x) = x^T P x + 2 p^T x + s
struct QuadraticValue {
  Mat p_mat;
  Vec p_vec;
  double offset = 0.0;

  double operator()(const Vec& x) const { return x.dot(p_mat * x) + 2.0 * p_vec.dot(x) + offset; }
};

struct OcDiagnostics {
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  /// Guaranteed suboptimality of the returned policy on the solver's model.
  double slack = 0.0;
  /// Value iteration: sup-norm Bellman residual after each sweep.
  std::vector<double> residual_history;
};

struct OcSolution {
  Policy policy;
  std::variant<Vec, QuadraticValue, std::vector<QuadraticValue>> value;
  OcDiagnostics diagnostics;

  const Vec& tabular_value() const { return std::get<Vec>(value); }
  const QuadraticValue& quadratic_value() const { return std::get<QuadraticValue>(value); }
  const std::vector<QuadraticValue>& value_sequence() const { return std::get<std::vector<QuadraticValue>>(value); }
};

/// Riccati iteration hit its iteration budget; carries the last iterate.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual, int iterations)
      : std::runtime_error(what), residual(residual), iterations(iterations) {}
  double residual;
  int iterations;
};

/// Value iteration on per-action transition matrices. Stops once the sup-norm
/// Bellman residual is <= tol; the greedy policy then satisfies
/// J(greedy) <= J(pi) + 2 tol / (1 - g) for every pi. Ties go to the lowest action.
/// Reaching max_iters returns with converged = false.
OcSolution value_iteration(const std::vector<Mat>& transition, const Mat& cost, double discount, double tol,
                           int max_iters);
OcSolution value_iteration(const TransitionModel& model, const Mat& cost, double discount, double tol, int max_iters);
OcSolution value_iteration(const FiniteMdp& mdp, double tol, int max_iters);

/// Discounted infinite-horizon LQR by fixed-point iteration from P = Q:
///   P <- Q + g A^T P A - g^2 A^T P B (R + g B^T P B)^-1 B^T P A,
///   K = -g (R + g B^T P B)^-1 B^T P A,  u = K x.
/// Throws InputError for R not PD or when the iteration diverges, and
/// ConvergenceError when max_iters is reached. With Q positive definite a
/// closed loop sqrt(g)(A + BK) that is not strictly stable is reported as InputError.
OcSolution riccati_discounted(const Mat& a, const Mat& b, const Mat& q, const Mat& r, double discount, double tol,
                              int max_iters);

/// Spectral radius of a square matrix.
double spectral_radius(const Mat& m);

struct TrackingProblem {
  Mat cost_q;
  Mat cost_r;
  Mat terminal_q;                     // cost on x_H; zero matches an H-step test episode
  std::vector<Vec> reference;         // x*_t, t = 0..H (shorter sequences repeat the last entry)
  std::vector<Vec> reference_control; // u*_t; empty means zero
  int horizon = 0;
};

/// Exact backward pass for x_{t+1} = A_t x + B_t u + c_t taken from a continuous
/// model, with stage cost (x - x*_t)^T Q (x - x*_t) + (u - u*_t)^T R (u - u*_t)
/// for t < H and terminal cost (x - x*_H)^T Q_H (x - x*_H). The value sequence has
/// H + 1 entries; entry 0 is the predicted cost-to-go of the whole episode.
OcSolution tv_lqr_tracking(const TransitionModel& model, const TrackingProblem& problem);

}  // namespace agsysid
