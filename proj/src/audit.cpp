#include "agsysid/audit.hpp"

#include "agsysid/textio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace agsysid {

void BoundReport::finish() {
  slack = rhs - lhs;
  if (std::isnan(slack)) slack = std::isinf(rhs) && rhs > 0 ? kInf : -kInf;
  satisfied = !asserted || slack >= -kBoundGrace;
}

double l1_distance(const Vec& p, const Vec& q) { return (p - q).cwiseAbs().sum(); }

Flagged kl_divergence(const Vec& p, const Vec& q) {
  require(p.size() == q.size(), "kl_divergence: size mismatch");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) <= 0.0) continue;
    if (q(i) <= 0.0) return Flagged{kInf, true};
    sum += p(i) * std::log(p(i) / q(i));
  }
  return Flagged{std::max(0.0, sum), false};
}

namespace {

int argmax_lowest(const Vec& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = static_cast<int>(i);
  return best;
}

void check_shapes(const FiniteMdp& truth, const TransitionModel& model, const StateActionDist& dist) {
  require(model.is_finite() && model.num_states() == truth.num_states && model.num_actions() == truth.num_actions,
          "prediction error: model and truth dimensions differ");
  require(dist.table.rows() == truth.num_states && dist.table.cols() == truth.num_actions,
          "prediction error: distribution has wrong shape");
}

// Iterate (s, a, weight) over cells with positive mass.
template <typename Fn>
void for_cells(const StateActionDist& dist, Fn&& fn) {
  for (Eigen::Index a = 0; a < dist.table.cols(); ++a)
    for (Eigen::Index s = 0; s < dist.table.rows(); ++s)
      if (dist.table(s, a) > 0.0) fn(static_cast<int>(s), static_cast<int>(a), dist.table(s, a));
}

Vec truth_row(const FiniteMdp& truth, int s, int a) {
  return truth.transition[static_cast<std::size_t>(a)].row(s).transpose();
}

}  // namespace

double cls_loss(const Vec& p, const Vec& q) {
  require(p.size() == q.size(), "cls_loss: size mismatch");
  return 1.0 - p(argmax_lowest(q));
}

bool is_deterministic(const Vec& q) { return q.maxCoeff() == 1.0 && (q.array() == 0.0).count() == q.size() - 1; }

double l1_prediction_error(const FiniteMdp& truth, const TransitionModel& model, const StateActionDist& dist) {
  check_shapes(truth, model, dist);
  double sum = 0.0;
  for_cells(dist, [&](int s, int a, double w) { sum += w * l1_distance(truth_row(truth, s, a), model.next_distribution(s, a)); });
  return sum;
}

Flagged kl_prediction_error(const FiniteMdp& truth, const TransitionModel& model, const StateActionDist& dist) {
  check_shapes(truth, model, dist);
  Flagged out;
  for_cells(dist, [&](int s, int a, double w) {
    const Flagged kl = kl_divergence(truth_row(truth, s, a), model.next_distribution(s, a));
    if (kl.infinite) {
      out.infinite = true;
    } else {
      out.value += w * kl.value;
    }
  });
  if (out.infinite) out.value = kInf;
  return out;
}

double cls_prediction_error(const FiniteMdp& truth, const TransitionModel& model, const StateActionDist& dist) {
  check_shapes(truth, model, dist);
  double sum = 0.0;
  for_cells(dist, [&](int s, int a, double w) { sum += w * cls_loss(truth_row(truth, s, a), model.next_distribution(s, a)); });
  return sum;
}

namespace {

void close_chain(PinskerReport& r) {
  r.kl_chain_holds = r.kl.infinite || r.l1 <= std::sqrt(2.0 * r.kl.value) + 1e-12;
  r.cls_equality = !r.deterministic_model || std::abs(r.l1 - 2.0 * r.cls) <= 1e-12;
}

}  // namespace

PinskerReport check_pinsker_chain(const Vec& truth_row, const Vec& model_row) {
  PinskerReport r;
  r.l1 = l1_distance(truth_row, model_row);
  r.kl = kl_divergence(truth_row, model_row);
  r.cls = cls_loss(truth_row, model_row);
  r.deterministic_model = is_deterministic(model_row);
  close_chain(r);
  return r;
}

PinskerReport check_pinsker_chain(const FiniteMdp& truth, const TransitionModel& model, const StateActionDist& dist) {
  PinskerReport r;
  r.l1 = l1_prediction_error(truth, model, dist);
  r.kl = kl_prediction_error(truth, model, dist);
  r.cls = cls_prediction_error(truth, model, dist);
  r.deterministic_model = true;
  for_cells(dist, [&](int s, int a, double) { r.deterministic_model &= is_deterministic(model.next_distribution(s, a)); });
  close_chain(r);
  return r;
}

Flagged mismatch_coefficient(const StateActionDist& visitation, const StateActionDist& nu) {
  require(visitation.table.rows() == nu.table.rows() && visitation.table.cols() == nu.table.cols(),
          "mismatch_coefficient: shape mismatch");
  Flagged out;
  for (Eigen::Index a = 0; a < nu.table.cols(); ++a) {
    for (Eigen::Index s = 0; s < nu.table.rows(); ++s) {
      const double d = visitation.table(s, a);
      const double v = nu.table(s, a);
      if (v > 0.0) {
        out.value = std::max(out.value, d / v);
      } else if (d > 1e-14) {
        out.infinite = true;
      }
    }
  }
  if (out.infinite) out.value = kInf;
  return out;
}

Flagged mismatch_coefficient(const FiniteMdp& mdp, const Policy& policy, const StateActionDist& nu) {
  return mismatch_coefficient(exact_visitation(mdp, policy), nu);
}

double scaling_factor(const FiniteMdp& mdp) {
  const double g = mdp.discount;
  return g * mdp.cost_range() / ((1.0 - g) * (1.0 - g));
}

FiniteMdp model_as_mdp(const FiniteMdp& truth, const TransitionModel& model) {
  require(model.is_finite() && model.num_states() == truth.num_states && model.num_actions() == truth.num_actions,
          "model_as_mdp: dimension mismatch");
  FiniteMdp m = truth;
  m.transition = model.transition_tensor();
  return m;
}

Vec weighted_l1_median(const std::vector<Vec>& rows, const std::vector<double>& weights) {
  require(!rows.empty() && rows.size() == weights.size(), "weighted_l1_median: need matching rows and weights");
  const auto n = rows.front().size();
  double total = 0.0;
  for (double w : weights) total += w;
  struct Segment {
    double slope;
    Eigen::Index coord;
    double lo;
    double hi;
  };
  std::vector<Segment> segments;
  for (Eigen::Index s = 0; s < n; ++s) {
    std::vector<double> cuts{0.0, 1.0};
    for (const auto& r : rows)
      if (r(s) > 0.0 && r(s) < 1.0) cuts.push_back(r(s));
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    for (std::size_t j = 0; j + 1 < cuts.size(); ++j) {
      // Right derivative of sum_i w_i |p_is - x| on (cuts[j], cuts[j+1]).
      double above = 0.0;
      for (std::size_t i = 0; i < rows.size(); ++i)
        if (rows[i](s) > cuts[j]) above += weights[i];
      segments.push_back(Segment{total - 2.0 * above, s, cuts[j], cuts[j + 1]});
    }
  }
  std::stable_sort(segments.begin(), segments.end(), [](const Segment& x, const Segment& y) {
    if (x.slope != y.slope) return x.slope < y.slope;
    if (x.coord != y.coord) return x.coord < y.coord;
    return x.lo < y.lo;
  });
  Vec q = Vec::Zero(n);
  double remaining = 1.0;
  for (const auto& seg : segments) {
    if (remaining <= 0.0) break;
    const double take = std::min(seg.hi - seg.lo, remaining);
    q(seg.coord) += take;
    remaining -= take;
  }
  return q;
}

ModelingError modeling_error(const FiniteMdp& truth, const StatePartition& partition, const StateActionDist& dist) {
  require(static_cast<int>(partition.block_of_state.size()) == truth.num_states, "modeling_error: partition size mismatch");
  require(dist.table.rows() == truth.num_states && dist.table.cols() == truth.num_actions,
          "modeling_error: distribution has wrong shape");
  ModelingError out;
  const int blocks = partition.num_blocks();
  for (int a = 0; a < truth.num_actions; ++a) {
    for (int b = 0; b < blocks; ++b) {
      std::vector<Vec> rows;
      std::vector<double> weights;
      for (int s = 0; s < truth.num_states; ++s) {
        if (partition.block_of_state[static_cast<std::size_t>(s)] != b || dist.table(s, a) <= 0.0) continue;
        rows.push_back(truth_row(truth, s, a));
        weights.push_back(dist.table(s, a));
      }
      if (rows.empty()) continue;
      double w_total = 0.0;
      Vec mix = Vec::Zero(truth.num_states);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        w_total += weights[i];
        mix += weights[i] * rows[i];
      }
      const Vec median = weighted_l1_median(rows, weights);
      const Vec mean = mix / w_total;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        out.l1 += weights[i] * l1_distance(rows[i], median);
        out.kl += weights[i] * kl_divergence(rows[i], mean).value;
      }
      out.cls += w_total - mix.maxCoeff();
    }
  }
  return out;
}

StateActionDist explicit_distribution(const FiniteMdp& mdp, const ExplorationDist& nu) {
  if (const auto* e = std::get_if<ExplorationDist::ExplicitFinite>(&nu.kind)) return e->dist;
  if (std::holds_alternative<ExplorationDist::UniformFinite>(nu.kind))
    return StateActionDist::uniform(mdp.num_states, mdp.num_actions);
  if (const auto* x = std::get_if<ExplorationDist::ExpertPolicy>(&nu.kind)) return exact_visitation(mdp, x->policy);
  throw InputError("exploration distribution '" + nu.name + "' has no explicit finite form");
}

namespace {

// E_mu[V_model^pi_hat - V_model^pi'].
double oc_slack(const FiniteMdp& model_mdp, const Policy& pi_hat, const Policy& pi_prime) {
  return model_mdp.initial.dot(policy_value(model_mdp, pi_hat) - policy_value(model_mdp, pi_prime));
}

// coefficient * H * eps with 0 * inf = 0.
double penalty(double coefficient, double h, double eps) {
  if (eps == 0.0) return 0.0;
  return coefficient * h * eps;
}

}  // namespace

std::vector<BoundReport> audit_single_model(const FiniteMdp& truth, const TransitionModel& model, const Policy& pi_hat,
                                        const StateActionDist& nu, std::span<const Policy> comparison,
                                        const AuditOptions& options) {
  const FiniteMdp learned = model_as_mdp(truth, model);
  const double j_hat = expected_cost(truth, pi_hat);
  const Flagged c_hat = mismatch_coefficient(truth, pi_hat, nu);
  const double h = scaling_factor(truth);
  const PinskerReport prd = check_pinsker_chain(truth, model, nu);
  const double eps = options.zero_prediction_error ? 0.0 : prd.l1;

  std::vector<BoundReport> out;
  for (std::size_t i = 0; i < comparison.size(); ++i) {
    const Policy& pi_prime = comparison[i];
    BoundReport r;
    r.name = "single_model[" + std::to_string(i) + "]";
    const Flagged c_prime = mismatch_coefficient(truth, pi_prime, nu);
    const double j_prime = expected_cost(truth, pi_prime);
    const double eps_oc = oc_slack(learned, pi_hat, pi_prime);
    r.lhs = j_hat;
    r.rhs = j_prime + eps_oc + penalty(0.5 * (c_hat.value + c_prime.value), h, eps);
    r.components = {{"J_hat", j_hat},         {"J_prime", j_prime},       {"eps_oc", eps_oc},
                    {"c_hat", c_hat.value},   {"c_prime", c_prime.value}, {"H", h},
                    {"eps_prd_l1", prd.l1},   {"eps_prd_kl", prd.kl.value}, {"eps_prd_cls", prd.cls}};
    if (c_hat.infinite || c_prime.infinite) r.flags.emplace_back("nu misses visited cells");
    if (prd.kl.infinite) r.flags.emplace_back("model misses true support");
    if (options.zero_prediction_error) r.flags.emplace_back("prediction error zeroed by test hook");
    r.finish();
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<BoundReport> audit_single_model(const FiniteProblem& problem, const LoopResult& batch,
                                        const ExplorationDist& nu, std::span<const Policy> comparison,
                                        const AuditOptions& options) {
  require(!batch.models.empty(), "audit_single_model: empty result");
  const StateActionDist dist = explicit_distribution(problem.truth(), nu);
  auto reports = audit_single_model(problem.truth(), batch.models.back(), batch.policies.back(), dist, comparison, options);
  const StatePartition partition = problem.config().model_class == FiniteModelClass::Aliased
                                       ? problem.config().partition
                                       : StatePartition::identity(problem.truth().num_states);
  const ModelingError mdl = modeling_error(problem.truth(), partition, dist);
  for (auto& r : reports) {
    r.components["eps_mdl_l1"] = mdl.l1;
    r.components["eps_mdl_kl"] = mdl.kl;
    r.components["eps_mdl_cls"] = mdl.cls;
  }
  return reports;
}

DaggerAudit audit_dagger_bounds(const FiniteProblem& problem, const LoopResult& result, const ExplorationDist& nu,
                                std::span<const Policy> comparison, const AuditOptions& options) {
  const FiniteMdp& truth = problem.truth();
  const std::size_t n = result.policies.size();
  require(n >= 1 && result.models.size() == n, "audit_dagger_bounds: malformed result");
  const double beta = result.options.beta;
  const StateActionDist nu_dist = explicit_distribution(truth, nu);
  const double h = scaling_factor(truth);
  const double count = static_cast<double>(n);

  DaggerAudit audit;
  StateActionDist rho_bar{Mat::Zero(truth.num_states, truth.num_actions)};
  std::vector<FiniteMdp> learned;
  bool kl_infinite = false;
  double j_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const StateActionDist visit = exact_visitation(truth, result.policies[i]);
    const StateActionDist rho{beta * nu_dist.table + (1.0 - beta) * visit.table};
    rho_bar.table += rho.table / count;
    const PinskerReport chain = check_pinsker_chain(truth, result.models[i], rho);
    audit.eps_prd_l1 += chain.l1 / count;
    if (chain.kl.infinite) {
      kl_infinite = true;
    } else {
      audit.eps_prd_kl += chain.kl.value / count;
    }
    audit.chain_per_iteration.push_back(chain);
    learned.push_back(model_as_mdp(truth, result.models[i]));
    j_sum += expected_cost(truth, result.policies[i]);
  }
  if (kl_infinite) audit.eps_prd_kl = kInf;

  const StatePartition partition = problem.config().model_class == FiniteModelClass::Aliased
                                       ? problem.config().partition
                                       : StatePartition::identity(truth.num_states);
  const ModelingError mdl = modeling_error(truth, partition, rho_bar);
  audit.eps_mdl_l1 = mdl.l1;
  audit.eps_mdl_kl = mdl.kl;
  audit.eps_rgt_l1 = audit.eps_prd_l1 - mdl.l1;
  audit.eps_rgt_kl = kl_infinite ? kInf : audit.eps_prd_kl - mdl.kl;

  audit.averaged_chain.name = "averaged_pinsker";
  audit.averaged_chain.lhs = audit.eps_prd_l1;
  audit.averaged_chain.rhs = std::sqrt(2.0 * audit.eps_prd_kl);
  audit.averaged_chain.finish();

  const Policy pi_hat = result.policies[result.best_index()];
  const double j_hat = expected_cost(truth, pi_hat);
  const double j_bar = n == 1 ? j_sum : expected_cost(truth, Policy::mixture(result.policies));

  BoundReport order;
  order.name = "best_vs_mixture";
  order.lhs = j_hat;
  order.rhs = j_bar;
  order.components = {{"J_hat", j_hat}, {"J_bar", j_bar}, {"J_mean_of_members", j_sum / count}};
  order.finish();
  audit.reports.push_back(order);

  const double eps_l1 = options.zero_prediction_error ? 0.0 : audit.eps_prd_l1;
  const double eps_kl_split =
      options.zero_prediction_error ? 0.0 : (kl_infinite ? kInf : audit.eps_mdl_kl + audit.eps_rgt_kl);
  for (std::size_t k = 0; k < comparison.size(); ++k) {
    const Policy& pi_prime = comparison[k];
    const Flagged c_prime = mismatch_coefficient(truth, pi_prime, nu_dist);
    const double j_prime = expected_cost(truth, pi_prime);
    double eps_oc = 0.0;
    for (std::size_t i = 0; i < n; ++i) eps_oc += oc_slack(learned[i], result.policies[i], pi_prime) / count;
    // rho_i >= beta nu and >= (1 - beta) D_i; at beta = 1/2 this is c'.
    const double coeff = 0.5 * std::max(1.0 / (1.0 - beta), c_prime.value / beta);

    std::map<std::string, double> comps = {{"J_hat", j_hat},
                                           {"J_bar", j_bar},
                                           {"J_prime", j_prime},
                                           {"eps_oc_bar", eps_oc},
                                           {"c_prime", c_prime.value},
                                           {"coefficient", coeff},
                                           {"H", h},
                                           {"eps_prd_l1", audit.eps_prd_l1},
                                           {"eps_prd_kl", audit.eps_prd_kl},
                                           {"eps_mdl_l1", audit.eps_mdl_l1},
                                           {"eps_mdl_kl", audit.eps_mdl_kl},
                                           {"eps_rgt_l1", audit.eps_rgt_l1},
                                           {"eps_rgt_kl", audit.eps_rgt_kl},
                                           {"eps_mdl_cls", mdl.cls}};
    std::vector<std::string> flags;
    if (c_prime.infinite) flags.emplace_back("nu misses cells visited by the comparison policy");
    if (kl_infinite) flags.emplace_back("a model misses true support");
    if (options.zero_prediction_error) flags.emplace_back("prediction error zeroed by test hook");

    BoundReport l1;
    l1.name = "mixture_l1[" + std::to_string(k) + "]";
    l1.lhs = j_bar;
    l1.rhs = j_prime + eps_oc + penalty(coeff, h, eps_l1);
    l1.components = comps;
    l1.flags = flags;
    l1.finish();
    audit.reports.push_back(l1);

    BoundReport kl;
    kl.name = "mixture_kl_split[" + std::to_string(k) + "]";
    kl.lhs = j_bar;
    kl.rhs = j_prime + eps_oc + penalty(coeff, h, std::sqrt(2.0 * eps_kl_split));
    kl.components = std::move(comps);
    kl.flags = std::move(flags);
    kl.finish();
    audit.reports.push_back(kl);
  }

  // Sampled KL regret: the model used before slice i is the smoothed fit on slices < i.
  const double alpha = options.regret_smoothing;
  std::vector<TransitionModel> online;
  std::vector<TransitionDataset> slices;
  for (std::size_t i = 1; i <= n; ++i) {
    online.push_back(problem.fit(result.dataset.prefix(static_cast<int>(i) - 1), alpha));
    slices.push_back(result.dataset.slice(static_cast<int>(i)));
  }
  audit.kl_regret = regret_audit(online, slices, LossKind::KL,
                                 [&](const TransitionDataset& d) { return problem.fit(d, alpha); });
  return audit;
}

LastPolicyReport audit_last_policy(const FiniteMdp& truth, const LoopResult& result, const AuditOptions& options) {
  const std::size_t n = result.policies.size();
  require(n >= 1, "audit_last_policy: empty result");
  LastPolicyReport rep;
  std::vector<Mat> visits;
  for (const auto& p : result.policies) visits.push_back(exact_visitation(truth, p).table);
  double mean_distance = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    rep.distances.push_back((visits[i] - visits.back()).cwiseAbs().sum());
    mean_distance += rep.distances.back() / static_cast<double>(n);
  }
  const std::size_t start = (3 * n) / 4;
  for (std::size_t i = std::min(start, n - 1); i < n; ++i)
    for (std::size_t j = std::min(start, n - 1); j < n; ++j)
      rep.last_quartile_max = std::max(rep.last_quartile_max, (visits[i] - visits[j]).cwiseAbs().sum());
  rep.converged = rep.last_quartile_max < options.convergence_threshold;

  const double j_last = expected_cost(truth, result.policies.back());
  const double j_bar = n == 1 ? j_last : expected_cost(truth, Policy::mixture(result.policies));
  const double scale = truth.cost_range() / (1.0 - truth.discount);

  rep.bound.name = "last_policy";
  rep.bound.lhs = j_last;
  rep.bound.rhs = j_bar + 0.5 * scale * mean_distance;
  rep.bound.components = {{"J_last", j_last}, {"J_bar", j_bar}, {"mean_distance", mean_distance},
                          {"last_quartile_max", rep.last_quartile_max}};
  rep.bound.asserted = rep.converged;
  if (!rep.converged) rep.bound.flags.emplace_back("not converged; bound not asserted");
  rep.bound.finish();

  rep.loose_bound.name = "last_policy_loose";
  rep.loose_bound.lhs = j_last - j_bar;
  rep.loose_bound.rhs = scale * rep.last_quartile_max;
  rep.loose_bound.components = rep.bound.components;
  rep.loose_bound.asserted = rep.converged;
  rep.loose_bound.flags = rep.bound.flags;
  rep.loose_bound.finish();
  return rep;
}

namespace {

std::string join_components(const BoundReport& r) {
  std::string s;
  for (const auto& [k, v] : r.components) {
    if (!s.empty()) s += ';';
    s += k + "=" + format_real(v);
  }
  return s;
}

std::string join_flags(const BoundReport& r) {
  std::string s;
  for (const auto& f : r.flags) {
    if (!s.empty()) s += ';';
    s += f;
  }
  return s;
}

}  // namespace

void write_reports_csv(std::ostream& out, std::span<const BoundReport> reports) {
  out << "# agsysid-bounds v1\n";
  out << "# columns: name, lhs, rhs, slack = rhs - lhs, satisfied (0/1), asserted (0/1), flags, components (key=value)\n";
  out << "name,lhs,rhs,slack,satisfied,asserted,flags,components\n";
  for (const auto& r : reports) {
    out << r.name << ',' << format_real(r.lhs) << ',' << format_real(r.rhs) << ',' << format_real(r.slack) << ','
        << (r.satisfied ? 1 : 0) << ',' << (r.asserted ? 1 : 0) << ",\"" << join_flags(r) << "\",\""
        << join_components(r) << "\"\n";
  }
}

void write_reports_table(std::ostream& out, std::span<const BoundReport> reports) {
  char line[256];
  std::snprintf(line, sizeof(line), "%-28s %14s %14s %14s  %s\n", "bound", "lhs", "rhs", "slack", "status");
  out << line;
  for (const auto& r : reports) {
    const char* status = !r.asserted ? "not asserted" : (r.satisfied ? "ok" : "VIOLATED");
    std::snprintf(line, sizeof(line), "%-28s %14.6g %14.6g %14.6g  %s\n", r.name.c_str(), r.lhs, r.rhs, r.slack, status);
    out << line;
    for (const auto& f : r.flags) out << "    note: " << f << "\n";
  }
}

}  // namespace agsysid
