#include "agsysid/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace agsysid {

Vec TimeVaryingOffsetModel::shift(int t) const {
  if (reference.empty()) return Vec::Zero(base_a.rows());
  const auto last = reference.size() - 1;
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(t), last);
  const auto j = std::min<std::size_t>(static_cast<std::size_t>(t) + 1, last);
  return reference[j] - reference[i];
}

bool TransitionModel::is_finite() const {
  return std::holds_alternative<TabularModel>(kind) || std::holds_alternative<AliasedTabularModel>(kind);
}

int TransitionModel::num_states() const {
  if (const auto* t = std::get_if<TabularModel>(&kind)) return static_cast<int>(t->probs.front().rows());
  if (const auto* al = std::get_if<AliasedTabularModel>(&kind)) return static_cast<int>(al->block_of_state.size());
  throw InputError("num_states: model is not finite");
}

int TransitionModel::num_actions() const {
  if (const auto* t = std::get_if<TabularModel>(&kind)) return static_cast<int>(t->probs.size());
  if (const auto* al = std::get_if<AliasedTabularModel>(&kind)) return static_cast<int>(al->block_probs.size());
  throw InputError("num_actions: model is not finite");
}

Vec TransitionModel::next_distribution(int state, int action) const {
  if (const auto* t = std::get_if<TabularModel>(&kind)) return t->probs[action].row(state).transpose();
  if (const auto* al = std::get_if<AliasedTabularModel>(&kind))
    return al->block_probs[action].row(al->block_of_state[state]).transpose();
  throw InputError("next_distribution: model is not finite");
}

std::vector<Mat> TransitionModel::transition_tensor() const {
  if (const auto* t = std::get_if<TabularModel>(&kind)) return t->probs;
  if (const auto* al = std::get_if<AliasedTabularModel>(&kind)) {
    const int n = static_cast<int>(al->block_of_state.size());
    std::vector<Mat> out;
    for (const auto& bp : al->block_probs) {
      Mat p(n, n);
      for (int s = 0; s < n; ++s) p.row(s) = bp.row(al->block_of_state[s]);
      out.push_back(std::move(p));
    }
    return out;
  }
  throw InputError("transition_tensor: model is not finite");
}

void TransitionModel::dynamics_at(int t, Mat& a, Mat& b, Vec& c) const {
  if (const auto* lin = std::get_if<LinearOffsetModel>(&kind)) {
    a = lin->base_a + lin->offset_a;
    b = lin->base_b + lin->offset_b;
    c = Vec::Zero(a.rows());
    return;
  }
  if (const auto* tv = std::get_if<TimeVaryingOffsetModel>(&kind)) {
    const auto i = static_cast<std::size_t>(std::clamp(t, 0, tv->horizon() - 1));
    a = tv->base_a + tv->offset_a[i];
    b = tv->base_b + tv->offset_b[i];
    c = tv->shift(t);
    return;
  }
  throw InputError("dynamics_at: model is not continuous");
}

Vec TransitionModel::predict(const Vec& x, const Vec& u, int t) const {
  Mat a;
  Mat b;
  Vec c;
  dynamics_at(t, a, b, c);
  return a * x + b * u + c;
}

const Mat& TransitionModel::noise_cov() const {
  if (const auto* lin = std::get_if<LinearOffsetModel>(&kind)) return lin->noise_cov;
  if (const auto* tv = std::get_if<TimeVaryingOffsetModel>(&kind)) return tv->noise_cov;
  throw InputError("noise_cov: model is not continuous");
}

int StatePartition::num_blocks() const {
  return block_of_state.empty() ? 0 : *std::max_element(block_of_state.begin(), block_of_state.end()) + 1;
}

bool StatePartition::is_singletons() const {
  std::vector<int> seen(static_cast<std::size_t>(num_blocks()), 0);
  for (int b : block_of_state)
    if (++seen[static_cast<std::size_t>(b)] > 1) return false;
  return true;
}

StatePartition StatePartition::identity(int num_states) {
  StatePartition p;
  p.block_of_state.resize(static_cast<std::size_t>(num_states));
  for (int s = 0; s < num_states; ++s) p.block_of_state[static_cast<std::size_t>(s)] = s;
  return p;
}

namespace {

Mat normalise_counts(const Mat& counts, double smoothing) {
  const auto n = counts.cols();
  Mat probs(counts.rows(), n);
  for (Eigen::Index r = 0; r < counts.rows(); ++r) {
    const double total = counts.row(r).sum();
    const double denom = total + smoothing * static_cast<double>(n);
    if (denom <= 0.0) {
      probs.row(r).setConstant(1.0 / static_cast<double>(n));
    } else {
      probs.row(r) = (counts.row(r).array() + smoothing) / denom;
    }
  }
  return probs;
}

void check_smoothing(double smoothing) { require(smoothing >= 0.0, "smoothing must be non-negative"); }

TransitionModel tabular_from_counts(std::vector<Mat> counts, double smoothing) {
  TabularModel m;
  for (const auto& c : counts) m.probs.push_back(normalise_counts(c, smoothing));
  m.counts = std::move(counts);
  return TransitionModel{std::move(m)};
}

TransitionModel aliased_from_counts(std::vector<Mat> block_counts, const StatePartition& partition, double smoothing) {
  AliasedTabularModel m;
  m.block_of_state = partition.block_of_state;
  m.num_blocks = partition.num_blocks();
  for (const auto& c : block_counts) m.block_probs.push_back(normalise_counts(c, smoothing));
  m.block_counts = std::move(block_counts);
  return TransitionModel{std::move(m)};
}

void check_finite_sample(const Sample& s, int num_states, int num_actions) {
  if (s.s() < 0 || s.s() >= num_states || s.next() < 0 || s.next() >= num_states || s.a() < 0 || s.a() >= num_actions) {
    throw InputError("finite sample index out of range");
  }
}

}  // namespace

namespace {

// Rows without data take the fallback row (the mean over the block's states for aliased models).
void apply_fallback(std::vector<Mat>& probs, const std::vector<Mat>& counts, const std::vector<Mat>& fallback,
                    const std::vector<int>& block_of_state) {
  if (fallback.empty()) return;
  require(fallback.size() == probs.size(), "fallback model has the wrong number of actions");
  for (std::size_t a = 0; a < probs.size(); ++a) {
    require(fallback[a].cols() == probs[a].cols() && fallback[a].rows() == static_cast<Eigen::Index>(block_of_state.size()),
            "fallback model has the wrong shape");
    for (Eigen::Index r = 0; r < probs[a].rows(); ++r) {
      if (counts[a].row(r).sum() > 0.0) continue;
      Vec row = Vec::Zero(probs[a].cols());
      int members = 0;
      for (std::size_t s = 0; s < block_of_state.size(); ++s) {
        if (block_of_state[s] != r) continue;
        row += fallback[a].row(static_cast<Eigen::Index>(s)).transpose();
        ++members;
      }
      if (members > 0) probs[a].row(r) = row.transpose() / members;
    }
  }
}

}  // namespace

TransitionModel fit_tabular_ftl(const TransitionDataset& dataset, int num_states, int num_actions, double smoothing,
                                const std::vector<Mat>& fallback) {
  check_smoothing(smoothing);
  std::vector<Mat> counts(static_cast<std::size_t>(num_actions), Mat::Zero(num_states, num_states));
  for (const auto& s : dataset.samples()) {
    check_finite_sample(s, num_states, num_actions);
    counts[static_cast<std::size_t>(s.a())](s.s(), s.next()) += 1.0;
  }
  TransitionModel model = tabular_from_counts(std::move(counts), smoothing);
  auto& tab = std::get<TabularModel>(model.kind);
  apply_fallback(tab.probs, tab.counts, fallback, StatePartition::identity(num_states).block_of_state);
  return model;
}

TransitionModel fit_aliased_ftl(const TransitionDataset& dataset, const StatePartition& partition, int num_states,
                                int num_actions, double smoothing, const std::vector<Mat>& fallback) {
  check_smoothing(smoothing);
  require(static_cast<int>(partition.block_of_state.size()) == num_states, "partition size must equal the state count");
  const int blocks = partition.num_blocks();
  std::vector<Mat> counts(static_cast<std::size_t>(num_actions), Mat::Zero(blocks, num_states));
  for (const auto& s : dataset.samples()) {
    check_finite_sample(s, num_states, num_actions);
    counts[static_cast<std::size_t>(s.a())](partition.block_of_state[static_cast<std::size_t>(s.s())], s.next()) += 1.0;
  }
  TransitionModel model = aliased_from_counts(std::move(counts), partition, smoothing);
  auto& al = std::get<AliasedTabularModel>(model.kind);
  apply_fallback(al.block_probs, al.block_counts, fallback, partition.block_of_state);
  return model;
}

TransitionModel fit_tabular_weighted(const Mat& weights, const std::vector<Mat>& truth, double smoothing) {
  check_smoothing(smoothing);
  require(static_cast<Eigen::Index>(truth.size()) == weights.cols(), "weights/truth action mismatch");
  std::vector<Mat> counts;
  for (Eigen::Index a = 0; a < weights.cols(); ++a) counts.push_back(weights.col(a).asDiagonal() * truth[static_cast<std::size_t>(a)]);
  return tabular_from_counts(std::move(counts), smoothing);
}

TransitionModel fit_aliased_weighted(const Mat& weights, const std::vector<Mat>& truth, const StatePartition& partition,
                                     double smoothing) {
  check_smoothing(smoothing);
  require(static_cast<Eigen::Index>(truth.size()) == weights.cols(), "weights/truth action mismatch");
  const auto n = weights.rows();
  require(static_cast<Eigen::Index>(partition.block_of_state.size()) == n, "partition size must equal the state count");
  std::vector<Mat> counts;
  for (Eigen::Index a = 0; a < weights.cols(); ++a) {
    Mat c = Mat::Zero(partition.num_blocks(), n);
    for (Eigen::Index s = 0; s < n; ++s)
      c.row(partition.block_of_state[static_cast<std::size_t>(s)]) += weights(s, a) * truth[static_cast<std::size_t>(a)].row(s);
    counts.push_back(std::move(c));
  }
  return aliased_from_counts(std::move(counts), partition, smoothing);
}

namespace {

struct NormalEquations {
  Mat zz;  // sum z z^T
  Mat yz;  // sum y z^T
  int n = 0;
};

// Accumulated in dataset order so that the result is reproducible bit for bit.
template <typename Target>
NormalEquations accumulate(const TransitionDataset& dataset, const Mat& base_a, const Mat& base_b, Target&& target_shift,
                           int only_step) {
  const auto d = base_a.rows();
  const auto k = base_b.cols();
  NormalEquations ne{Mat::Zero(d + k, d + k), Mat::Zero(d, d + k), 0};
  Vec z(d + k);
  for (const auto& s : dataset.samples()) {
    if (only_step >= 0 && s.step != only_step) continue;
    if (s.state.size() != d || s.action.size() != k) throw InputError("ridge fit: sample dimensions do not match base model");
    z << s.state, s.action;
    const Vec y = s.next_state - target_shift(s.step) - base_a * s.state - base_b * s.action;
    ne.zz.noalias() += z * z.transpose();
    ne.yz.noalias() += y * z.transpose();
    ++ne.n;
  }
  return ne;
}

Mat solve_ridge(const NormalEquations& ne, double lambda) {
  // d/dTheta: -(2/n)(YZ^T - Theta ZZ^T) + (2 lambda / sqrt n) Theta = 0
  const auto p = ne.zz.rows();
  const double n = ne.n;
  const Mat system = ne.zz + lambda * std::sqrt(n) * Mat::Identity(p, p);
  return system.ldlt().solve(ne.yz.transpose()).transpose();
}

}  // namespace

TransitionModel fit_linear_ridge(const TransitionDataset& dataset, const Mat& base_a, const Mat& base_b, double lambda,
                                 const Mat& noise_cov) {
  require(lambda > 0.0, "fit_linear_ridge: lambda must be positive");
  require(!dataset.empty(), "fit_linear_ridge: need at least one sample");
  const auto d = base_a.rows();
  const auto ne = accumulate(dataset, base_a, base_b, [&](int) { return Vec::Zero(d); }, -1);
  const Mat theta = solve_ridge(ne, lambda);
  LinearOffsetModel m{base_a, base_b, theta.leftCols(d), theta.rightCols(base_b.cols()), noise_cov};
  return TransitionModel{std::move(m)};
}

TransitionModel fit_linear_ridge(const TransitionDataset& dataset, const Mat& base_a, const Mat& base_b, double lambda) {
  return fit_linear_ridge(dataset, base_a, base_b, lambda, Mat::Identity(base_a.rows(), base_a.rows()));
}

TransitionModel fit_time_varying(const TransitionDataset& dataset, const Mat& base_a, const Mat& base_b, double lambda,
                                 int horizon, const std::vector<Vec>& reference, const Mat& noise_cov) {
  require(lambda > 0.0, "fit_time_varying: lambda must be positive");
  require(horizon >= 1, "fit_time_varying: horizon must be positive");
  const auto d = base_a.rows();
  const auto k = base_b.cols();
  TimeVaryingOffsetModel m;
  m.base_a = base_a;
  m.base_b = base_b;
  m.reference = reference;
  m.noise_cov = noise_cov;
  m.offset_a.assign(static_cast<std::size_t>(horizon), Mat::Zero(d, d));
  m.offset_b.assign(static_cast<std::size_t>(horizon), Mat::Zero(d, k));
  for (const auto& s : dataset.samples())
    require(s.step >= 0 && s.step < horizon, "fit_time_varying: sample step outside the horizon");
  for (int t = 0; t < horizon; ++t) {
    const auto ne = accumulate(dataset, base_a, base_b, [&](int step) { return m.shift(step); }, t);
    if (ne.n == 0) continue;
    const Mat theta = solve_ridge(ne, lambda);
    m.offset_a[static_cast<std::size_t>(t)] = theta.leftCols(d);
    m.offset_b[static_cast<std::size_t>(t)] = theta.rightCols(k);
  }
  return TransitionModel{std::move(m)};
}

RidgeDiagnostics ridge_objective(const TransitionDataset& dataset, const Mat& base_a, const Mat& base_b,
                                 const Mat& offset_a, const Mat& offset_b, double lambda) {
  require(!dataset.empty(), "ridge_objective: empty dataset");
  RidgeDiagnostics out;
  const double n = static_cast<double>(dataset.size());
  const Mat a = base_a + offset_a;
  const Mat b = base_b + offset_b;
  double sq = 0.0;
  double raw = 0.0;
  for (const auto& s : dataset.samples()) {
    const Vec r = s.next_state - a * s.state - b * s.action;
    sq += r.squaredNorm();
    raw += r.norm();
  }
  const double reg = lambda / std::sqrt(n) * (offset_a.squaredNorm() + offset_b.squaredNorm());
  out.squared_objective = sq / n + reg;
  out.raw_objective = raw / n + reg;
  out.mean_residual = raw / n;
  return out;
}

const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::L1:
      return "l1";
    case LossKind::KL:
      return "kl";
    case LossKind::Classification:
      return "cls";
  }
  return "?";
}

namespace {

int argmax_lowest(const Vec& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = static_cast<int>(i);
  return best;
}

}  // namespace

LossValue empirical_loss(const TransitionModel& model, const TransitionDataset& slice, LossKind kind) {
  if (kind == LossKind::L1) throw InputError("empirical_loss: L1 loss cannot be evaluated from samples");
  LossValue out;
  if (slice.empty()) return out;
  double total = 0.0;
  if (model.is_finite()) {
    for (const auto& s : slice.samples()) {
      const Vec dist = model.next_distribution(s.s(), s.a());
      if (kind == LossKind::KL) {
        double p = dist(s.next());
        if (p < kLogFloor) {
          p = kLogFloor;
          ++out.floored;
        }
        total -= std::log(p);
      } else {
        total += argmax_lowest(dist) != s.next() ? 1.0 : 0.0;
      }
    }
  } else {
    if (kind == LossKind::Classification) throw InputError("empirical_loss: classification loss needs a finite model");
    const Mat& cov = model.noise_cov();
    const auto d = cov.rows();
    Eigen::LDLT<Mat> ldlt(cov);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all())
      throw InputError("empirical_loss: noise covariance must be positive definite");
    const double log_det = ldlt.vectorD().array().log().sum();
    const double constant = 0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + log_det);
    for (const auto& s : slice.samples()) {
      const Vec r = s.next_state - model.predict(s.state, s.action, s.step);
      total += constant + 0.5 * r.dot(ldlt.solve(r));
    }
  }
  out.value = total / static_cast<double>(slice.size());
  return out;
}

RegretReport regret_audit(std::span<const TransitionModel> models, std::span<const TransitionDataset> slices,
                          LossKind kind, const ModelFitter& fit) {
  require(models.size() == slices.size(), "regret_audit: model and slice sequences differ in length");
  require(!models.empty(), "regret_audit: empty sequence");
  const std::size_t n = models.size();
  RegretReport rep;
  rep.model_losses.reserve(n);
  for (std::size_t i = 0; i < n; ++i) rep.model_losses.push_back(empirical_loss(models[i], slices[i], kind).value);

  TransitionDataset aggregate;
  double model_sum = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    aggregate.append(slices[p]);
    model_sum += rep.model_losses[p];
    const TransitionModel best = fit(aggregate);
    double best_sum = 0.0;
    std::vector<double> best_losses;
    for (std::size_t i = 0; i <= p; ++i) {
      best_losses.push_back(empirical_loss(best, slices[i], kind).value);
      best_sum += best_losses.back();
    }
    const double count = static_cast<double>(p + 1);
    rep.regret_by_prefix.push_back((model_sum - best_sum) / count);
    if (p + 1 == n) {
      rep.hindsight_losses = std::move(best_losses);
      rep.average_loss = model_sum / count;
      rep.hindsight_average = best_sum / count;
      rep.average_regret = rep.average_loss - rep.hindsight_average;
    }
  }
  return rep;
}

}  // namespace agsysid
