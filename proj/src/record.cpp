#include "agsysid/record.hpp"

#include "agsysid/textio.hpp"

#include <sstream>

namespace agsysid {

namespace {

class Writer {
 public:
  explicit Writer(std::string_view kind) { out_ << "agsysid-record v" << kRecordVersion << ' ' << kind << '\n'; }

  void text(std::string_view key, std::string_view value) { out_ << key << ' ' << value << '\n'; }
  void integer(std::string_view key, long long value) { out_ << key << ' ' << value << '\n'; }
  void real(std::string_view key, double value) { out_ << key << ' ' << format_real(value) << '\n'; }

  void matrix(std::string_view name, const Mat& m) {
    out_ << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    if (m.cols() == 0) return;  // rows would be blank lines
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) out_ << (c ? " " : "") << format_real(m(r, c));
      out_ << '\n';
    }
  }

  void vector(std::string_view name, const Vec& v) {
    out_ << "vector " << name << ' ' << v.size() << '\n';
    if (v.size() == 0) return;
    for (Eigen::Index i = 0; i < v.size(); ++i) out_ << (i ? " " : "") << format_real(v(i));
    out_ << '\n';
  }

  void policy(const Policy& p) {
    if (const auto* t = std::get_if<TabularPolicy>(&p.kind)) {
      text("policy", "tabular");
      matrix("probs", t->probs);
    } else if (const auto* l = std::get_if<LinearFeedbackPolicy>(&p.kind)) {
      text("policy", "linear");
      matrix("gain", l->gain);
      vector("offset", l->offset);
    } else if (const auto* tv = std::get_if<TimeVaryingAffinePolicy>(&p.kind)) {
      out_ << "policy time_varying " << tv->gains.size() << '\n';
      for (std::size_t i = 0; i < tv->gains.size(); ++i) {
        matrix("gain", tv->gains[i]);
        vector("offset", tv->offsets[i]);
      }
    } else {
      const auto& mix = std::get<MixturePolicy>(p.kind);
      out_ << "policy mixture " << mix.members.size() << '\n';
      for (const auto& m : mix.members) policy(m);
    }
  }

  void quadratic(const QuadraticValue& q) {
    matrix("p_mat", q.p_mat);
    vector("p_vec", q.p_vec);
    real("offset", q.offset);
  }

  std::string finish() {
    out_ << "end\n";
    return out_.str();
  }

 private:
  std::ostringstream out_;
};

class Reader {
 public:
  Reader(std::string_view text, std::string_view kind) {
    std::size_t line_no = 0;
    for (const auto& raw : split(text, '\n')) {
      ++line_no;
      std::string line = trim(raw);
      if (line.empty() || line[0] == '#') continue;
      lines_.push_back({line_no, std::move(line)});
    }
    const auto head = next();
    const std::string expected = "v" + std::to_string(kRecordVersion);
    if (head.size() != 3 || head[0] != "agsysid-record") fail("missing 'agsysid-record' header");
    if (head[1] != expected) fail("unsupported record version '" + head[1] + "'");
    if (head[2] != kind) fail("expected a '" + std::string(kind) + "' record, found '" + head[2] + "'");
  }

  std::vector<std::string> next() {
    if (pos_ >= lines_.size()) throw InputError("record: unexpected end of input");
    ++pos_;
    std::vector<std::string> tokens;
    for (auto& t : split(lines_[pos_ - 1].second, ' '))
      if (!t.empty()) tokens.push_back(std::move(t));
    return tokens;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    const std::size_t line = pos_ == 0 ? 0 : lines_[pos_ - 1].first;
    throw InputError("record line " + std::to_string(line) + ": " + msg);
  }

  std::vector<std::string> keyed(std::string_view key, std::size_t values) {
    auto t = next();
    if (t.empty() || t[0] != key) fail("expected '" + std::string(key) + "'");
    if (t.size() != values + 1) fail("wrong number of fields after '" + std::string(key) + "'");
    return t;
  }

  std::string text(std::string_view key) { return keyed(key, 1)[1]; }

  long long integer(std::string_view key) {
    const std::string v = text(key);
    try {
      std::size_t used = 0;
      const long long n = std::stoll(v, &used);
      if (used == v.size()) return n;
    } catch (const std::exception&) {
    }
    fail("'" + v + "' is not an integer");
  }

  std::size_t count(std::string_view key) {
    const long long n = integer(key);
    if (n < 0) fail("negative count");
    return static_cast<std::size_t>(n);
  }

  double real(std::string_view key) { return parse(text(key)); }

  Mat matrix(std::string_view name) {
    const auto h = keyed("matrix", 3);
    if (h[1] != name) fail("expected matrix '" + std::string(name) + "', found '" + h[1] + "'");
    const Eigen::Index rows = dimension(h[2]);
    const Eigen::Index cols = dimension(h[3]);
    Mat m(rows, cols);
    if (cols == 0) return m;
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto row = next();
      if (static_cast<Eigen::Index>(row.size()) != cols) fail("matrix row has the wrong length");
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = parse(row[static_cast<std::size_t>(c)]);
    }
    return m;
  }

  Vec vector(std::string_view name) {
    const auto h = keyed("vector", 2);
    if (h[1] != name) fail("expected vector '" + std::string(name) + "', found '" + h[1] + "'");
    const Eigen::Index n = dimension(h[2]);
    Vec v(n);
    if (n == 0) return v;
    const auto row = next();
    if (static_cast<Eigen::Index>(row.size()) != n) fail("vector has the wrong length");
    for (Eigen::Index i = 0; i < n; ++i) v(i) = parse(row[static_cast<std::size_t>(i)]);
    return v;
  }

  Policy policy() {
    const auto t = next();
    if (t.size() < 2 || t[0] != "policy") fail("expected 'policy'");
    if (t[1] == "tabular" && t.size() == 2) return Policy::tabular(matrix("probs"));
    if (t[1] == "linear" && t.size() == 2) {
      Mat gain = matrix("gain");
      return Policy::linear(std::move(gain), vector("offset"));
    }
    if (t[1] == "time_varying" && t.size() == 3) {
      const Eigen::Index n = dimension(t[2]);
      std::vector<Mat> gains;
      std::vector<Vec> offsets;
      for (Eigen::Index i = 0; i < n; ++i) {
        gains.push_back(matrix("gain"));
        offsets.push_back(vector("offset"));
      }
      return Policy::time_varying(std::move(gains), std::move(offsets));
    }
    if (t[1] == "mixture" && t.size() == 3) {
      const Eigen::Index n = dimension(t[2]);
      std::vector<Policy> members;
      for (Eigen::Index i = 0; i < n; ++i) members.push_back(policy());
      return Policy::mixture(std::move(members));
    }
    fail("unknown policy kind '" + t[1] + "'");
  }

  QuadraticValue quadratic() {
    QuadraticValue q;
    q.p_mat = matrix("p_mat");
    q.p_vec = vector("p_vec");
    q.offset = real("offset");
    return q;
  }

  void finish() {
    const auto t = next();
    if (t.size() != 1 || t[0] != "end") fail("expected 'end'");
    if (pos_ != lines_.size()) {
      ++pos_;
      fail("trailing content after 'end'");
    }
  }

 private:
  double parse(const std::string& s) const {
    try {
      return parse_real(s);
    } catch (const InputError& e) {
      fail(e.what());
    }
  }

  Eigen::Index dimension(const std::string& s) {
    try {
      std::size_t used = 0;
      const long long n = std::stoll(s, &used);
      if (used == s.size() && n >= 0) return static_cast<Eigen::Index>(n);
    } catch (const std::exception&) {
    }
    fail("'" + s + "' is not a dimension");
  }

  std::vector<std::pair<std::size_t, std::string>> lines_;
  std::size_t pos_ = 0;
};

template <typename F>
auto wrap_validation(Reader& in, F&& validate) {
  try {
    return validate();
  } catch (const InputError& e) {
    in.fail(e.what());
  }
}

}  // namespace

std::string record_kind(std::string_view text) {
  for (const auto& raw : split(text, '\n')) {
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto t = split(line, ' ');
    if (t.size() != 3 || t[0] != "agsysid-record") throw InputError("record: missing 'agsysid-record' header");
    return t[2];
  }
  throw InputError("record: empty input");
}

std::string serialize(const FiniteMdp& mdp) {
  Writer w("finite_mdp");
  w.integer("num_states", mdp.num_states);
  w.integer("num_actions", mdp.num_actions);
  w.real("discount", mdp.discount);
  w.real("cost_min", mdp.cost_min);
  w.real("cost_max", mdp.cost_max);
  for (const auto& t : mdp.transition) w.matrix("transition", t);
  w.matrix("cost", mdp.cost);
  w.vector("initial", mdp.initial);
  return w.finish();
}

FiniteMdp parse_finite_mdp(std::string_view text) {
  Reader in(text, "finite_mdp");
  FiniteMdp mdp;
  mdp.num_states = static_cast<int>(in.integer("num_states"));
  mdp.num_actions = static_cast<int>(in.integer("num_actions"));
  if (mdp.num_states < 1 || mdp.num_actions < 1) in.fail("state and action counts must be positive");
  mdp.discount = in.real("discount");
  mdp.cost_min = in.real("cost_min");
  mdp.cost_max = in.real("cost_max");
  for (int a = 0; a < mdp.num_actions; ++a) mdp.transition.push_back(in.matrix("transition"));
  mdp.cost = in.matrix("cost");
  mdp.initial = in.vector("initial");
  in.finish();
  wrap_validation(in, [&] {
    mdp.validate();
    return 0;
  });
  return mdp;
}

std::string serialize(const LinearPlant& plant) {
  Writer w("linear_plant");
  w.matrix("dynamics_a", plant.dynamics_a);
  w.matrix("dynamics_b", plant.dynamics_b);
  w.matrix("noise_cov", plant.noise_cov);
  w.matrix("cost_q", plant.cost_q);
  w.matrix("cost_r", plant.cost_r);
  w.vector("initial_mean", plant.initial_mean);
  w.matrix("initial_cov", plant.initial_cov);
  w.real("discount", plant.discount);
  w.integer("actuation_delay", plant.actuation_delay);
  w.integer("horizon", plant.horizon);
  w.integer("reference", static_cast<long long>(plant.reference.size()));
  for (const auto& x : plant.reference) w.vector("x", x);
  w.integer("reference_control", static_cast<long long>(plant.reference_control.size()));
  for (const auto& u : plant.reference_control) w.vector("u", u);
  return w.finish();
}

LinearPlant parse_linear_plant(std::string_view text) {
  Reader in(text, "linear_plant");
  LinearPlant p;
  p.dynamics_a = in.matrix("dynamics_a");
  p.dynamics_b = in.matrix("dynamics_b");
  p.noise_cov = in.matrix("noise_cov");
  p.cost_q = in.matrix("cost_q");
  p.cost_r = in.matrix("cost_r");
  p.initial_mean = in.vector("initial_mean");
  p.initial_cov = in.matrix("initial_cov");
  p.discount = in.real("discount");
  p.actuation_delay = static_cast<int>(in.integer("actuation_delay"));
  p.horizon = static_cast<int>(in.integer("horizon"));
  const std::size_t nref = in.count("reference");
  for (std::size_t i = 0; i < nref; ++i) p.reference.push_back(in.vector("x"));
  const std::size_t nctl = in.count("reference_control");
  for (std::size_t i = 0; i < nctl; ++i) p.reference_control.push_back(in.vector("u"));
  in.finish();
  wrap_validation(in, [&] {
    p.validate();
    return 0;
  });
  return p;
}

std::string serialize(const Policy& policy) {
  Writer w("policy");
  w.policy(policy);
  return w.finish();
}

Policy parse_policy(std::string_view text) {
  Reader in(text, "policy");
  Policy p = wrap_validation(in, [&] { return in.policy(); });
  in.finish();
  return p;
}

std::string serialize(const OcSolution& solution) {
  Writer w("oc_solution");
  w.policy(solution.policy);
  if (const auto* v = std::get_if<Vec>(&solution.value)) {
    w.text("value", "tabular");
    w.vector("v", *v);
  } else if (const auto* q = std::get_if<QuadraticValue>(&solution.value)) {
    w.text("value", "quadratic");
    w.quadratic(*q);
  } else {
    const auto& seq = std::get<std::vector<QuadraticValue>>(solution.value);
    w.integer("value sequence", static_cast<long long>(seq.size()));
    for (const auto& q : seq) w.quadratic(q);
  }
  const auto& d = solution.diagnostics;
  w.integer("iterations", d.iterations);
  w.real("residual", d.residual);
  w.integer("converged", d.converged ? 1 : 0);
  w.real("slack", d.slack);
  w.vector("residual_history", Eigen::Map<const Vec>(d.residual_history.data(),
                                                     static_cast<Eigen::Index>(d.residual_history.size())));
  return w.finish();
}

OcSolution parse_oc_solution(std::string_view text) {
  Reader in(text, "oc_solution");
  OcSolution sol;
  sol.policy = wrap_validation(in, [&] { return in.policy(); });
  const auto t = in.next();
  if (t.size() == 2 && t[0] == "value" && t[1] == "tabular") {
    sol.value = in.vector("v");
  } else if (t.size() == 2 && t[0] == "value" && t[1] == "quadratic") {
    sol.value = in.quadratic();
  } else if (t.size() == 3 && t[0] == "value" && t[1] == "sequence") {
    std::size_t n = 0;
    try {
      n = static_cast<std::size_t>(std::stoul(t[2]));
    } catch (const std::exception&) {
      in.fail("bad value sequence length");
    }
    std::vector<QuadraticValue> seq;
    for (std::size_t i = 0; i < n; ++i) seq.push_back(in.quadratic());
    sol.value = std::move(seq);
  } else {
    in.fail("expected 'value tabular', 'value quadratic' or 'value sequence <n>'");
  }
  auto& d = sol.diagnostics;
  d.iterations = static_cast<int>(in.integer("iterations"));
  d.residual = in.real("residual");
  const long long conv = in.integer("converged");
  if (conv != 0 && conv != 1) in.fail("converged must be 0 or 1");
  d.converged = conv == 1;
  d.slack = in.real("slack");
  const Vec hist = in.vector("residual_history");
  d.residual_history.assign(hist.data(), hist.data() + hist.size());
  in.finish();
  return sol;
}

}  // namespace agsysid
