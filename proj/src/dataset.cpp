#include "agsysid/dataset.hpp"

#include "agsysid/textio.hpp"

#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace agsysid {

const char* to_string(Provenance p) { return p == Provenance::Exploration ? "exploration" : "on_policy"; }

Provenance provenance_from_string(std::string_view s) {
  if (s == "exploration") return Provenance::Exploration;
  if (s == "on_policy") return Provenance::OnPolicy;
  throw InputError("unknown provenance '" + std::string(s) + "'");
}

Sample Sample::finite(int iteration, Provenance prov, int step, int s, int a, int next) {
  return Sample{iteration, prov, step, Vec::Constant(1, s), Vec::Constant(1, a), Vec::Constant(1, next)};
}

void TransitionDataset::add(Sample sample) {
  if (!samples_.empty() && sample.iteration < samples_.back().iteration) {
    throw InputError("TransitionDataset: iteration tags must be non-decreasing");
  }
  if (!samples_.empty()) {
    const auto& first = samples_.front();
    if (sample.state.size() != first.state.size() || sample.action.size() != first.action.size() ||
        sample.next_state.size() != first.next_state.size()) {
      throw InputError("TransitionDataset: sample dimensions differ from earlier samples");
    }
  }
  samples_.push_back(std::move(sample));
}

void TransitionDataset::append(const TransitionDataset& other) {
  for (const auto& s : other.samples_) add(s);
}

TransitionDataset TransitionDataset::slice(int iteration) const {
  TransitionDataset out;
  for (const auto& s : samples_)
    if (s.iteration == iteration) out.samples_.push_back(s);
  return out;
}

TransitionDataset TransitionDataset::prefix(int last) const {
  TransitionDataset out;
  for (const auto& s : samples_)
    if (s.iteration <= last) out.samples_.push_back(s);
  return out;
}

std::size_t TransitionDataset::count(Provenance p) const {
  std::size_t n = 0;
  for (const auto& s : samples_) n += s.provenance == p;
  return n;
}

void TransitionDataset::write_csv(std::ostream& out) const {
  const auto d = samples_.empty() ? 0 : samples_.front().state.size();
  const auto k = samples_.empty() ? 0 : samples_.front().action.size();
  out << "# agsysid-dataset v1 state_dim=" << d << " action_dim=" << k << "\n";
  out << "iteration,provenance,t";
  for (Eigen::Index i = 0; i < d; ++i) out << ",s" << i;
  for (Eigen::Index i = 0; i < k; ++i) out << ",a" << i;
  for (Eigen::Index i = 0; i < d; ++i) out << ",n" << i;
  out << "\n";
  for (const auto& s : samples_) {
    out << s.iteration << ',' << to_string(s.provenance) << ',' << s.step;
    for (Eigen::Index i = 0; i < d; ++i) out << ',' << format_real(s.state(i));
    for (Eigen::Index i = 0; i < k; ++i) out << ',' << format_real(s.action(i));
    for (Eigen::Index i = 0; i < d; ++i) out << ',' << format_real(s.next_state(i));
    out << "\n";
  }
}

TransitionDataset TransitionDataset::read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("# agsysid-dataset v1", 0) != 0) {
    throw InputError("dataset: missing or unsupported header");
  }
  int d = -1;
  int k = -1;
  {
    std::istringstream hs(line.substr(std::string("# agsysid-dataset v1").size()));
    std::string tok;
    while (hs >> tok) {
      if (tok.rfind("state_dim=", 0) == 0) d = std::stoi(tok.substr(10));
      if (tok.rfind("action_dim=", 0) == 0) k = std::stoi(tok.substr(11));
    }
  }
  if (d < 0 || k < 0) throw InputError("dataset: header lacks dimensions");
  std::getline(in, line);  // column names
  TransitionDataset ds;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (static_cast<int>(fields.size()) != 3 + 2 * d + k) throw InputError("dataset: wrong field count in '" + line + "'");
    Sample s;
    s.iteration = std::stoi(fields[0]);
    s.provenance = provenance_from_string(fields[1]);
    s.step = std::stoi(fields[2]);
    s.state.resize(d);
    s.action.resize(k);
    s.next_state.resize(d);
    std::size_t f = 3;
    for (int i = 0; i < d; ++i) s.state(i) = parse_real(fields[f++]);
    for (int i = 0; i < k; ++i) s.action(i) = parse_real(fields[f++]);
    for (int i = 0; i < d; ++i) s.next_state(i) = parse_real(fields[f++]);
    ds.add(std::move(s));
  }
  return ds;
}

}  // namespace agsysid
