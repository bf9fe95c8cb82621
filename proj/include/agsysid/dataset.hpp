#pragma once

#include "agsysid/common.hpp"

#include <iosfwd>
#include <vector>

namespace agsysid {

enum class Provenance { Exploration, OnPolicy };

const char* to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

/// One observed transition. Finite MDPs store indices as one-element vectors.
struct Sample {
  int iteration = 0;
  Provenance provenance = Provenance::Exploration;
  int step = 0;
  Vec state;
  Vec action;
  Vec next_state;

  static Sample finite(int iteration, Provenance prov, int step, int s, int a, int next);
  int s() const { return static_cast<int>(state(0)); }
  int a() const { return static_cast<int>(action(0)); }
  int next() const { return static_cast<int>(next_state(0)); }
};

/// Append-only aggregate of transitions; iteration tags never decrease.
class TransitionDataset {
 public:
  void add(Sample sample);
  void append(const TransitionDataset& other);

  const std::vector<Sample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  int last_iteration() const { return samples_.empty() ? 0 : samples_.back().iteration; }

  /// Samples with the given iteration tag.
  TransitionDataset slice(int iteration) const;
  /// Samples with iteration tag <= last.
  TransitionDataset prefix(int last) const;
  std::size_t count(Provenance p) const;

  /// Delimited text: a versioned comment header, a column header, then one
  /// sample per line as iteration,provenance,t,state...,action...,next_state...
  /// with 17 significant digits.
  void write_csv(std::ostream& out) const;
  static TransitionDataset read_csv(std::istream& in);

 private:
  std::vector<Sample> samples_;
};

}  // namespace agsysid
