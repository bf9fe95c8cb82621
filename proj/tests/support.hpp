#pragma once

#include "agsysid/mdp.hpp"

#include <vector>

namespace agsysid::testing {

/// Deterministic successor table: next[a][s].
inline FiniteMdp deterministic_mdp(const std::vector<std::vector<int>>& next, const Mat& cost, const Vec& initial,
                                   double discount) {
  FiniteMdp m;
  m.num_states = static_cast<int>(cost.rows());
  m.num_actions = static_cast<int>(cost.cols());
  for (const auto& row : next) {
    Mat p = Mat::Zero(m.num_states, m.num_states);
    for (int s = 0; s < m.num_states; ++s) p(s, row[static_cast<std::size_t>(s)]) = 1.0;
    m.transition.push_back(p);
  }
  m.cost = cost;
  m.initial = initial;
  m.discount = discount;
  m.fit_cost_bounds();
  m.validate();
  return m;
}

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace agsysid::testing
