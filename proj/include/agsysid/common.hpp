#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace agsysid {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Caller supplied something malformed (dimension mismatch, bad parameter).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A condition that should be unreachable for valid inputs.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// The environment cannot serve the requested kind of sample
/// (e.g. a set-state exploration distribution on a reset-only simulator).
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

/// Independent engine derived from a root seed and a stream name.
/// Streams with different names never share state, so drawing more from one
/// leaves every other stream's sequence unchanged.
Rng make_stream(std::uint64_t root_seed, std::string_view name, std::uint64_t index = 0);

/// Named sub-streams used by simulation routines.
struct SimStreams {
  Rng env;      // process noise
  Rng stop;     // geometric stopping coin
  Rng init;     // initial state draws
  Rng action;   // stochastic policy / action noise / mixture member pick

  static SimStreams from(std::uint64_t root_seed, std::string_view tag, std::uint64_t index = 0);
};

double uniform01(Rng& rng);
Vec standard_normal(Rng& rng, Eigen::Index n);

/// Draw an index from a discrete distribution (entries need not be normalised).
int sample_index(const Eigen::Ref<const Vec>& probs, Rng& rng);

void require(bool condition, const std::string& message);

}  // namespace agsysid
