#include "agsysid/common.hpp"

namespace agsysid {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a; stable across platforms unlike std::hash.
std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Rng make_stream(std::uint64_t root_seed, std::string_view name, std::uint64_t index) {
  std::uint64_t s = splitmix64(root_seed);
  s = splitmix64(s ^ hash_name(name));
  s = splitmix64(s ^ index);
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32)};
  return Rng(seq);
}

SimStreams SimStreams::from(std::uint64_t root_seed, std::string_view tag, std::uint64_t index) {
  const std::string t(tag);
  return SimStreams{make_stream(root_seed, t + "/env", index), make_stream(root_seed, t + "/stop", index),
                    make_stream(root_seed, t + "/init", index), make_stream(root_seed, t + "/action", index)};
}

double uniform01(Rng& rng) {
  // 53 random bits -> [0,1); avoids implementation-defined distribution algorithms
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Vec standard_normal(Rng& rng, Eigen::Index n) {
  // Box-Muller on our own uniform draws keeps sequences identical across standard libraries.
  Vec out(n);
  for (Eigen::Index i = 0; i < n; i += 2) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    const double r = std::sqrt(-2.0 * std::log(u1));
    out(i) = r * std::cos(2.0 * M_PI * u2);
    if (i + 1 < n) out(i + 1) = r * std::sin(2.0 * M_PI * u2);
  }
  return out;
}

int sample_index(const Eigen::Ref<const Vec>& probs, Rng& rng) {
  const double total = probs.sum();
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  int last_positive = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs(i) <= 0.0) continue;
    acc += probs(i);
    last_positive = static_cast<int>(i);
    if (u < acc) return static_cast<int>(i);
  }
  return last_positive;
}

void require(bool condition, const std::string& message) {
  if (!condition) throw InputError(message);
}

}  // namespace agsysid
