#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace vssf {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent child streams from a root seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0) {
  return mix_seed(mix_seed(mix_seed(root) ^ a) ^ (b * 0xD1B54A32D192ED03ULL));
}

inline Rng make_stream(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0) {
  return Rng(derive_seed(root, a, b));
}

inline Eigen::VectorXd standard_normal(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = normal(rng);
  return out;
}

}  // namespace vssf
