#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "mva/tensor.hpp"

namespace mva {

/// Deterministic counter-based stream (splitmix64). Fully specified, so the
/// same seed produces the same values on every build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next_u64();
  /// Uniform in (0, 1].
  double next_unit();
  /// Standard normal via Box-Muller.
  double next_normal();
  /// Uniform integer in [0, n).
  int next_int(int n);

 private:
  std::uint64_t state_;
};

/// Derives the substream seed for a named parameter from the global seed.
std::uint64_t substream(std::uint64_t global_seed, std::string_view path);

std::uint64_t fnv1a64(std::string_view text);

enum class InitScheme { Zeros, Ones, ScaledNormal, ScaledUniform };

InitScheme parse_init_scheme(const std::string& name);

/// Fills a tensor deterministically. Scaled schemes use fan_in = shape[0]
/// (1 for scalars): std = 1/sqrt(fan_in) for normal, matching-variance
/// bounds for uniform.
Tensor seeded_init(const std::vector<int>& shape, InitScheme scheme, std::uint64_t seed);

}  // namespace mva
