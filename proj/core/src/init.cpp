#include "mva/init.hpp"

#include <cmath>
#include <stdexcept>

namespace mva {

std::uint64_t Rng::next_u64() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::next_unit() {
  // 53 mantissa bits, shifted into (0, 1].
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double Rng::next_normal() {
  const double u1 = next_unit();
  const double u2 = next_unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int Rng::next_int(int n) {
  if (n <= 0) throw std::invalid_argument("Rng::next_int: n must be positive");
  return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t substream(std::uint64_t global_seed, std::string_view path) {
  Rng mix(global_seed ^ fnv1a64(path));
  return mix.next_u64();
}

InitScheme parse_init_scheme(const std::string& name) {
  if (name == "zeros") return InitScheme::Zeros;
  if (name == "ones") return InitScheme::Ones;
  if (name == "scaled_normal") return InitScheme::ScaledNormal;
  if (name == "scaled_uniform") return InitScheme::ScaledUniform;
  throw std::invalid_argument("unknown init scheme: " + name);
}

Tensor seeded_init(const std::vector<int>& shape, InitScheme scheme, std::uint64_t seed) {
  Tensor t = Tensor::zeros(shape);
  double* p = t.ptr();
  const std::int64_t n = t.size();
  switch (scheme) {
    case InitScheme::Zeros:
      break;
    case InitScheme::Ones:
      for (std::int64_t i = 0; i < n; ++i) p[i] = 1.0;
      break;
    case InitScheme::ScaledNormal: {
      const double fan_in = shape.empty() ? 1.0 : static_cast<double>(shape[0]);
      const double std_dev = 1.0 / std::sqrt(fan_in);
      Rng rng(seed);
      for (std::int64_t i = 0; i < n; ++i) p[i] = rng.next_normal() * std_dev;
      break;
    }
    case InitScheme::ScaledUniform: {
      const double fan_in = shape.empty() ? 1.0 : static_cast<double>(shape[0]);
      // Bound sqrt(3/fan_in) gives the same variance as the normal scheme.
      const double bound = std::sqrt(3.0 / fan_in);
      Rng rng(seed);
      for (std::int64_t i = 0; i < n; ++i) p[i] = (2.0 * rng.next_unit() - 1.0) * bound;
      break;
    }
  }
  return t;
}

}  // namespace mva
