#pragma once

#include <cstdint>
#include <random>

namespace bsjm {

// Seedable deterministic random stream: identical seed and call sequence give
// identical draws.  The normal variate is generated in-house (Box-Muller over
// the raw 64-bit stream) rather than through std::normal_distribution, whose
// output is implementation-defined.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed)
      : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }

  // Uniform on (0, 1), never exactly 0.
  double uniform() {
    ++position_;
    const std::uint64_t bits = engine_() >> 11;  // 53 random bits
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Derive an independent stream for a parallel unit of work.
  RandomStream substream(std::uint64_t index) const {
    return RandomStream(seed_ ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
  }

 private:
  std::uint64_t seed_;
  std::uint64_t position_ = 0;
  std::mt19937_64 engine_;
};

}  // namespace bsjm
