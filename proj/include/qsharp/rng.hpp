#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace qsharp {

// Counter-keyed SplitMix64. Streams keyed by (seed, stream) are
// independent, so batch collection can hand out one stream per
// trajectory index and reproduce serial results exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    state_ = scramble(seed + 0x9e3779b97f4a7c15ULL * (stream + 1));
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return scramble(state_);
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in {0, ..., n-1}.
  int next_int(int n) {
    if (n <= 0) throw std::invalid_argument("Rng::next_int: n must be positive");
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // Draws an index from an (unnormalized is not allowed) probability vector.
  int sample(const std::vector<double>& probs) {
    const double u = next_double();
    double cum = 0.0;
    int last_positive = -1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] <= 0.0) continue;
      last_positive = static_cast<int>(i);
      cum += probs[i];
      if (u < cum) return static_cast<int>(i);
    }
    if (last_positive < 0)
      throw std::domain_error("Rng::sample: distribution has no positive mass");
    return last_positive;  // guard against round-off at u ~ 1
  }

 private:
  static std::uint64_t scramble(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t state_;
};

}  // namespace qsharp
