#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ead {

/// Deterministic random stream.
///
/// Streams are derived from a root seed and an index path (step, prompt,
/// rollout, ...), so every consumer owns a private stream whose output does
/// not depend on scheduling. Uniforms are built from the raw engine bits,
/// which keeps them identical across standard library implementations.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed);

  static RandomStream derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

// Stream domains, the first element of every derivation path.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kTrainPrompts = 2;
inline constexpr std::uint64_t kTrainRollouts = 3;
inline constexpr std::uint64_t kEvalPrompts = 4;
inline constexpr std::uint64_t kEvalRollouts = 5;
inline constexpr std::uint64_t kFork = 6;
inline constexpr std::uint64_t kScale = 7;
}  // namespace stream

}  // namespace ead
