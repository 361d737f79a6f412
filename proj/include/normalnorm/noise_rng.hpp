#ifndef NORMALNORM_NOISE_RNG_HPP
#define NORMALNORM_NOISE_RNG_HPP

#include <cstdint>

namespace normalnorm {

// Deterministic, splittable noise streams. A draw is a pure function of
// (seed, stream_id, counter_base + index), so any partition of indices
// across threads fills a tensor with identical values.
//
// Stream-id map used across the project:
//   layer noise during training   : stream_id = kStreamLayerNoise + layer index,
//                                    counter_base = step * batch_capacity * width
//   parameter initialization      : kStreamInit + parameter index
//   minibatch shuffling           : kStreamShuffle, counter = epoch * n + i
//   synthetic dataset draws       : kStreamData + column
//   robustness-harness injections : kStreamRobustness + inject layer,
//                                    counter = (draw * points + point) * units + unit
//   diagnostics channel sampling  : kStreamDiagnostics
struct NoiseStream {
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
    std::uint64_t counter_base = 0;
};

inline constexpr std::uint64_t kStreamLayerNoise = 0;
inline constexpr std::uint64_t kStreamInit = 1000;
inline constexpr std::uint64_t kStreamShuffle = 2000;
inline constexpr std::uint64_t kStreamData = 3000;
inline constexpr std::uint64_t kStreamRobustness = 4000;
inline constexpr std::uint64_t kStreamDiagnostics = 5000;

// Uniform variate in (0, 1).
double uniform_at(const NoiseStream& stream, std::uint64_t index);

// Standard normal variate (Box-Muller over two counter-hashed uniforms).
double gaussian_at(const NoiseStream& stream, std::uint64_t index);

// Uniform integer in [0, bound), bound > 0.
std::uint64_t uniform_index_at(const NoiseStream& stream, std::uint64_t index,
                               std::uint64_t bound);

} // namespace normalnorm

#endif
