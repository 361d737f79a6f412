#include "normalnorm/noise_rng.hpp"

#include <cmath>
#include <numbers>

namespace normalnorm {

namespace {

// splitmix64 finalizer; full-avalanche bijection on 64 bits.
inline std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

inline std::uint64_t key_at(const NoiseStream& s, std::uint64_t index, std::uint64_t lane) {
    std::uint64_t k = mix64(s.seed + 0x9e3779b97f4a7c15ULL);
    k = mix64(k ^ (s.stream_id * 0xd1b54a32d192ed03ULL + 0x2545f4914f6cdd1dULL));
    k = mix64(k ^ ((s.counter_base + index) * 0x9e3779b97f4a7c15ULL));
    return mix64(k ^ (lane * 0xda942042e4dd58b5ULL + 0x61c8864680b583ebULL));
}

// Top 53 bits, offset by half an ulp: strictly inside (0, 1).
inline double to_unit_open(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

} // namespace

double uniform_at(const NoiseStream& stream, std::uint64_t index) {
    return to_unit_open(key_at(stream, index, 0));
}

double gaussian_at(const NoiseStream& stream, std::uint64_t index) {
    const double u1 = to_unit_open(key_at(stream, index, 1));
    const double u2 = to_unit_open(key_at(stream, index, 2));
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t uniform_index_at(const NoiseStream& stream, std::uint64_t index,
                               std::uint64_t bound) {
    // Rejection-free 128-bit multiply scaling; bias < 2^-64, irrelevant here.
    const std::uint64_t r = key_at(stream, index, 3);
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(r) * bound) >> 64);
}

} // namespace normalnorm
