#ifndef NORMALNORM_BENCH_HPP
#define NORMALNORM_BENCH_HPP

#include <cstdint>
#include <span>
#include <vector>

namespace normalnorm {

struct BenchRow {
    std::int64_t n = 0; // elements per normalization group
    double conventional_seconds = 0.0;
    double normality_seconds = 0.0;
    double ratio = 0.0; // normality / conventional
};

// Median-of-repeats wall time of one training forward for a batch-mode layer
// with 8 channels and n elements per group.
std::vector<BenchRow> bench_layer_forward(std::span<const std::int64_t> sizes,
                                          int repeats, std::uint64_t seed);

} // namespace normalnorm

#endif
