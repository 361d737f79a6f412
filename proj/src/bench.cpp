#include "normalnorm/bench.hpp"

#include <algorithm>
#include <chrono>

#include "normalnorm/noise_rng.hpp"
#include "normalnorm/normalization.hpp"

namespace normalnorm {

namespace {

double time_forward(NormLayer& layer, const Tensor& input, int repeats) {
    const NoiseStream stream{7, 0, 0};
    std::vector<double> times;
    times.reserve(static_cast<std::size_t>(repeats));
    double sink = 0.0;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const Tensor out = layer.forward_train(input, stream, nullptr);
        const auto t1 = std::chrono::steady_clock::now();
        sink += out[0];
        times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    (void)sink;
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
}

} // namespace

std::vector<BenchRow> bench_layer_forward(std::span<const std::int64_t> sizes,
                                          int repeats, std::uint64_t seed) {
    const std::int64_t channels = 8;
    std::vector<BenchRow> rows;
    for (auto n : sizes) {
        Tensor input({n, channels});
        NoiseStream data{seed, 99, 0};
        for (std::int64_t i = 0; i < input.numel(); ++i) {
            // mildly skewed so the estimator does real work
            const double z = gaussian_at(data, static_cast<std::uint64_t>(i));
            input[i] = z + 0.3 * z * z;
        }
        GroupingSpec spec{GroupingMode::batch, 32};

        NormLayer conventional(channels, spec, /*powered=*/false);
        NormLayer normality(channels, spec, /*powered=*/true);
        normality.state().alpha = 1.0;
        normality.state().xi = 0.1;

        BenchRow row;
        row.n = n;
        row.conventional_seconds = time_forward(conventional, input, repeats);
        row.normality_seconds = time_forward(normality, input, repeats);
        row.ratio = row.normality_seconds / row.conventional_seconds;
        rows.push_back(row);
    }
    return rows;
}

} // namespace normalnorm
