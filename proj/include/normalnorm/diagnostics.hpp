#ifndef NORMALNORM_DIAGNOSTICS_HPP
#define NORMALNORM_DIAGNOSTICS_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "normalnorm/mlp.hpp"

namespace normalnorm {

// Inverse standard normal CDF; rational approximation polished with one
// Halley step, absolute error well under 1e-9 on [1e-9, 1-1e-9].
double normal_quantile(double p);

struct QqResult {
    double r2 = 0.0;
    double slope = 0.0;
    double intercept = 0.0;
    std::int64_t n = 0;
};

// Least-squares line through (normal quantile at (i-0.5)/n, i-th order
// statistic) pairs; r2 of the fit. n >= 8; constant samples are degenerate.
QqResult qq_r2(std::span<const double> values);

double pearson(std::span<const double> x, std::span<const double> y);

// Negated Henze-Zirkler statistic of the bivariate sample (higher values
// mean greater joint normality), with the standard bandwidth
// beta = ((2d+1) n / 4)^(1/(d+2)) / sqrt(2), d = 2, and the biased sample
// covariance. Throws DegenerateError on a singular covariance.
double hz_statistic(std::span<const double> x, std::span<const double> y);

// Adjusted mutual information with floor(sqrt(n)) equal-width bins per
// variable over its own range, expected MI under the hypergeometric
// permutation model, normalized by the mean of the two entropies.
double adjusted_mutual_information(std::span<const double> x, std::span<const double> y);

struct PairStats {
    double pearson_rho = 0.0;
    double hz_neg = 0.0;
    double ami = 0.0;
};

struct LayerR2 {
    std::int64_t layer = 0;
    double mean_r2 = 0.0;
    std::int64_t combos = 0;
};

// Figure-style aggregate: mean qq_r2 over sampled (channel, minibatch)
// combinations of each hidden layer's normalization-slot values, read in
// eval mode. Channels are sampled without replacement (seeded), fixed
// across minibatches.
std::vector<LayerR2> layer_r2_aggregate(const Mlp& model, const Dataset& data,
                                        std::int64_t channels_per_layer = 20,
                                        std::int64_t batches = 10,
                                        std::int64_t batch_size = 128,
                                        std::uint64_t seed = 0);

// Per-layer pair statistics over sampled channel pairs and minibatches.
struct PairStatsRow {
    std::int64_t layer = 0;
    std::int64_t channel_a = 0;
    std::int64_t channel_b = 0;
    std::int64_t batch = 0;
    PairStats stats;
};
std::vector<PairStatsRow> layer_pair_stats(const Mlp& model, const Dataset& data,
                                           std::int64_t pairs_per_layer = 10,
                                           std::int64_t batches = 10,
                                           std::int64_t batch_size = 128,
                                           std::uint64_t seed = 0);

struct RobustnessEntry {
    std::int64_t inject_layer = 0;
    std::int64_t probe_layer = 0;
    double mean_zeta = 0.0;
    double std_error = 0.0;
    double delta = 0.0;
    std::int64_t draws = 0;
};

struct RobustnessReport {
    std::vector<RobustnessEntry> entries;
};

// Relative l1 discrepancy of probe-layer slot values between clean and
// noise-perturbed forwards. The perturbation at the inject layer's slot is
// z * delta * scale[c], where scale is the per-channel zero-centered l1 norm
// of slot values over the whole training set; averaged over the evaluation
// set and `draws` Monte Carlo draws.
RobustnessReport noise_robustness(const Mlp& model, const Dataset& eval_data,
                                  const Dataset& train_data, std::int64_t inject_layer,
                                  std::span<const std::int64_t> probe_layers, double delta,
                                  std::int64_t draws, std::uint64_t seed,
                                  std::int64_t batch_size = 256);

// Per-channel global zero-centered l1 scale of a layer's slot values.
std::vector<double> global_slot_scales(const Mlp& model, const Dataset& train_data,
                                       std::int64_t layer, std::int64_t batch_size = 512);

} // namespace normalnorm

#endif
