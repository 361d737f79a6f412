#ifndef NORMALNORM_NORMALIZATION_HPP
#define NORMALNORM_NORMALIZATION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "normalnorm/noise_rng.hpp"
#include "normalnorm/power_transform.hpp"
#include "normalnorm/tensor.hpp"

namespace normalnorm {

enum class GroupingMode { batch, layer, instance, group };

enum class NoiseMode { scaled, unscaled, gaussian_dropout, none };

GroupingMode grouping_mode_from_string(const std::string& s);
std::string to_string(GroupingMode m);
NoiseMode noise_mode_from_string(const std::string& s);
std::string to_string(NoiseMode m);

struct GroupingSpec {
    GroupingMode mode = GroupingMode::batch;
    std::int64_t group_size = 32; // used iff mode == group
};

// Partition of all elements of a (batch, channels[, spatial...]) tensor into
// disjoint normalization groups.
//   batch    : one group per channel, spanning batch and spatial dims
//   layer    : one group per sample, spanning channels and spatial dims
//   instance : one group per (sample, channel)
//   group    : one group per (sample, block of group_size channels)
std::vector<std::vector<std::int64_t>>
resolve_groups(const std::vector<std::int64_t>& shape, const GroupingSpec& spec);

// s = (1/N) sum |x_i - mean(x)|; excluded from gradients by construction
// (it is never differentiated through).
double noise_scale(const Sample& x);

// Learnable affine, hyperparameters and running estimates of one layer.
// Running estimates are tracked per channel and only in batch mode.
struct NormLayerState {
    std::vector<double> gamma;
    std::vector<double> beta;
    double eps = 1e-5;
    double xi = 0.0;
    double alpha = 1.0;
    NoiseMode noise_mode = NoiseMode::scaled;
    double p = 1.0; // retention rate, gaussian_dropout mode only
    double momentum = 0.1;
    std::vector<double> running_mu;
    std::vector<double> running_sigma2;
    std::vector<double> running_lambda;
    std::int64_t num_batches_tracked = 0;

    explicit NormLayerState(std::int64_t channels);
    std::int64_t channels() const { return static_cast<std::int64_t>(gamma.size()); }
};

// Everything the backward pass needs from one training forward.
struct ForwardCache {
    std::vector<std::int64_t> shape;
    std::vector<std::vector<std::int64_t>> groups;
    Tensor h;                          // normalized values
    Tensor y;                          // post-noise values (pre-affine)
    std::vector<double> inv_std;       // per group, 1/sqrt(var + eps)
    std::vector<double> group_mean;    // per group
    std::vector<double> group_var;     // per group
    std::vector<LambdaEstimate> lambda; // per group
    std::vector<double> s;             // per group noise scale
    Tensor z;                          // sampled noise (empty when unused)
    bool powered = false;              // whether the power transform ran
};

// y_i per noise mode:
//   scaled           : x_i + z_i * xi * s
//   unscaled         : x_i + z_i * xi * sqrt(2/pi)
//   gaussian_dropout : x_i * (1 + z_i * sqrt((1-p)/p))
//   none (or xi == 0): x_i, bit-exact, no draws consumed
// Training only. z_i is read from `noise` at the element's linear index.
void apply_noise(Tensor& x, const std::vector<std::vector<std::int64_t>>& groups,
                 const std::vector<double>& s, const NormLayerState& state,
                 const NoiseStream& noise, Tensor* z_out);

// Normality normalization layer. `powered == false` turns the layer into the
// conventional one: identical normalize/affine code path with the power
// transform and noise steps skipped.
class NormLayer {
public:
    NormLayer(std::int64_t channels, GroupingSpec spec, bool powered = true);

    NormLayerState& state() { return state_; }
    const NormLayerState& state() const { return state_; }
    const GroupingSpec& grouping() const { return spec_; }
    bool powered() const { return powered_; }

    // Full training step: normalize -> estimate lambda -> psi -> s (grad
    // exempt) -> additive noise -> affine. Updates running stats (batch mode).
    Tensor forward_train(const Tensor& input, const NoiseStream& noise,
                         ForwardCache* cache);

    // Deterministic inference. Batch mode uses running stats (throws
    // DomainError if never trained); other modes recompute per-group
    // statistics from the input. Never consumes randomness.
    Tensor forward_eval(const Tensor& input) const;

    // Inference split in two: the normalization-slot values (post power
    // transform, pre affine; post normalization for the conventional layer)
    // and the affine step. forward_eval == affine(eval_slot_values(input)).
    // Diagnostics read and perturb the slot values.
    Tensor eval_slot_values(const Tensor& input) const;
    Tensor affine(const Tensor& x) const;

    // Training forward with lambda, s and z frozen from `cache` while the
    // group statistics are recomputed from `input`; this is the function the
    // backward pass differentiates (lambda and s are stop-gradient).
    Tensor forward_frozen(const Tensor& input, const ForwardCache& cache) const;

    // Gradients of the affine/noise/psi/normalization chain. lambda and s are
    // treated as constants; the normalization gradient is the full
    // batch-norm-style one (mean and variance dependence included).
    void backward(const ForwardCache& cache, const Tensor& grad_out,
                  Tensor& grad_input, std::vector<double>& grad_gamma,
                  std::vector<double>& grad_beta) const;

private:
    NormLayerState state_;
    GroupingSpec spec_;
    bool powered_;

    std::int64_t channel_of(std::int64_t linear, const std::vector<std::int64_t>& shape) const;
};

} // namespace normalnorm

#endif
