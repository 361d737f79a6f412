#ifndef NORMALNORM_MLP_HPP
#define NORMALNORM_MLP_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "normalnorm/normalization.hpp"
#include "normalnorm/tensor.hpp"

namespace normalnorm {

enum class NormKind { none, conventional, normality };

NormKind norm_kind_from_string(const std::string& s);
std::string to_string(NormKind k);

// widths is the full chain [in, hidden..., out]; the last width is the
// classifier head. Hidden layers get a normalization slot (per norm_kinds)
// before the ReLU; the head gets neither.
struct MlpSpec {
    std::vector<std::int64_t> widths;
    std::vector<NormKind> norm_kinds; // one per hidden layer
    GroupingSpec grouping;
    double eps = 1e-5;
    double xi = 0.0;
    double alpha = 1.0;
    NoiseMode noise_mode = NoiseMode::scaled;
    double p = 1.0;
    double momentum = 0.1;

    static MlpSpec uniform(std::vector<std::int64_t> widths, NormKind kind);
    std::int64_t num_hidden() const {
        return static_cast<std::int64_t>(widths.size()) - 2;
    }
    std::int64_t num_classes() const { return widths.back(); }
};

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor velocity;
};

struct Mlp {
    MlpSpec spec;
    std::vector<Parameter> params;
    // One entry per linear layer; null when the layer has no norm slot.
    std::vector<std::unique_ptr<NormLayer>> norms;
    // Parameter indices per linear layer: {weight, bias, gamma, beta};
    // gamma/beta are -1 for layers without a norm slot.
    struct LayerRefs {
        int weight = -1, bias = -1, gamma = -1, beta = -1;
    };
    std::vector<LayerRefs> layers;

    // Noise stream addressing for training forwards: layer li draws from
    // stream kStreamLayerNoise + li with counter_base = step * capacity * width.
    std::uint64_t noise_seed = 0;
    std::int64_t noise_batch_capacity = 128;

    std::int64_t num_linear() const { return static_cast<std::int64_t>(layers.size()); }
    std::int64_t num_learnable() const;
    // Copies tape-side gamma/beta values into the layer states (used before
    // tape-free eval forwards).
    void sync_norm_params();
};

// Deterministic initialization: W ~ U(-a, a) with a = sqrt(6 / fan_in),
// biases zero, gamma one, beta zero.
Mlp build_mlp(const MlpSpec& spec, std::uint64_t seed);

struct Dataset {
    Tensor X; // (n, d)
    std::vector<int> labels;
    std::int64_t num_classes = 0;
    std::int64_t n() const { return X.shape.empty() ? 0 : X.shape[0]; }
    std::int64_t dim() const { return X.shape.size() > 1 ? X.shape[1] : 0; }
};

enum class DataKind { skewed_features, blobs, two_moons };
DataKind data_kind_from_string(const std::string& s);

// Deterministic synthetic tasks. skewed_features draws class-conditional
// signed lognormal features (heavy per-feature skew) over sub-clustered
// class means; blobs are well-separated isotropic Gaussians; two_moons is
// the usual interleaved pair of arcs.
Dataset synth_dataset(DataKind kind, std::int64_t n, std::uint64_t seed);

struct TrainConfig {
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::int64_t batch_size = 128;
    std::int64_t epochs = 40;
    std::uint64_t seed = 0;
    double lr_decay_factor = 10.0;    // divide lr by this ...
    std::int64_t lr_decay_interval = 20; // ... every this many epochs
};

struct EpochStats {
    std::int64_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
};

struct TrainLog {
    std::vector<EpochStats> epochs;
};

// SGD with momentum and weight decay, step-decay schedule. Deterministic in
// config.seed (init, shuffling and noise all run on counter streams).
// Throws DomainError if the loss turns non-finite.
TrainLog train(Mlp& model, const Dataset& train_data, const Dataset& val_data,
               const TrainConfig& config);

// One SGD update from the gradients currently stored in the parameters:
//   g = grad + weight_decay * value; velocity = momentum * velocity + g;
//   value -= lr * velocity.
void sgd_step(Mlp& model, const TrainConfig& config, double lr);

// Eval-mode logits (no tape, no randomness).
Tensor eval_logits(const Mlp& model, const Tensor& X);
double accuracy(const Mlp& model, const Dataset& data, std::int64_t batch_size = 512);

// Eval-mode forward that exposes each hidden layer's normalization-slot
// values (see NormLayer::eval_slot_values; the raw pre-activation for
// norm-free layers). The hook may mutate the slot values in place; the
// mutated values feed the rest of the forward.
using SlotHook = std::function<void(std::int64_t layer, Tensor& slot)>;
Tensor eval_forward_hooked(const Mlp& model, const Tensor& X, const SlotHook& hook);

// Worst relative gradient error of backprop vs central finite differences
// (64-bit), with lambda, s and noise frozen from the unperturbed forward.
// The error is per parameter tensor: max_i |fd_i - an_i| / (max_i |an_i| + 1e-12),
// maximized over tensors.
double gradient_check(Mlp& model, const Tensor& X, std::span<const int> labels,
                      double delta = 1e-5);

// One training loss+backward evaluation used by trainers and the checker.
double loss_and_gradients(Mlp& model, const Tensor& X, std::span<const int> labels,
                          std::uint64_t step,
                          std::vector<std::shared_ptr<ForwardCache>>* caches_out,
                          double* acc_out);

} // namespace normalnorm

#endif
