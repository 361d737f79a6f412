#ifndef NORMALNORM_AUTODIFF_HPP
#define NORMALNORM_AUTODIFF_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "normalnorm/normalization.hpp"
#include "normalnorm/tensor.hpp"

namespace normalnorm {

// Reverse-mode tape over dense tensors. Node creation order is a topological
// order of the DAG, so the backward sweep walks ids in reverse and visits
// each node exactly once, with a fixed accumulation order.
class Tape {
public:
    using NodeId = std::int32_t;

    NodeId leaf(Tensor value);

    // (B, K) x (K, M) -> (B, M)
    NodeId matmul(NodeId a, NodeId b);
    // (B, M) + row vector (M) broadcast over rows
    NodeId add_row(NodeId x, NodeId bias);
    NodeId relu(NodeId x);

    // Normality/conventional normalization as one composite node. gamma and
    // beta leaves receive their gradients through the layer's backward.
    // Training mode estimates lambda and draws noise (cache captured);
    // frozen mode replays lambda/s/z from `replay` while re-deriving the
    // group statistics from the input, matching the stop-gradient contract.
    NodeId norm_train(NodeId x, NodeId gamma, NodeId beta, NormLayer& layer,
                      const NoiseStream& noise,
                      std::shared_ptr<ForwardCache>* cache_out = nullptr);
    NodeId norm_frozen(NodeId x, NodeId gamma, NodeId beta, const NormLayer& layer,
                       std::shared_ptr<const ForwardCache> replay);

    // Mean softmax cross-entropy over the batch; scalar node.
    NodeId softmax_cross_entropy(NodeId logits, std::span<const int> labels);

    const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Tensor& grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
    std::size_t size() const { return nodes_.size(); }

    // Seeds d(root) = 1 and propagates to all parents.
    void backward(NodeId root);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void()> back; // empty for leaves
    };
    std::vector<Node> nodes_;

    NodeId push(Tensor value, std::function<void()> back);
    Tensor& grad_ref(NodeId id) { return nodes_[static_cast<std::size_t>(id)].grad; }
};

} // namespace normalnorm

#endif
