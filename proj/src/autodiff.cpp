#include "normalnorm/autodiff.hpp"

#include <cmath>

#include "normalnorm/errors.hpp"

namespace normalnorm {

Tape::NodeId Tape::push(Tensor value, std::function<void()> back) {
    Node n;
    n.value = std::move(value);
    n.grad = Tensor(n.value.shape);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::NodeId Tape::leaf(Tensor value) { return push(std::move(value), {}); }

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.shape.size() != 2 || B.shape.size() != 2 || A.shape[1] != B.shape[0]) {
        throw std::invalid_argument("matmul shape mismatch");
    }
    const std::int64_t R = A.shape[0], K = A.shape[1], M = B.shape[1];
    Tensor C({R, M});
    for (std::int64_t i = 0; i < R; ++i) {
        for (std::int64_t k = 0; k < K; ++k) {
            const double av = A.at(i, k);
            if (av == 0.0) continue;
            for (std::int64_t j = 0; j < M; ++j) {
                C.at(i, j) += av * B.at(k, j);
            }
        }
    }
    NodeId out = push(std::move(C), {});
    nodes_[static_cast<std::size_t>(out)].back = [this, a, b, out, R, K, M] {
        const Tensor& gC = grad_ref(out);
        const Tensor& A2 = value(a);
        const Tensor& B2 = value(b);
        Tensor& gA = grad_ref(a);
        Tensor& gB = grad_ref(b);
        for (std::int64_t i = 0; i < R; ++i) {
            for (std::int64_t j = 0; j < M; ++j) {
                const double g = gC.at(i, j);
                if (g == 0.0) continue;
                for (std::int64_t k = 0; k < K; ++k) {
                    gA.at(i, k) += g * B2.at(k, j);
                    gB.at(k, j) += A2.at(i, k) * g;
                }
            }
        }
    };
    return out;
}

Tape::NodeId Tape::add_row(NodeId x, NodeId bias) {
    const Tensor& X = value(x);
    const Tensor& bv = value(bias);
    if (X.shape.size() != 2 || bv.numel() != X.shape[1]) {
        throw std::invalid_argument("add_row shape mismatch");
    }
    const std::int64_t R = X.shape[0], M = X.shape[1];
    Tensor Y({R, M});
    for (std::int64_t i = 0; i < R; ++i)
        for (std::int64_t j = 0; j < M; ++j) Y.at(i, j) = X.at(i, j) + bv[j];
    NodeId out = push(std::move(Y), {});
    nodes_[static_cast<std::size_t>(out)].back = [this, x, bias, out, R, M] {
        const Tensor& gY = grad_ref(out);
        Tensor& gX = grad_ref(x);
        Tensor& gb = grad_ref(bias);
        for (std::int64_t i = 0; i < R; ++i)
            for (std::int64_t j = 0; j < M; ++j) {
                gX.at(i, j) += gY.at(i, j);
                gb[j] += gY.at(i, j);
            }
    };
    return out;
}

Tape::NodeId Tape::relu(NodeId x) {
    const Tensor& X = value(x);
    Tensor Y(X.shape);
    for (std::int64_t i = 0; i < X.numel(); ++i) Y[i] = X[i] > 0.0 ? X[i] : 0.0;
    NodeId out = push(std::move(Y), {});
    nodes_[static_cast<std::size_t>(out)].back = [this, x, out] {
        const Tensor& gY = grad_ref(out);
        const Tensor& X2 = value(x);
        Tensor& gX = grad_ref(x);
        for (std::int64_t i = 0; i < X2.numel(); ++i) {
            if (X2[i] > 0.0) gX[i] += gY[i];
        }
    };
    return out;
}

Tape::NodeId Tape::norm_train(NodeId x, NodeId gamma, NodeId beta, NormLayer& layer,
                              const NoiseStream& noise,
                              std::shared_ptr<ForwardCache>* cache_out) {
    // The canonical parameter storage is the tape leaves; sync into the layer.
    layer.state().gamma = value(gamma).data;
    layer.state().beta = value(beta).data;
    auto cache = std::make_shared<ForwardCache>();
    Tensor Y = layer.forward_train(value(x), noise, cache.get());
    if (cache_out != nullptr) *cache_out = cache;
    NodeId out = push(std::move(Y), {});
    nodes_[static_cast<std::size_t>(out)].back = [this, x, gamma, beta, &layer, cache, out] {
        Tensor gin;
        std::vector<double> ggamma, gbeta;
        layer.backward(*cache, grad_ref(out), gin, ggamma, gbeta);
        Tensor& gX = grad_ref(x);
        for (std::int64_t i = 0; i < gin.numel(); ++i) gX[i] += gin[i];
        Tensor& gG = grad_ref(gamma);
        Tensor& gB = grad_ref(beta);
        for (std::size_t c = 0; c < ggamma.size(); ++c) {
            gG[static_cast<std::int64_t>(c)] += ggamma[c];
            gB[static_cast<std::int64_t>(c)] += gbeta[c];
        }
    };
    return out;
}

Tape::NodeId Tape::norm_frozen(NodeId x, NodeId gamma, NodeId beta, const NormLayer& layer,
                               std::shared_ptr<const ForwardCache> replay) {
    NormLayer& mutable_layer = const_cast<NormLayer&>(layer);
    mutable_layer.state().gamma = value(gamma).data;
    mutable_layer.state().beta = value(beta).data;
    Tensor Y = layer.forward_frozen(value(x), *replay);
    return push(std::move(Y), {}); // forward-only; used by FD oracles
}

Tape::NodeId Tape::softmax_cross_entropy(NodeId logits, std::span<const int> labels) {
    const Tensor& L = value(logits);
    const std::int64_t B = L.shape[0], K = L.shape[1];
    if (static_cast<std::int64_t>(labels.size()) != B) {
        throw std::invalid_argument("labels size does not match batch");
    }
    Tensor P({B, K});
    double loss = 0.0;
    for (std::int64_t i = 0; i < B; ++i) {
        double m = L.at(i, 0);
        for (std::int64_t j = 1; j < K; ++j) m = std::max(m, L.at(i, j));
        double denom = 0.0;
        for (std::int64_t j = 0; j < K; ++j) denom += std::exp(L.at(i, j) - m);
        const double logdenom = std::log(denom);
        for (std::int64_t j = 0; j < K; ++j) {
            P.at(i, j) = std::exp(L.at(i, j) - m) / denom;
        }
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= K) throw std::invalid_argument("label out of range");
        loss -= (L.at(i, y) - m - logdenom);
    }
    loss /= static_cast<double>(B);
    Tensor out_value({1});
    out_value[0] = loss;
    std::vector<int> labels_copy(labels.begin(), labels.end());
    NodeId out = push(std::move(out_value), {});
    auto probs = std::make_shared<Tensor>(std::move(P));
    nodes_[static_cast<std::size_t>(out)].back =
        [this, logits, out, probs, labels_copy, B, K] {
            const double g = grad_ref(out)[0];
            Tensor& gL = grad_ref(logits);
            for (std::int64_t i = 0; i < B; ++i) {
                for (std::int64_t j = 0; j < K; ++j) {
                    double v = probs->at(i, j);
                    if (j == labels_copy[static_cast<std::size_t>(i)]) v -= 1.0;
                    gL.at(i, j) += g * v / static_cast<double>(B);
                }
            }
        };
    return out;
}

void Tape::backward(NodeId root) {
    Tensor& g = grad_ref(root);
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] = 0.0;
    if (g.numel() != 1) {
        throw std::invalid_argument("backward root must be scalar");
    }
    g[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].back) nodes_[i].back();
    }
}

} // namespace normalnorm
