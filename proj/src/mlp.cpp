#include "normalnorm/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "normalnorm/autodiff.hpp"
#include "normalnorm/errors.hpp"
#include "normalnorm/noise_rng.hpp"

namespace normalnorm {

NormKind norm_kind_from_string(const std::string& s) {
    if (s == "none") return NormKind::none;
    if (s == "conventional") return NormKind::conventional;
    if (s == "normality") return NormKind::normality;
    throw std::invalid_argument("unknown norm kind: " + s);
}

std::string to_string(NormKind k) {
    switch (k) {
        case NormKind::none: return "none";
        case NormKind::conventional: return "conventional";
        case NormKind::normality: return "normality";
    }
    return "?";
}

MlpSpec MlpSpec::uniform(std::vector<std::int64_t> widths, NormKind kind) {
    MlpSpec s;
    s.widths = std::move(widths);
    if (s.widths.size() < 2) {
        throw std::invalid_argument("widths needs at least [in, out]");
    }
    s.norm_kinds.assign(static_cast<std::size_t>(s.num_hidden()), kind);
    return s;
}

std::int64_t Mlp::num_learnable() const {
    std::int64_t n = 0;
    for (const auto& p : params) n += p.value.numel();
    return n;
}

void Mlp::sync_norm_params() {
    for (std::size_t li = 0; li < layers.size(); ++li) {
        if (norms[li] == nullptr) continue;
        norms[li]->state().gamma = params[static_cast<std::size_t>(layers[li].gamma)].value.data;
        norms[li]->state().beta = params[static_cast<std::size_t>(layers[li].beta)].value.data;
    }
}

Mlp build_mlp(const MlpSpec& spec, std::uint64_t seed) {
    if (spec.widths.size() < 2) {
        throw std::invalid_argument("widths needs at least [in, out]");
    }
    for (auto w : spec.widths) {
        if (w < 1) throw std::invalid_argument("widths must be >= 1");
    }
    if (static_cast<std::int64_t>(spec.norm_kinds.size()) != spec.num_hidden()) {
        throw std::invalid_argument("norm_kinds must have one entry per hidden layer");
    }

    Mlp m;
    m.spec = spec;
    const std::int64_t L = static_cast<std::int64_t>(spec.widths.size()) - 1;
    int param_index = 0;
    for (std::int64_t li = 0; li < L; ++li) {
        const std::int64_t fan_in = spec.widths[static_cast<std::size_t>(li)];
        const std::int64_t fan_out = spec.widths[static_cast<std::size_t>(li + 1)];
        Mlp::LayerRefs refs;

        Parameter W;
        W.name = "layer" + std::to_string(li) + "/weight";
        W.value = Tensor({fan_in, fan_out});
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in));
        NoiseStream init{seed, kStreamInit + static_cast<std::uint64_t>(param_index), 0};
        for (std::int64_t i = 0; i < W.value.numel(); ++i) {
            W.value[i] = a * (2.0 * uniform_at(init, static_cast<std::uint64_t>(i)) - 1.0);
        }
        W.grad = Tensor(W.value.shape);
        W.velocity = Tensor(W.value.shape);
        refs.weight = param_index++;
        m.params.push_back(std::move(W));

        Parameter b;
        b.name = "layer" + std::to_string(li) + "/bias";
        b.value = Tensor({fan_out});
        b.grad = Tensor(b.value.shape);
        b.velocity = Tensor(b.value.shape);
        refs.bias = param_index++;
        m.params.push_back(std::move(b));

        const bool hidden = li < L - 1;
        const NormKind kind = hidden ? spec.norm_kinds[static_cast<std::size_t>(li)]
                                     : NormKind::none;
        if (hidden && kind != NormKind::none) {
            auto layer = std::make_unique<NormLayer>(fan_out, spec.grouping,
                                                     kind == NormKind::normality);
            layer->state().eps = spec.eps;
            layer->state().xi = kind == NormKind::normality ? spec.xi : 0.0;
            layer->state().alpha = kind == NormKind::normality ? spec.alpha : 0.0;
            layer->state().noise_mode = spec.noise_mode;
            layer->state().p = spec.p;
            layer->state().momentum = spec.momentum;
            m.norms.push_back(std::move(layer));

            Parameter g;
            g.name = "norm" + std::to_string(li) + "/gamma";
            g.value = Tensor({fan_out});
            for (std::int64_t i = 0; i < fan_out; ++i) g.value[i] = 1.0;
            g.grad = Tensor(g.value.shape);
            g.velocity = Tensor(g.value.shape);
            refs.gamma = param_index++;
            m.params.push_back(std::move(g));

            Parameter be;
            be.name = "norm" + std::to_string(li) + "/beta";
            be.value = Tensor({fan_out});
            be.grad = Tensor(be.value.shape);
            be.velocity = Tensor(be.value.shape);
            refs.beta = param_index++;
            m.params.push_back(std::move(be));
        } else {
            m.norms.push_back(nullptr);
        }
        m.layers.push_back(refs);
    }
    return m;
}

DataKind data_kind_from_string(const std::string& s) {
    if (s == "skewed" || s == "skewed-features" || s == "skewed_features")
        return DataKind::skewed_features;
    if (s == "blobs") return DataKind::blobs;
    if (s == "two-moons" || s == "two_moons" || s == "moons") return DataKind::two_moons;
    throw std::invalid_argument("unknown dataset kind: " + s);
}

namespace {

Dataset make_skewed(std::int64_t n, std::uint64_t seed) {
    // 12 features, 4 classes, 2 sub-clusters per class; per-feature signed
    // lognormal noise so every marginal is heavily skewed.
    const std::int64_t d = 12, K = 4, clusters = 2;
    const double sep = 0.4, log_sigma = 1.5;

    NoiseStream meta{seed, kStreamData, 0};
    std::vector<double> means(static_cast<std::size_t>(K * clusters * d));
    for (std::size_t i = 0; i < means.size(); ++i) {
        means[i] = sep * gaussian_at(meta, static_cast<std::uint64_t>(i));
    }
    std::vector<double> scales(static_cast<std::size_t>(d));
    std::vector<double> signs(static_cast<std::size_t>(d));
    for (std::int64_t j = 0; j < d; ++j) {
        scales[static_cast<std::size_t>(j)] =
            0.5 + uniform_at(meta, 100000 + static_cast<std::uint64_t>(j));
        signs[static_cast<std::size_t>(j)] =
            uniform_at(meta, 200000 + static_cast<std::uint64_t>(j)) < 0.5 ? -1.0 : 1.0;
    }

    Dataset ds;
    ds.num_classes = K;
    ds.X = Tensor({n, d});
    ds.labels.resize(static_cast<std::size_t>(n));
    NoiseStream draw{seed, kStreamData + 1, 0};
    for (std::int64_t i = 0; i < n; ++i) {
        const auto y = static_cast<std::int64_t>(
            uniform_index_at(draw, static_cast<std::uint64_t>(i) * 2, static_cast<std::uint64_t>(K)));
        const auto cl = static_cast<std::int64_t>(
            uniform_index_at(draw, static_cast<std::uint64_t>(i) * 2 + 1,
                             static_cast<std::uint64_t>(clusters)));
        ds.labels[static_cast<std::size_t>(i)] = static_cast<int>(y);
        for (std::int64_t j = 0; j < d; ++j) {
            const double e = std::exp(
                log_sigma * gaussian_at(draw, 1000000 + static_cast<std::uint64_t>(i * d + j)));
            ds.X.at(i, j) = means[static_cast<std::size_t>((y * clusters + cl) * d + j)] +
                            signs[static_cast<std::size_t>(j)] *
                                scales[static_cast<std::size_t>(j)] * e;
        }
    }
    return ds;
}

Dataset make_blobs(std::int64_t n, std::uint64_t seed) {
    const std::int64_t K = 3;
    const double radius = 10.0; // 10 sigma separation, unit-variance blobs
    Dataset ds;
    ds.num_classes = K;
    ds.X = Tensor({n, 2});
    ds.labels.resize(static_cast<std::size_t>(n));
    NoiseStream draw{seed, kStreamData + 2, 0};
    for (std::int64_t i = 0; i < n; ++i) {
        const auto y = static_cast<std::int64_t>(
            uniform_index_at(draw, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(K)));
        ds.labels[static_cast<std::size_t>(i)] = static_cast<int>(y);
        const double ang = 2.0 * std::numbers::pi * static_cast<double>(y) /
                           static_cast<double>(K);
        ds.X.at(i, 0) = radius * std::cos(ang) +
                        gaussian_at(draw, 1000000 + static_cast<std::uint64_t>(2 * i));
        ds.X.at(i, 1) = radius * std::sin(ang) +
                        gaussian_at(draw, 1000000 + static_cast<std::uint64_t>(2 * i + 1));
    }
    return ds;
}

Dataset make_two_moons(std::int64_t n, std::uint64_t seed) {
    Dataset ds;
    ds.num_classes = 2;
    ds.X = Tensor({n, 2});
    ds.labels.resize(static_cast<std::size_t>(n));
    NoiseStream draw{seed, kStreamData + 3, 0};
    for (std::int64_t i = 0; i < n; ++i) {
        const int y = static_cast<int>(
            uniform_index_at(draw, static_cast<std::uint64_t>(i), 2));
        ds.labels[static_cast<std::size_t>(i)] = y;
        const double t = std::numbers::pi * uniform_at(draw, 1000000 + static_cast<std::uint64_t>(i));
        double px, py;
        if (y == 0) {
            px = std::cos(t);
            py = std::sin(t);
        } else {
            px = 1.0 - std::cos(t);
            py = 0.5 - std::sin(t);
        }
        ds.X.at(i, 0) = px + 0.1 * gaussian_at(draw, 2000000 + static_cast<std::uint64_t>(2 * i));
        ds.X.at(i, 1) = py + 0.1 * gaussian_at(draw, 2000000 + static_cast<std::uint64_t>(2 * i + 1));
    }
    return ds;
}

} // namespace

Dataset synth_dataset(DataKind kind, std::int64_t n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("dataset size must be positive");
    switch (kind) {
        case DataKind::skewed_features: return make_skewed(n, seed);
        case DataKind::blobs: return make_blobs(n, seed);
        case DataKind::two_moons: return make_two_moons(n, seed);
    }
    throw std::invalid_argument("unknown dataset kind");
}

namespace {

Tensor slice_rows(const Tensor& X, std::span<const std::int64_t> rows) {
    Tensor out({static_cast<std::int64_t>(rows.size()), X.shape[1]});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::int64_t c = 0; c < X.shape[1]; ++c) {
            out.at(static_cast<std::int64_t>(r), c) = X.at(rows[r], c);
        }
    }
    return out;
}

} // namespace

double loss_and_gradients(Mlp& model, const Tensor& X, std::span<const int> labels,
                          std::uint64_t step,
                          std::vector<std::shared_ptr<ForwardCache>>* caches_out,
                          double* acc_out) {
    Tape tape;
    const std::int64_t L = model.num_linear();
    std::vector<Tape::NodeId> param_nodes(model.params.size());
    for (std::size_t p = 0; p < model.params.size(); ++p) {
        param_nodes[p] = tape.leaf(model.params[p].value);
    }
    if (caches_out != nullptr) {
        caches_out->assign(static_cast<std::size_t>(L), nullptr);
    }

    Tape::NodeId a = tape.leaf(X);
    Tape::NodeId logits = a;
    for (std::int64_t li = 0; li < L; ++li) {
        const auto& refs = model.layers[static_cast<std::size_t>(li)];
        Tape::NodeId z = tape.add_row(
            tape.matmul(a, param_nodes[static_cast<std::size_t>(refs.weight)]),
            param_nodes[static_cast<std::size_t>(refs.bias)]);
        if (model.norms[static_cast<std::size_t>(li)] != nullptr) {
            const std::int64_t width = model.spec.widths[static_cast<std::size_t>(li + 1)];
            NoiseStream stream{
                model.noise_seed,
                kStreamLayerNoise + static_cast<std::uint64_t>(li),
                step * static_cast<std::uint64_t>(model.noise_batch_capacity * width)};
            std::shared_ptr<ForwardCache> cache;
            z = tape.norm_train(z, param_nodes[static_cast<std::size_t>(refs.gamma)],
                                param_nodes[static_cast<std::size_t>(refs.beta)],
                                *model.norms[static_cast<std::size_t>(li)], stream, &cache);
            if (caches_out != nullptr) {
                (*caches_out)[static_cast<std::size_t>(li)] = cache;
            }
        }
        if (li < L - 1) {
            a = tape.relu(z);
        } else {
            logits = z;
        }
    }

    const Tape::NodeId loss_node = tape.softmax_cross_entropy(logits, labels);
    const double loss = tape.value(loss_node)[0];
    if (!std::isfinite(loss)) {
        throw DomainError("training diverged: non-finite loss");
    }
    if (acc_out != nullptr) {
        const Tensor& lg = tape.value(logits);
        std::int64_t hits = 0;
        for (std::int64_t i = 0; i < lg.shape[0]; ++i) {
            std::int64_t best = 0;
            for (std::int64_t j = 1; j < lg.shape[1]; ++j) {
                if (lg.at(i, j) > lg.at(i, best)) best = j;
            }
            if (best == labels[static_cast<std::size_t>(i)]) ++hits;
        }
        *acc_out = static_cast<double>(hits) / static_cast<double>(lg.shape[0]);
    }

    tape.backward(loss_node);
    for (std::size_t p = 0; p < model.params.size(); ++p) {
        model.params[p].grad = tape.grad(param_nodes[p]);
    }
    return loss;
}

Tensor eval_forward_hooked(const Mlp& model, const Tensor& X, const SlotHook& hook) {
    Tensor a = X;
    const std::int64_t L = model.num_linear();
    for (std::int64_t li = 0; li < L; ++li) {
        const auto& refs = model.layers[static_cast<std::size_t>(li)];
        const Tensor& W = model.params[static_cast<std::size_t>(refs.weight)].value;
        const Tensor& b = model.params[static_cast<std::size_t>(refs.bias)].value;
        Tensor z({a.shape[0], W.shape[1]});
        for (std::int64_t i = 0; i < a.shape[0]; ++i) {
            for (std::int64_t k = 0; k < W.shape[0]; ++k) {
                const double av = a.at(i, k);
                if (av == 0.0) continue;
                for (std::int64_t j = 0; j < W.shape[1]; ++j) {
                    z.at(i, j) += av * W.at(k, j);
                }
            }
            for (std::int64_t j = 0; j < W.shape[1]; ++j) z.at(i, j) += b[j];
        }
        const NormLayer* norm = model.norms[static_cast<std::size_t>(li)].get();
        const bool hidden = li < L - 1;
        if (norm != nullptr) {
            Tensor slot = norm->eval_slot_values(z);
            if (hook) hook(li, slot);
            z = norm->affine(slot);
        } else if (hidden && hook) {
            hook(li, z); // norm-free slot is the pre-activation itself
        }
        if (hidden) {
            for (std::int64_t i = 0; i < z.numel(); ++i) {
                z[i] = z[i] > 0.0 ? z[i] : 0.0;
            }
        }
        a = std::move(z);
    }
    return a;
}

Tensor eval_logits(const Mlp& model, const Tensor& X) {
    return eval_forward_hooked(model, X, {});
}

double accuracy(const Mlp& model, const Dataset& data, std::int64_t batch_size) {
    std::int64_t hits = 0;
    for (std::int64_t start = 0; start < data.n(); start += batch_size) {
        const std::int64_t stop = std::min(data.n(), start + batch_size);
        std::vector<std::int64_t> rows;
        rows.reserve(static_cast<std::size_t>(stop - start));
        for (std::int64_t i = start; i < stop; ++i) rows.push_back(i);
        const Tensor logits = eval_logits(model, slice_rows(data.X, rows));
        for (std::int64_t i = 0; i < logits.shape[0]; ++i) {
            std::int64_t best = 0;
            for (std::int64_t j = 1; j < logits.shape[1]; ++j) {
                if (logits.at(i, j) > logits.at(i, best)) best = j;
            }
            if (best == data.labels[static_cast<std::size_t>(start + i)]) ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(data.n());
}

void sgd_step(Mlp& model, const TrainConfig& config, double lr) {
    for (auto& p : model.params) {
        for (std::int64_t i = 0; i < p.value.numel(); ++i) {
            const double g = p.grad[i] + config.weight_decay * p.value[i];
            p.velocity[i] = config.momentum * p.velocity[i] + g;
            p.value[i] -= lr * p.velocity[i];
        }
    }
}

TrainLog train(Mlp& model, const Dataset& train_data, const Dataset& val_data,
               const TrainConfig& config) {
    if (train_data.n() == 0) throw DomainError("training set is empty");
    for (int y : train_data.labels) {
        if (y < 0 || y >= train_data.num_classes) {
            throw DomainError("label out of range");
        }
    }
    model.noise_seed = config.seed;
    model.noise_batch_capacity = config.batch_size;

    TrainLog log;
    const std::int64_t n = train_data.n();
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::uint64_t step = 0;

    for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = config.lr /
                          std::pow(config.lr_decay_factor,
                                   static_cast<double>(epoch / config.lr_decay_interval));
        for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        NoiseStream shuffle{config.seed, kStreamShuffle,
                            static_cast<std::uint64_t>(epoch) * static_cast<std::uint64_t>(n)};
        for (std::int64_t i = n - 1; i > 0; --i) {
            const auto j = static_cast<std::int64_t>(uniform_index_at(
                shuffle, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(i + 1)));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }

        double loss_sum = 0.0;
        double acc_sum = 0.0;
        std::int64_t batches = 0;
        for (std::int64_t start = 0; start < n; start += config.batch_size) {
            const std::int64_t stop = std::min(n, start + config.batch_size);
            if (stop - start < 2) continue; // variance needs >= 2 per group
            std::vector<std::int64_t> rows(order.begin() + start, order.begin() + stop);
            Tensor X = slice_rows(train_data.X, rows);
            std::vector<int> yb(static_cast<std::size_t>(stop - start));
            for (std::size_t k = 0; k < yb.size(); ++k) {
                yb[k] = train_data.labels[static_cast<std::size_t>(rows[k])];
            }
            double batch_acc = 0.0;
            const double loss =
                loss_and_gradients(model, X, yb, step, nullptr, &batch_acc);
            loss_sum += loss;
            acc_sum += batch_acc;
            ++batches;
            ++step;
            sgd_step(model, config, lr);
        }

        model.sync_norm_params();
        EpochStats st;
        st.epoch = epoch;
        st.lr = lr;
        st.train_loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
        st.train_acc = batches > 0 ? acc_sum / static_cast<double>(batches) : 0.0;
        st.val_acc = val_data.n() > 0 ? accuracy(model, val_data) : 0.0;
        log.epochs.push_back(st);
    }
    return log;
}

double gradient_check(Mlp& model, const Tensor& X, std::span<const int> labels,
                      double delta) {
    std::vector<std::shared_ptr<ForwardCache>> caches;
    loss_and_gradients(model, X, labels, /*step=*/0, &caches, nullptr);
    std::vector<Tensor> analytic;
    analytic.reserve(model.params.size());
    for (const auto& p : model.params) analytic.push_back(p.grad);

    auto frozen_loss = [&]() {
        Tape tape;
        std::vector<Tape::NodeId> param_nodes(model.params.size());
        for (std::size_t p = 0; p < model.params.size(); ++p) {
            param_nodes[p] = tape.leaf(model.params[p].value);
        }
        Tape::NodeId a = tape.leaf(X);
        Tape::NodeId logits = a;
        const std::int64_t L = model.num_linear();
        for (std::int64_t li = 0; li < L; ++li) {
            const auto& refs = model.layers[static_cast<std::size_t>(li)];
            Tape::NodeId z = tape.add_row(
                tape.matmul(a, param_nodes[static_cast<std::size_t>(refs.weight)]),
                param_nodes[static_cast<std::size_t>(refs.bias)]);
            if (model.norms[static_cast<std::size_t>(li)] != nullptr) {
                z = tape.norm_frozen(z, param_nodes[static_cast<std::size_t>(refs.gamma)],
                                     param_nodes[static_cast<std::size_t>(refs.beta)],
                                     *model.norms[static_cast<std::size_t>(li)],
                                     caches[static_cast<std::size_t>(li)]);
            }
            if (li < L - 1) {
                a = tape.relu(z);
            } else {
                logits = z;
            }
        }
        return tape.value(tape.softmax_cross_entropy(logits, labels))[0];
    };

    double worst = 0.0;
    for (std::size_t p = 0; p < model.params.size(); ++p) {
        double max_abs_an = 0.0;
        double max_abs_diff = 0.0;
        for (std::int64_t i = 0; i < model.params[p].value.numel(); ++i) {
            const double save = model.params[p].value[i];
            model.params[p].value[i] = save + delta;
            const double lp = frozen_loss();
            model.params[p].value[i] = save - delta;
            const double lm = frozen_loss();
            model.params[p].value[i] = save;
            const double fd = (lp - lm) / (2.0 * delta);
            max_abs_an = std::max(max_abs_an, std::fabs(analytic[p][i]));
            max_abs_diff = std::max(max_abs_diff, std::fabs(fd - analytic[p][i]));
        }
        worst = std::max(worst, max_abs_diff / (max_abs_an + 1e-12));
    }
    model.sync_norm_params();
    return worst;
}

} // namespace normalnorm
