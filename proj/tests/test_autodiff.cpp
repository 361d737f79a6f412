#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "normalnorm/autodiff.hpp"
#include "normalnorm/mlp.hpp"
#include "normalnorm/noise_rng.hpp"

using namespace normalnorm;

namespace {

Tensor random_tensor(std::vector<std::int64_t> shape, std::uint64_t seed) {
    Tensor t(std::move(shape));
    NoiseStream s{seed, 700, 0};
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        t[i] = gaussian_at(s, static_cast<std::uint64_t>(i));
    }
    return t;
}

double skewness(std::span<const double> v) {
    double mu = 0.0;
    for (double x : v) mu += x;
    mu /= static_cast<double>(v.size());
    double m2 = 0.0, m3 = 0.0;
    for (double x : v) {
        const double d = x - mu;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= static_cast<double>(v.size());
    m3 /= static_cast<double>(v.size());
    return m3 / std::pow(m2, 1.5);
}

} // namespace

TEST_CASE("softmax cross entropy matches a scalar reference") {
    const std::int64_t B = 8, K = 5;
    const Tensor logits = random_tensor({B, K}, 1);
    std::vector<int> labels = {0, 3, 2, 4, 1, 1, 0, 2};

    Tape tape;
    const auto lid = tape.leaf(logits);
    const auto loss = tape.softmax_cross_entropy(lid, labels);

    double ref = 0.0;
    for (std::int64_t i = 0; i < B; ++i) {
        double denom = 0.0;
        for (std::int64_t j = 0; j < K; ++j) denom += std::exp(logits.at(i, j));
        ref -= std::log(std::exp(logits.at(i, labels[static_cast<std::size_t>(i)])) / denom);
    }
    ref /= static_cast<double>(B);
    CHECK(std::fabs(tape.value(loss)[0] - ref) <= 1e-10);

    // gradient of the same scalar reference
    tape.backward(loss);
    for (std::int64_t i = 0; i < B; ++i) {
        double denom = 0.0;
        for (std::int64_t j = 0; j < K; ++j) denom += std::exp(logits.at(i, j));
        for (std::int64_t j = 0; j < K; ++j) {
            double g = std::exp(logits.at(i, j)) / denom;
            if (j == labels[static_cast<std::size_t>(i)]) g -= 1.0;
            g /= static_cast<double>(B);
            CHECK(std::fabs(tape.grad(lid).at(i, j) - g) <= 1e-10);
        }
    }
}

TEST_CASE("matmul, add_row and relu gradients against finite differences") {
    const Tensor A = random_tensor({3, 4}, 2);
    const Tensor B = random_tensor({4, 2}, 3);
    const Tensor bias = random_tensor({2}, 4);
    std::vector<int> labels = {1, 0, 1};

    auto loss_at = [&](const Tensor& a, const Tensor& b, const Tensor& bi) {
        Tape t;
        const auto an = t.leaf(a);
        const auto bn = t.leaf(b);
        const auto bin = t.leaf(bi);
        const auto z = t.relu(t.add_row(t.matmul(an, bn), bin));
        return t.value(t.softmax_cross_entropy(z, labels))[0];
    };

    Tape t;
    const auto an = t.leaf(A);
    const auto bn = t.leaf(B);
    const auto bin = t.leaf(bias);
    const auto z = t.relu(t.add_row(t.matmul(an, bn), bin));
    const auto loss = t.softmax_cross_entropy(z, labels);
    t.backward(loss);

    const double d = 1e-6;
    for (std::int64_t i = 0; i < A.numel(); ++i) {
        Tensor up = A, dn = A;
        up[i] += d;
        dn[i] -= d;
        const double fd = (loss_at(up, B, bias) - loss_at(dn, B, bias)) / (2 * d);
        CHECK(std::fabs(fd - t.grad(an)[i]) <= 1e-8);
    }
    for (std::int64_t i = 0; i < B.numel(); ++i) {
        Tensor up = B, dn = B;
        up[i] += d;
        dn[i] -= d;
        const double fd = (loss_at(A, up, bias) - loss_at(A, dn, bias)) / (2 * d);
        CHECK(std::fabs(fd - t.grad(bn)[i]) <= 1e-8);
    }
    for (std::int64_t i = 0; i < bias.numel(); ++i) {
        Tensor up = bias, dn = bias;
        up[i] += d;
        dn[i] -= d;
        const double fd = (loss_at(A, B, up) - loss_at(A, B, dn)) / (2 * d);
        CHECK(std::fabs(fd - t.grad(bin)[i]) <= 1e-8);
    }
}

TEST_CASE("build_mlp determinism and parameter counts") {
    auto spec = MlpSpec::uniform({4, 8, 2}, NormKind::normality);
    const Mlp a = build_mlp(spec, 33);
    const Mlp b = build_mlp(spec, 33);
    REQUIRE(a.params.size() == b.params.size());
    for (std::size_t i = 0; i < a.params.size(); ++i) {
        CHECK(a.params[i].value.data == b.params[i].value.data);
    }
    const Mlp c = build_mlp(spec, 34);
    CHECK(a.params[0].value.data != c.params[0].value.data);

    // 4*8+8 weights+bias, 8*2+2 head, gamma/beta on the hidden layer
    CHECK(a.num_learnable() == 4 * 8 + 8 + 8 * 2 + 2 + 8 + 8);

    // the normality variant adds no learnable parameters over the conventional one
    const Mlp conv = build_mlp(MlpSpec::uniform({4, 8, 2}, NormKind::conventional), 33);
    CHECK(a.num_learnable() == conv.num_learnable());
}

TEST_CASE("gradient_check on a linear network is near machine precision") {
    auto spec = MlpSpec::uniform({3, 2}, NormKind::none); // single linear layer
    Mlp model = build_mlp(spec, 5);
    const Tensor X = random_tensor({6, 3}, 6);
    std::vector<int> labels = {0, 1, 1, 0, 1, 0};
    CHECK(gradient_check(model, X, labels) <= 1e-8);
}

TEST_CASE("gradient_check on a conventional-norm network") {
    auto spec = MlpSpec::uniform({2, 4, 2}, NormKind::conventional);
    spec.grouping = {GroupingMode::batch, 32};
    Mlp model = build_mlp(spec, 7);
    const Tensor X = random_tensor({12, 2}, 8);
    std::vector<int> labels(12);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
    CHECK(gradient_check(model, X, labels) <= 1e-5);
}

TEST_CASE("gradient_check on a normality-norm network") {
    auto spec = MlpSpec::uniform({2, 4, 2}, NormKind::normality);
    spec.grouping = {GroupingMode::batch, 32};
    spec.alpha = 1.0;
    spec.xi = 0.0;
    Mlp model = build_mlp(spec, 9);
    const Tensor X = random_tensor({12, 2}, 10);
    std::vector<int> labels(12);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
    CHECK(gradient_check(model, X, labels) <= 1e-4);
}

TEST_CASE("gradient_check with scaled noise active (frozen draws)") {
    auto spec = MlpSpec::uniform({2, 4, 2}, NormKind::normality);
    spec.grouping = {GroupingMode::batch, 32};
    spec.xi = 0.3;
    Mlp model = build_mlp(spec, 19);
    const Tensor X = random_tensor({12, 2}, 20);
    std::vector<int> labels(12);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
    CHECK(gradient_check(model, X, labels) <= 1e-4);
}

TEST_CASE("training separable blobs reaches 99 percent") {
    const Dataset blobs = synth_dataset(DataKind::blobs, 512, 3);
    auto spec = MlpSpec::uniform({2, 16, 3}, NormKind::normality);
    spec.grouping = {GroupingMode::batch, 32};
    Mlp model = build_mlp(spec, 1);
    TrainConfig cfg;
    cfg.epochs = 50; // 4 steps per epoch = 200 steps
    cfg.batch_size = 128;
    cfg.lr = 0.05;
    cfg.lr_decay_interval = 40;
    cfg.seed = 11;
    const TrainLog log = train(model, blobs, blobs, cfg);
    CHECK(log.epochs.back().train_acc >= 0.99);
}

TEST_CASE("lr=0 leaves parameters unchanged") {
    const Dataset blobs = synth_dataset(DataKind::blobs, 128, 5);
    auto spec = MlpSpec::uniform({2, 8, 3}, NormKind::conventional);
    Mlp model = build_mlp(spec, 2);
    std::vector<Tensor> before;
    for (const auto& p : model.params) before.push_back(p.value);
    TrainConfig cfg;
    cfg.lr = 0.0;
    cfg.epochs = 3;
    cfg.seed = 7;
    train(model, blobs, blobs, cfg);
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        CHECK(model.params[i].value.data == before[i].data);
    }
}

TEST_CASE("weight decay shrinks weights by exactly (1 - lr*wd) on zero gradient") {
    auto spec = MlpSpec::uniform({3, 4, 2}, NormKind::none);
    Mlp model = build_mlp(spec, 3);
    std::vector<Tensor> before;
    for (const auto& p : model.params) before.push_back(p.value);
    for (auto& p : model.params) {
        for (std::int64_t i = 0; i < p.grad.numel(); ++i) p.grad[i] = 0.0;
    }
    TrainConfig cfg;
    cfg.weight_decay = 5e-4;
    cfg.momentum = 0.9; // velocity starts at zero so one step is pure decay
    sgd_step(model, cfg, /*lr=*/0.05);
    const double factor = 1.0 - 0.05 * 5e-4;
    for (std::size_t p = 0; p < model.params.size(); ++p) {
        for (std::int64_t i = 0; i < before[p].numel(); ++i) {
            CHECK(model.params[p].value[i] ==
                  doctest::Approx(before[p][i] * factor).epsilon(1e-15));
        }
    }
}

TEST_CASE("synthetic datasets are deterministic") {
    for (auto kind : {DataKind::skewed_features, DataKind::blobs, DataKind::two_moons}) {
        const Dataset a = synth_dataset(kind, 256, 9);
        const Dataset b = synth_dataset(kind, 256, 9);
        CHECK(a.X.data == b.X.data);
        CHECK(a.labels == b.labels);
        const Dataset c = synth_dataset(kind, 256, 10);
        CHECK(a.X.data != c.X.data);
    }
}

TEST_CASE("blobs are separable by nearest neighbor") {
    const Dataset d = synth_dataset(DataKind::blobs, 200, 21);
    std::int64_t hits = 0;
    for (std::int64_t i = 0; i < d.n(); ++i) {
        double best = 1e300;
        int best_label = -1;
        for (std::int64_t j = 0; j < d.n(); ++j) {
            if (j == i) continue;
            const double dx = d.X.at(i, 0) - d.X.at(j, 0);
            const double dy = d.X.at(i, 1) - d.X.at(j, 1);
            const double dist = dx * dx + dy * dy;
            if (dist < best) {
                best = dist;
                best_label = d.labels[static_cast<std::size_t>(j)];
            }
        }
        if (best_label == d.labels[static_cast<std::size_t>(i)]) ++hits;
    }
    CHECK(static_cast<double>(hits) / static_cast<double>(d.n()) >= 0.99);
}

TEST_CASE("skewed features have strong average skewness") {
    const Dataset d = synth_dataset(DataKind::skewed_features, 4096, 13);
    double total = 0.0;
    for (std::int64_t c = 0; c < d.dim(); ++c) {
        std::vector<double> col(static_cast<std::size_t>(d.n()));
        for (std::int64_t r = 0; r < d.n(); ++r) {
            col[static_cast<std::size_t>(r)] = d.X.at(r, c);
        }
        total += std::fabs(skewness(col));
    }
    CHECK(total / static_cast<double>(d.dim()) > 1.0);
}

TEST_CASE("training is deterministic end to end") {
    const Dataset data = synth_dataset(DataKind::skewed_features, 512, 17);
    auto spec = MlpSpec::uniform({12, 16, 4}, NormKind::normality);
    spec.xi = 0.1;
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 23;

    Mlp m1 = build_mlp(spec, cfg.seed);
    const TrainLog l1 = train(m1, data, data, cfg);
    Mlp m2 = build_mlp(spec, cfg.seed);
    const TrainLog l2 = train(m2, data, data, cfg);

    REQUIRE(l1.epochs.size() == l2.epochs.size());
    for (std::size_t e = 0; e < l1.epochs.size(); ++e) {
        CHECK(l1.epochs[e].train_loss == l2.epochs[e].train_loss);
        CHECK(l1.epochs[e].train_acc == l2.epochs[e].train_acc);
        CHECK(l1.epochs[e].val_acc == l2.epochs[e].val_acc);
    }
    for (std::size_t p = 0; p < m1.params.size(); ++p) {
        CHECK(m1.params[p].value.data == m2.params[p].value.data);
    }
}

TEST_CASE("divergence is reported, not swallowed") {
    const Dataset data = synth_dataset(DataKind::skewed_features, 256, 29);
    auto spec = MlpSpec::uniform({12, 8, 4}, NormKind::none);
    Mlp model = build_mlp(spec, 1);
    TrainConfig cfg;
    cfg.lr = 1e150; // guaranteed overflow within a couple of steps
    cfg.epochs = 2;
    cfg.seed = 5;
    CHECK_THROWS_AS(train(model, data, data, cfg), DomainError);
}
