#include "normalnorm/normalization.hpp"

#include <cmath>
#include <numbers>

#include "normalnorm/errors.hpp"
#include "normalnorm/parallel.hpp"

namespace normalnorm {

namespace {

// Below this group variance the normalized sample no longer satisfies the
// estimator's preconditions; the layer falls back to the identity transform.
constexpr double kGroupVarianceFloor = 1e-3;

struct GroupStats {
    double mean = 0.0;
    double var = 0.0;
};

GroupStats stats_of(const Tensor& u, const std::vector<std::int64_t>& idx) {
    GroupStats st;
    const double n = static_cast<double>(idx.size());
    double sum = 0.0;
    for (auto i : idx) sum += u[i];
    st.mean = sum / n;
    double ss = 0.0;
    for (auto i : idx) {
        const double d = u[i] - st.mean;
        ss += d * d;
    }
    st.var = ss / n;
    return st;
}

LambdaEstimate estimate_group_lambda(const std::vector<double>& h, double alpha) {
    LambdaEstimate est;
    est.alpha_used = alpha;
    const double n = static_cast<double>(h.size());
    double sum = 0.0;
    for (double v : h) sum += v;
    const double mean = sum / n;
    double ss = 0.0;
    for (double v : h) {
        const double d = v - mean;
        ss += d * d;
    }
    const double var = ss / n;
    if (std::fabs(mean) > 1e-3 || std::fabs(var - 1.0) > 1e-2) {
        // Degenerate group; identity is the safe no-op.
        est.lambda_hat = 1.0;
        est.clamped = true;
        return est;
    }
    const QuadraticCoeffs q = nll_quadratic_core(h, mean, var);
    est.nll_at_1 = q.l0;
    est.d1 = q.d1;
    est.d2 = q.d2;
    if (q.d2 <= kCurvatureFloor) {
        est.lambda_hat = 1.0;
        est.clamped = true;
        return est;
    }
    double lam = 1.0 - alpha * q.d1 / q.d2;
    if (lam < kLambdaMin) {
        lam = kLambdaMin;
        est.clamped = true;
    } else if (lam > kLambdaMax) {
        lam = kLambdaMax;
        est.clamped = true;
    }
    est.lambda_hat = lam;
    return est;
}

inline double dropout_factor(double p) {
    return std::sqrt((1.0 - p) / p);
}

constexpr double kHalfNormalMean = 0.79788456080286535588; // sqrt(2/pi)

} // namespace

GroupingMode grouping_mode_from_string(const std::string& s) {
    if (s == "batch") return GroupingMode::batch;
    if (s == "layer") return GroupingMode::layer;
    if (s == "instance") return GroupingMode::instance;
    if (s == "group") return GroupingMode::group;
    throw std::invalid_argument("unknown grouping mode: " + s);
}

std::string to_string(GroupingMode m) {
    switch (m) {
        case GroupingMode::batch: return "batch";
        case GroupingMode::layer: return "layer";
        case GroupingMode::instance: return "instance";
        case GroupingMode::group: return "group";
    }
    return "?";
}

NoiseMode noise_mode_from_string(const std::string& s) {
    if (s == "scaled") return NoiseMode::scaled;
    if (s == "unscaled") return NoiseMode::unscaled;
    if (s == "dropout" || s == "gaussian_dropout") return NoiseMode::gaussian_dropout;
    if (s == "none") return NoiseMode::none;
    throw std::invalid_argument("unknown noise mode: " + s);
}

std::string to_string(NoiseMode m) {
    switch (m) {
        case NoiseMode::scaled: return "scaled";
        case NoiseMode::unscaled: return "unscaled";
        case NoiseMode::gaussian_dropout: return "dropout";
        case NoiseMode::none: return "none";
    }
    return "?";
}

std::vector<std::vector<std::int64_t>>
resolve_groups(const std::vector<std::int64_t>& shape, const GroupingSpec& spec) {
    if (shape.size() < 2) {
        throw std::invalid_argument("resolve_groups needs rank >= 2 (batch x channels [x spatial...])");
    }
    const std::int64_t B = shape[0];
    const std::int64_t C = shape[1];
    std::int64_t S = 1;
    for (std::size_t d = 2; d < shape.size(); ++d) S *= shape[d];

    std::vector<std::vector<std::int64_t>> groups;
    switch (spec.mode) {
        case GroupingMode::batch: {
            groups.assign(static_cast<std::size_t>(C), {});
            for (std::int64_t c = 0; c < C; ++c) {
                auto& g = groups[static_cast<std::size_t>(c)];
                g.reserve(static_cast<std::size_t>(B * S));
                for (std::int64_t b = 0; b < B; ++b)
                    for (std::int64_t s = 0; s < S; ++s)
                        g.push_back((b * C + c) * S + s);
            }
            break;
        }
        case GroupingMode::layer: {
            groups.assign(static_cast<std::size_t>(B), {});
            for (std::int64_t b = 0; b < B; ++b) {
                auto& g = groups[static_cast<std::size_t>(b)];
                g.reserve(static_cast<std::size_t>(C * S));
                for (std::int64_t i = 0; i < C * S; ++i) g.push_back(b * C * S + i);
            }
            break;
        }
        case GroupingMode::instance: {
            groups.assign(static_cast<std::size_t>(B * C), {});
            for (std::int64_t b = 0; b < B; ++b)
                for (std::int64_t c = 0; c < C; ++c) {
                    auto& g = groups[static_cast<std::size_t>(b * C + c)];
                    g.reserve(static_cast<std::size_t>(S));
                    for (std::int64_t s = 0; s < S; ++s) g.push_back((b * C + c) * S + s);
                }
            break;
        }
        case GroupingMode::group: {
            if (spec.group_size < 1 || C % spec.group_size != 0) {
                throw std::invalid_argument("channel count not divisible by group_size");
            }
            const std::int64_t blocks = C / spec.group_size;
            groups.assign(static_cast<std::size_t>(B * blocks), {});
            for (std::int64_t b = 0; b < B; ++b)
                for (std::int64_t k = 0; k < blocks; ++k) {
                    auto& g = groups[static_cast<std::size_t>(b * blocks + k)];
                    g.reserve(static_cast<std::size_t>(spec.group_size * S));
                    for (std::int64_t c = k * spec.group_size; c < (k + 1) * spec.group_size; ++c)
                        for (std::int64_t s = 0; s < S; ++s)
                            g.push_back((b * C + c) * S + s);
                }
            break;
        }
    }
    return groups;
}

double noise_scale(const Sample& x) {
    double acc = 0.0;
    for (double v : x.values) acc += std::fabs(v - x.mean);
    return acc / static_cast<double>(x.values.size());
}

NormLayerState::NormLayerState(std::int64_t channels)
    : gamma(static_cast<std::size_t>(channels), 1.0),
      beta(static_cast<std::size_t>(channels), 0.0),
      running_mu(static_cast<std::size_t>(channels), 0.0),
      running_sigma2(static_cast<std::size_t>(channels), 1.0),
      running_lambda(static_cast<std::size_t>(channels), 1.0) {}

void apply_noise(Tensor& x, const std::vector<std::vector<std::int64_t>>& groups,
                 const std::vector<double>& s, const NormLayerState& state,
                 const NoiseStream& noise, Tensor* z_out) {
    if (state.noise_mode == NoiseMode::gaussian_dropout &&
        !(state.p > 0.0 && state.p <= 1.0)) {
        throw DomainError("dropout retention rate must lie in (0, 1]");
    }
    if (state.noise_mode == NoiseMode::none || state.xi == 0.0) {
        return; // bit-exact identity, no draws
    }
    if (state.noise_mode == NoiseMode::gaussian_dropout && state.p == 1.0) {
        return; // sqrt((1-1)/1) == 0
    }
    if (z_out != nullptr) {
        *z_out = Tensor(x.shape);
    }
    const double f = state.noise_mode == NoiseMode::gaussian_dropout
                         ? dropout_factor(state.p)
                         : 0.0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        for (auto i : groups[g]) {
            const double z = gaussian_at(noise, static_cast<std::uint64_t>(i));
            if (z_out != nullptr) (*z_out)[i] = z;
            switch (state.noise_mode) {
                case NoiseMode::scaled:
                    x[i] += z * state.xi * s[g];
                    break;
                case NoiseMode::unscaled:
                    x[i] += z * state.xi * kHalfNormalMean;
                    break;
                case NoiseMode::gaussian_dropout:
                    x[i] *= 1.0 + z * f;
                    break;
                case NoiseMode::none:
                    break;
            }
        }
    }
}

NormLayer::NormLayer(std::int64_t channels, GroupingSpec spec, bool powered)
    : state_(channels), spec_(spec), powered_(powered) {}

std::int64_t NormLayer::channel_of(std::int64_t linear,
                                   const std::vector<std::int64_t>& shape) const {
    std::int64_t S = 1;
    for (std::size_t d = 2; d < shape.size(); ++d) S *= shape[d];
    return (linear / S) % shape[1];
}

Tensor NormLayer::forward_train(const Tensor& input, const NoiseStream& noise,
                                ForwardCache* cache) {
    if (input.shape.size() < 2 || input.shape[1] != state_.channels()) {
        throw std::invalid_argument("input shape does not match layer channels");
    }
    auto groups = resolve_groups(input.shape, spec_);
    const std::int64_t n_groups = static_cast<std::int64_t>(groups.size());
    for (const auto& g : groups) {
        if (g.size() < 2) {
            throw std::invalid_argument("normalization group smaller than 2 in training");
        }
    }

    ForwardCache local;
    ForwardCache& c = cache != nullptr ? *cache : local;
    c.shape = input.shape;
    c.h = Tensor(input.shape);
    c.inv_std.assign(groups.size(), 0.0);
    c.group_mean.assign(groups.size(), 0.0);
    c.group_var.assign(groups.size(), 0.0);
    c.lambda.assign(groups.size(), LambdaEstimate{});
    c.s.assign(groups.size(), 0.0);
    c.powered = powered_;

    Tensor x(input.shape);

    parallel_for(n_groups, [&](std::int64_t gi) {
        const auto& g = groups[static_cast<std::size_t>(gi)];
        const double n = static_cast<double>(g.size());
        const GroupStats st = stats_of(input, g);
        const double inv = 1.0 / std::sqrt(st.var + state_.eps);
        c.group_mean[static_cast<std::size_t>(gi)] = st.mean;
        c.group_var[static_cast<std::size_t>(gi)] = st.var;
        c.inv_std[static_cast<std::size_t>(gi)] = inv;

        std::vector<double> h(g.size());
        for (std::size_t k = 0; k < g.size(); ++k) {
            h[k] = (input[g[k]] - st.mean) * inv;
            c.h[g[k]] = h[k];
        }

        LambdaEstimate est;
        est.alpha_used = state_.alpha;
        if (powered_) {
            if (st.var < kGroupVarianceFloor) {
                est.lambda_hat = 1.0;
                est.clamped = true;
            } else {
                est = estimate_group_lambda(h, state_.alpha);
            }
            for (std::size_t k = 0; k < g.size(); ++k) {
                x[g[k]] = yeo_johnson(h[k], est.lambda_hat);
            }
            if (state_.noise_mode == NoiseMode::scaled) {
                double xbar = 0.0;
                for (auto i : g) xbar += x[i];
                xbar /= n;
                double acc = 0.0;
                for (auto i : g) acc += std::fabs(x[i] - xbar);
                c.s[static_cast<std::size_t>(gi)] = acc / n;
            } else if (state_.noise_mode == NoiseMode::unscaled) {
                c.s[static_cast<std::size_t>(gi)] = kHalfNormalMean;
            }
        } else {
            for (std::size_t k = 0; k < g.size(); ++k) {
                x[g[k]] = h[k];
            }
            est.lambda_hat = 1.0;
        }
        c.lambda[static_cast<std::size_t>(gi)] = est;
    });

    if (powered_) {
        apply_noise(x, groups, c.s, state_, noise, &c.z);
    }
    c.y = x;

    Tensor out(input.shape);
    for (std::int64_t i = 0; i < input.numel(); ++i) {
        const std::int64_t ch = channel_of(i, input.shape);
        out[i] = state_.gamma[static_cast<std::size_t>(ch)] * x[i] +
                 state_.beta[static_cast<std::size_t>(ch)];
    }

    if (spec_.mode == GroupingMode::batch) {
        const double m = state_.momentum;
        for (std::int64_t ci = 0; ci < n_groups; ++ci) {
            const auto u = static_cast<std::size_t>(ci);
            state_.running_mu[u] = (1.0 - m) * state_.running_mu[u] + m * c.group_mean[u];
            state_.running_sigma2[u] =
                (1.0 - m) * state_.running_sigma2[u] + m * c.group_var[u];
            state_.running_lambda[u] =
                (1.0 - m) * state_.running_lambda[u] + m * c.lambda[u].lambda_hat;
        }
        state_.num_batches_tracked += 1;
    }

    c.groups = std::move(groups);
    return out;
}

Tensor NormLayer::eval_slot_values(const Tensor& input) const {
    if (input.shape.size() < 2 || input.shape[1] != state_.channels()) {
        throw std::invalid_argument("input shape does not match layer channels");
    }
    Tensor x(input.shape);
    if (spec_.mode == GroupingMode::batch) {
        if (state_.num_batches_tracked == 0) {
            throw DomainError("running statistics not initialized; train first");
        }
        for (std::int64_t i = 0; i < input.numel(); ++i) {
            const auto ch = static_cast<std::size_t>(channel_of(i, input.shape));
            const double inv = 1.0 / std::sqrt(state_.running_sigma2[ch] + state_.eps);
            const double h = (input[i] - state_.running_mu[ch]) * inv;
            x[i] = powered_ ? yeo_johnson(h, state_.running_lambda[ch]) : h;
        }
        return x;
    }

    // layer/instance/group modes have no channel-aligned running statistics;
    // evaluation recomputes per-group statistics from the input.
    auto groups = resolve_groups(input.shape, spec_);
    for (const auto& g : groups) {
        if (g.size() < 2) {
            throw std::invalid_argument("normalization group smaller than 2");
        }
    }
    parallel_for(static_cast<std::int64_t>(groups.size()), [&](std::int64_t gi) {
        const auto& g = groups[static_cast<std::size_t>(gi)];
        const GroupStats st = stats_of(input, g);
        const double inv = 1.0 / std::sqrt(st.var + state_.eps);
        std::vector<double> h(g.size());
        for (std::size_t k = 0; k < g.size(); ++k) {
            h[k] = (input[g[k]] - st.mean) * inv;
        }
        double lam = 1.0;
        if (powered_ && st.var >= kGroupVarianceFloor) {
            lam = estimate_group_lambda(h, state_.alpha).lambda_hat;
        }
        for (std::size_t k = 0; k < g.size(); ++k) {
            x[g[k]] = powered_ ? yeo_johnson(h[k], lam) : h[k];
        }
    });
    return x;
}

Tensor NormLayer::affine(const Tensor& x) const {
    Tensor out(x.shape);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const auto ch = static_cast<std::size_t>(channel_of(i, x.shape));
        out[i] = state_.gamma[ch] * x[i] + state_.beta[ch];
    }
    return out;
}

Tensor NormLayer::forward_eval(const Tensor& input) const {
    return affine(eval_slot_values(input));
}

Tensor NormLayer::forward_frozen(const Tensor& input, const ForwardCache& cache) const {
    if (input.shape != cache.shape) {
        throw std::invalid_argument("input shape does not match forward cache");
    }
    Tensor x(input.shape);
    for (std::size_t gi = 0; gi < cache.groups.size(); ++gi) {
        const auto& g = cache.groups[gi];
        const GroupStats st = stats_of(input, g);
        const double inv = 1.0 / std::sqrt(st.var + state_.eps);
        const double lam = cache.lambda[gi].lambda_hat;
        for (auto i : g) {
            const double h = (input[i] - st.mean) * inv;
            x[i] = powered_ ? yeo_johnson(h, lam) : h;
        }
        if (powered_ && cache.z.numel() > 0) {
            const double f = state_.noise_mode == NoiseMode::gaussian_dropout
                                 ? dropout_factor(state_.p)
                                 : 0.0;
            for (auto i : g) {
                switch (state_.noise_mode) {
                    case NoiseMode::scaled:
                        x[i] += cache.z[i] * state_.xi * cache.s[gi];
                        break;
                    case NoiseMode::unscaled:
                        x[i] += cache.z[i] * state_.xi * kHalfNormalMean;
                        break;
                    case NoiseMode::gaussian_dropout:
                        x[i] *= 1.0 + cache.z[i] * f;
                        break;
                    case NoiseMode::none:
                        break;
                }
            }
        }
    }
    Tensor out(input.shape);
    for (std::int64_t i = 0; i < input.numel(); ++i) {
        const auto ch = static_cast<std::size_t>(channel_of(i, input.shape));
        out[i] = state_.gamma[ch] * x[i] + state_.beta[ch];
    }
    return out;
}

void NormLayer::backward(const ForwardCache& cache, const Tensor& grad_out,
                         Tensor& grad_input, std::vector<double>& grad_gamma,
                         std::vector<double>& grad_beta) const {
    if (grad_out.shape != cache.shape) {
        throw std::invalid_argument("grad_out shape does not match forward cache");
    }
    grad_input = Tensor(cache.shape);
    grad_gamma.assign(static_cast<std::size_t>(state_.channels()), 0.0);
    grad_beta.assign(static_cast<std::size_t>(state_.channels()), 0.0);

    const std::int64_t numel = grad_out.numel();
    Tensor gx(cache.shape);
    const bool dropout = state_.noise_mode == NoiseMode::gaussian_dropout &&
                         cache.z.numel() > 0;
    const double f = dropout ? dropout_factor(state_.p) : 0.0;
    for (std::int64_t i = 0; i < numel; ++i) {
        const auto ch = static_cast<std::size_t>(channel_of(i, cache.shape));
        grad_gamma[ch] += grad_out[i] * cache.y[i];
        grad_beta[ch] += grad_out[i];
        double g = grad_out[i] * state_.gamma[ch];
        if (dropout) {
            g *= 1.0 + cache.z[i] * f; // multiplicative noise enters the chain
        }
        gx[i] = g; // additive noise and s contribute nothing
    }

    parallel_for(static_cast<std::int64_t>(cache.groups.size()), [&](std::int64_t gi) {
        const auto& g = cache.groups[static_cast<std::size_t>(gi)];
        const double n = static_cast<double>(g.size());
        const double inv = cache.inv_std[static_cast<std::size_t>(gi)];
        const double lam = cache.lambda[static_cast<std::size_t>(gi)].lambda_hat;

        double sum_gh = 0.0;
        double sum_ghh = 0.0;
        std::vector<double> gh(g.size());
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double hi = cache.h[g[k]];
            double v = gx[g[k]];
            if (cache.powered) {
                v *= yeo_johnson_dh(hi, lam); // lambda held constant
            }
            gh[k] = v;
            sum_gh += v;
            sum_ghh += v * hi;
        }
        const double mean_gh = sum_gh / n;
        const double mean_ghh = sum_ghh / n;
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double hi = cache.h[g[k]];
            grad_input[g[k]] = inv * (gh[k] - mean_gh - hi * mean_ghh);
        }
    });
}

} // namespace normalnorm
