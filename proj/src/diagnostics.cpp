#include "normalnorm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "normalnorm/errors.hpp"
#include "normalnorm/noise_rng.hpp"

namespace normalnorm {

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

// Acklam's rational approximation for the probit function.
double probit_estimate(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
               (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

} // namespace

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw DomainError("normal_quantile needs p in (0, 1)");
    }
    if (p == 0.5) return 0.0;
    // Mirror for exact symmetry, then polish with a Halley step.
    const bool upper = p > 0.5;
    const double q = upper ? 1.0 - p : p;
    double x = probit_estimate(q);
    const double err = normal_cdf(x) - q;
    const double u = err / normal_pdf(x);
    x -= u / (1.0 + 0.5 * x * u);
    return upper ? -x : x;
}

QqResult qq_r2(std::span<const double> values) {
    const std::int64_t n = static_cast<std::int64_t>(values.size());
    if (n < 8) throw std::invalid_argument("qq_r2 needs n >= 8");
    std::vector<double> y(values.begin(), values.end());
    std::sort(y.begin(), y.end());
    if (y.front() == y.back()) {
        throw DegenerateError("constant sample: undefined R^2");
    }
    double sq = 0.0, sy = 0.0, sqq = 0.0, sqy = 0.0, syy = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double q = normal_quantile((static_cast<double>(i) + 0.5) /
                                         static_cast<double>(n));
        const double v = y[static_cast<std::size_t>(i)];
        sq += q;
        sy += v;
        sqq += q * q;
        sqy += q * v;
        syy += v * v;
    }
    const double dn = static_cast<double>(n);
    const double cov = sqy / dn - (sq / dn) * (sy / dn);
    const double varq = sqq / dn - (sq / dn) * (sq / dn);
    const double vary = syy / dn - (sy / dn) * (sy / dn);
    QqResult r;
    r.n = n;
    r.slope = cov / varq;
    r.intercept = sy / dn - r.slope * sq / dn;
    r.r2 = (cov * cov) / (varq * vary);
    return r;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw std::invalid_argument("pearson needs two equal-length samples, n >= 2");
    }
    const double n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n, my = sy / n;
    double cxy = 0.0, cxx = 0.0, cyy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        cxy += dx * dy;
        cxx += dx * dx;
        cyy += dy * dy;
    }
    if (cxx == 0.0 || cyy == 0.0) {
        throw DegenerateError("pearson undefined for a constant sample");
    }
    return cxy / std::sqrt(cxx * cyy);
}

double hz_statistic(std::span<const double> x, std::span<const double> y) {
    const std::int64_t n = static_cast<std::int64_t>(x.size());
    if (x.size() != y.size() || n < 8) {
        throw std::invalid_argument("hz_statistic needs two equal-length samples, n >= 8");
    }
    const double dn = static_cast<double>(n);
    double mx = 0.0, my = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        mx += x[static_cast<std::size_t>(i)];
        my += y[static_cast<std::size_t>(i)];
    }
    mx /= dn;
    my /= dn;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double dx = x[static_cast<std::size_t>(i)] - mx;
        const double dy = y[static_cast<std::size_t>(i)] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    sxx /= dn;
    syy /= dn;
    sxy /= dn;
    const double det = sxx * syy - sxy * sxy;
    if (!(det > 1e-12 * std::max(1.0, sxx * syy))) {
        throw DegenerateError("singular covariance in hz_statistic");
    }
    // inverse of the 2x2 covariance
    const double i00 = syy / det, i11 = sxx / det, i01 = -sxy / det;

    const double d = 2.0;
    const double beta = std::pow(dn * (2.0 * d + 1.0) / 4.0, 1.0 / (d + 2.0)) /
                        std::numbers::sqrt2;
    const double b2 = beta * beta;

    std::vector<double> cx(static_cast<std::size_t>(n)), cy(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        cx[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] - mx;
        cy[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(i)] - my;
    }

    double pair_sum = 0.0; // sum over ordered pairs (i, j), D_ii = 0
    for (std::int64_t i = 0; i < n; ++i) {
        pair_sum += 1.0; // j == i
        for (std::int64_t j = i + 1; j < n; ++j) {
            const double dx = cx[static_cast<std::size_t>(i)] - cx[static_cast<std::size_t>(j)];
            const double dy = cy[static_cast<std::size_t>(i)] - cy[static_cast<std::size_t>(j)];
            const double dij = dx * (i00 * dx + i01 * dy) + dy * (i01 * dx + i11 * dy);
            pair_sum += 2.0 * std::exp(-0.5 * b2 * dij);
        }
    }
    double center_sum = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double dx = cx[static_cast<std::size_t>(i)];
        const double dy = cy[static_cast<std::size_t>(i)];
        const double di = dx * (i00 * dx + i01 * dy) + dy * (i01 * dx + i11 * dy);
        center_sum += std::exp(-0.5 * b2 * di / (1.0 + b2));
    }
    const double hz = dn * (pair_sum / (dn * dn) -
                            2.0 * std::pow(1.0 + b2, -d / 2.0) * center_sum / dn +
                            std::pow(1.0 + 2.0 * b2, -d / 2.0));
    return -hz;
}

namespace {

double lgam(double x) { return std::lgamma(x); }

struct AmiParts {
    double mi = 0.0;
    double emi = 0.0;
    double hx = 0.0;
    double hy = 0.0;
};

AmiParts ami_parts(std::span<const double> x, std::span<const double> y) {
    const std::int64_t n = static_cast<std::int64_t>(x.size());
    const std::int64_t bins =
        static_cast<std::int64_t>(std::floor(std::sqrt(static_cast<double>(n))));

    auto bin_of = [&](std::span<const double> v, double lo, double hi, std::int64_t i) {
        const double w = hi - lo;
        auto b = static_cast<std::int64_t>(
            std::floor((v[static_cast<std::size_t>(i)] - lo) / w *
                       static_cast<double>(bins)));
        return std::clamp<std::int64_t>(b, 0, bins - 1);
    };
    const auto [xmin_it, xmax_it] = std::minmax_element(x.begin(), x.end());
    const auto [ymin_it, ymax_it] = std::minmax_element(y.begin(), y.end());
    if (*xmax_it - *xmin_it <= 0.0 || *ymax_it - *ymin_it <= 0.0) {
        throw DegenerateError("zero-range variable in adjusted_mutual_information");
    }

    std::vector<std::int64_t> table(static_cast<std::size_t>(bins * bins), 0);
    std::vector<std::int64_t> a(static_cast<std::size_t>(bins), 0);
    std::vector<std::int64_t> b(static_cast<std::size_t>(bins), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        const auto bx = bin_of(x, *xmin_it, *xmax_it, i);
        const auto by = bin_of(y, *ymin_it, *ymax_it, i);
        table[static_cast<std::size_t>(bx * bins + by)]++;
        a[static_cast<std::size_t>(bx)]++;
        b[static_cast<std::size_t>(by)]++;
    }

    const double dn = static_cast<double>(n);
    AmiParts parts;
    for (std::int64_t i = 0; i < bins; ++i) {
        const double ai = static_cast<double>(a[static_cast<std::size_t>(i)]);
        if (ai > 0.0) parts.hx -= ai / dn * std::log(ai / dn);
    }
    for (std::int64_t j = 0; j < bins; ++j) {
        const double bj = static_cast<double>(b[static_cast<std::size_t>(j)]);
        if (bj > 0.0) parts.hy -= bj / dn * std::log(bj / dn);
    }
    for (std::int64_t i = 0; i < bins; ++i) {
        for (std::int64_t j = 0; j < bins; ++j) {
            const double nij =
                static_cast<double>(table[static_cast<std::size_t>(i * bins + j)]);
            if (nij > 0.0) {
                const double ai = static_cast<double>(a[static_cast<std::size_t>(i)]);
                const double bj = static_cast<double>(b[static_cast<std::size_t>(j)]);
                parts.mi += nij / dn * std::log(dn * nij / (ai * bj));
            }
        }
    }

    // Expected MI under the hypergeometric permutation model (Vinh et al.).
    for (std::int64_t i = 0; i < bins; ++i) {
        const auto ai = a[static_cast<std::size_t>(i)];
        if (ai == 0) continue;
        for (std::int64_t j = 0; j < bins; ++j) {
            const auto bj = b[static_cast<std::size_t>(j)];
            if (bj == 0) continue;
            const std::int64_t lo = std::max<std::int64_t>(1, ai + bj - n);
            const std::int64_t hi = std::min<std::int64_t>(ai, bj);
            for (std::int64_t nij = lo; nij <= hi; ++nij) {
                const double an = static_cast<double>(ai);
                const double bn = static_cast<double>(bj);
                const double cn = static_cast<double>(nij);
                const double log_term =
                    lgam(an + 1.0) + lgam(bn + 1.0) + lgam(dn - an + 1.0) +
                    lgam(dn - bn + 1.0) - lgam(dn + 1.0) - lgam(cn + 1.0) -
                    lgam(an - cn + 1.0) - lgam(bn - cn + 1.0) -
                    lgam(dn - an - bn + cn + 1.0);
                parts.emi += cn / dn * std::log(dn * cn / (an * bn)) * std::exp(log_term);
            }
        }
    }
    return parts;
}

} // namespace

double adjusted_mutual_information(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 16) {
        throw std::invalid_argument(
            "adjusted_mutual_information needs two equal-length samples, n >= 16");
    }
    // Canonical argument order makes the result exactly symmetric.
    const bool swap = std::lexicographical_compare(y.begin(), y.end(), x.begin(), x.end());
    const AmiParts parts = swap ? ami_parts(y, x) : ami_parts(x, y);
    const double denom = 0.5 * (parts.hx + parts.hy) - parts.emi;
    if (std::fabs(denom) < 1e-15) return 0.0;
    return (parts.mi - parts.emi) / denom;
}

namespace {

std::vector<std::int64_t> sample_channels(std::int64_t width, std::int64_t want,
                                          std::uint64_t seed, std::uint64_t salt) {
    std::vector<std::int64_t> all(static_cast<std::size_t>(width));
    for (std::int64_t i = 0; i < width; ++i) all[static_cast<std::size_t>(i)] = i;
    NoiseStream s{seed, kStreamDiagnostics, salt * 1000003};
    const std::int64_t take = std::min(width, want);
    for (std::int64_t i = 0; i < take; ++i) {
        const auto j = i + static_cast<std::int64_t>(uniform_index_at(
                               s, static_cast<std::uint64_t>(i),
                               static_cast<std::uint64_t>(width - i)));
        std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
    }
    all.resize(static_cast<std::size_t>(take));
    return all;
}

Tensor rows_of(const Tensor& X, std::int64_t start, std::int64_t stop) {
    Tensor out({stop - start, X.shape[1]});
    for (std::int64_t i = start; i < stop; ++i)
        for (std::int64_t c = 0; c < X.shape[1]; ++c) out.at(i - start, c) = X.at(i, c);
    return out;
}

} // namespace

std::vector<LayerR2> layer_r2_aggregate(const Mlp& model, const Dataset& data,
                                        std::int64_t channels_per_layer,
                                        std::int64_t batches, std::int64_t batch_size,
                                        std::uint64_t seed) {
    const std::int64_t hidden = model.spec.num_hidden();
    std::vector<LayerR2> out;
    std::vector<std::vector<std::int64_t>> channels(static_cast<std::size_t>(hidden));
    for (std::int64_t li = 0; li < hidden; ++li) {
        channels[static_cast<std::size_t>(li)] =
            sample_channels(model.spec.widths[static_cast<std::size_t>(li + 1)],
                            channels_per_layer, seed, static_cast<std::uint64_t>(li));
        out.push_back({li, 0.0, 0});
    }

    const std::int64_t usable = std::min<std::int64_t>(batches, data.n() / batch_size);
    if (usable == 0) throw std::invalid_argument("not enough data for one minibatch");

    for (std::int64_t bi = 0; bi < usable; ++bi) {
        std::vector<Tensor> captured(static_cast<std::size_t>(hidden));
        const Tensor X = rows_of(data.X, bi * batch_size, (bi + 1) * batch_size);
        eval_forward_hooked(model, X, [&](std::int64_t layer, Tensor& slot) {
            if (layer < hidden) captured[static_cast<std::size_t>(layer)] = slot;
        });
        for (std::int64_t li = 0; li < hidden; ++li) {
            const Tensor& slot = captured[static_cast<std::size_t>(li)];
            if (slot.numel() == 0) continue;
            for (auto c : channels[static_cast<std::size_t>(li)]) {
                std::vector<double> col(static_cast<std::size_t>(slot.shape[0]));
                for (std::int64_t r = 0; r < slot.shape[0]; ++r) {
                    col[static_cast<std::size_t>(r)] = slot.at(r, c);
                }
                out[static_cast<std::size_t>(li)].mean_r2 += qq_r2(col).r2;
                out[static_cast<std::size_t>(li)].combos += 1;
            }
        }
    }
    for (auto& row : out) {
        if (row.combos > 0) row.mean_r2 /= static_cast<double>(row.combos);
    }
    return out;
}

std::vector<PairStatsRow> layer_pair_stats(const Mlp& model, const Dataset& data,
                                           std::int64_t pairs_per_layer,
                                           std::int64_t batches, std::int64_t batch_size,
                                           std::uint64_t seed) {
    const std::int64_t hidden = model.spec.num_hidden();
    const std::int64_t usable = std::min<std::int64_t>(batches, data.n() / batch_size);
    if (usable == 0) throw std::invalid_argument("not enough data for one minibatch");

    std::vector<PairStatsRow> rows;
    for (std::int64_t bi = 0; bi < usable; ++bi) {
        std::vector<Tensor> captured(static_cast<std::size_t>(hidden));
        const Tensor X = rows_of(data.X, bi * batch_size, (bi + 1) * batch_size);
        eval_forward_hooked(model, X, [&](std::int64_t layer, Tensor& slot) {
            if (layer < hidden) captured[static_cast<std::size_t>(layer)] = slot;
        });
        for (std::int64_t li = 0; li < hidden; ++li) {
            const Tensor& slot = captured[static_cast<std::size_t>(li)];
            if (slot.numel() == 0) continue;
            const std::int64_t width = slot.shape[1];
            auto chans = sample_channels(width, 2 * pairs_per_layer, seed,
                                         static_cast<std::uint64_t>(100 + li));
            for (std::int64_t pi = 0; pi + 1 < static_cast<std::int64_t>(chans.size());
                 pi += 2) {
                const auto ca = chans[static_cast<std::size_t>(pi)];
                const auto cb = chans[static_cast<std::size_t>(pi + 1)];
                std::vector<double> va(static_cast<std::size_t>(slot.shape[0]));
                std::vector<double> vb(static_cast<std::size_t>(slot.shape[0]));
                for (std::int64_t r = 0; r < slot.shape[0]; ++r) {
                    va[static_cast<std::size_t>(r)] = slot.at(r, ca);
                    vb[static_cast<std::size_t>(r)] = slot.at(r, cb);
                }
                PairStatsRow row;
                row.layer = li;
                row.channel_a = ca;
                row.channel_b = cb;
                row.batch = bi;
                row.stats.pearson_rho = pearson(va, vb);
                row.stats.hz_neg = hz_statistic(va, vb);
                row.stats.ami = adjusted_mutual_information(va, vb);
                rows.push_back(row);
            }
        }
    }
    return rows;
}

std::vector<double> global_slot_scales(const Mlp& model, const Dataset& train_data,
                                       std::int64_t layer, std::int64_t batch_size) {
    const std::int64_t width = model.spec.widths[static_cast<std::size_t>(layer + 1)];
    std::vector<double> mean(static_cast<std::size_t>(width), 0.0);
    std::int64_t count = 0;
    for (std::int64_t start = 0; start < train_data.n(); start += batch_size) {
        const std::int64_t stop = std::min(train_data.n(), start + batch_size);
        const Tensor X = rows_of(train_data.X, start, stop);
        eval_forward_hooked(model, X, [&](std::int64_t li, Tensor& slot) {
            if (li != layer) return;
            for (std::int64_t r = 0; r < slot.shape[0]; ++r)
                for (std::int64_t c = 0; c < width; ++c)
                    mean[static_cast<std::size_t>(c)] += slot.at(r, c);
        });
        count += stop - start;
    }
    for (auto& m : mean) m /= static_cast<double>(count);

    std::vector<double> scale(static_cast<std::size_t>(width), 0.0);
    for (std::int64_t start = 0; start < train_data.n(); start += batch_size) {
        const std::int64_t stop = std::min(train_data.n(), start + batch_size);
        const Tensor X = rows_of(train_data.X, start, stop);
        eval_forward_hooked(model, X, [&](std::int64_t li, Tensor& slot) {
            if (li != layer) return;
            for (std::int64_t r = 0; r < slot.shape[0]; ++r)
                for (std::int64_t c = 0; c < width; ++c)
                    scale[static_cast<std::size_t>(c)] +=
                        std::fabs(slot.at(r, c) - mean[static_cast<std::size_t>(c)]);
        });
    }
    for (auto& s : scale) s /= static_cast<double>(count);
    return scale;
}

RobustnessReport noise_robustness(const Mlp& model, const Dataset& eval_data,
                                  const Dataset& train_data, std::int64_t inject_layer,
                                  std::span<const std::int64_t> probe_layers, double delta,
                                  std::int64_t draws, std::uint64_t seed,
                                  std::int64_t batch_size) {
    if (draws < 1) throw std::invalid_argument("draws must be >= 1");
    const std::int64_t hidden = model.spec.num_hidden();
    if (inject_layer < 0 || inject_layer >= hidden) {
        throw std::invalid_argument("inject layer out of range");
    }
    for (auto pl : probe_layers) {
        if (pl <= inject_layer || pl >= hidden) {
            throw std::invalid_argument("probe layers must follow the inject layer");
        }
    }
    const std::vector<double> scale = global_slot_scales(model, train_data, inject_layer);
    const std::int64_t width = model.spec.widths[static_cast<std::size_t>(inject_layer + 1)];

    struct Acc {
        double sum = 0.0;
        double sumsq = 0.0;
        std::int64_t count = 0;
    };
    std::vector<Acc> acc(probe_layers.size());

    NoiseStream stream{seed, kStreamRobustness + static_cast<std::uint64_t>(inject_layer), 0};
    std::int64_t point_base = 0;
    for (std::int64_t start = 0; start < eval_data.n(); start += batch_size) {
        const std::int64_t stop = std::min(eval_data.n(), start + batch_size);
        const std::int64_t bsz = stop - start;
        const Tensor X = rows_of(eval_data.X, start, stop);

        std::vector<Tensor> clean(probe_layers.size());
        eval_forward_hooked(model, X, [&](std::int64_t li, Tensor& slot) {
            for (std::size_t pi = 0; pi < probe_layers.size(); ++pi) {
                if (probe_layers[pi] == li) clean[pi] = slot;
            }
        });

        for (std::int64_t t = 0; t < draws; ++t) {
            std::vector<Tensor> noisy(probe_layers.size());
            eval_forward_hooked(model, X, [&](std::int64_t li, Tensor& slot) {
                if (li == inject_layer && delta != 0.0) {
                    for (std::int64_t r = 0; r < slot.shape[0]; ++r) {
                        for (std::int64_t c = 0; c < width; ++c) {
                            const std::uint64_t idx =
                                (static_cast<std::uint64_t>(t) *
                                     static_cast<std::uint64_t>(train_data.n() + eval_data.n()) +
                                 static_cast<std::uint64_t>(point_base + r)) *
                                    static_cast<std::uint64_t>(width) +
                                static_cast<std::uint64_t>(c);
                            slot.at(r, c) += gaussian_at(stream, idx) * delta *
                                             scale[static_cast<std::size_t>(c)];
                        }
                    }
                }
                for (std::size_t pi = 0; pi < probe_layers.size(); ++pi) {
                    if (probe_layers[pi] == li) noisy[pi] = slot;
                }
            });
            for (std::size_t pi = 0; pi < probe_layers.size(); ++pi) {
                for (std::int64_t r = 0; r < bsz; ++r) {
                    double num = 0.0, den = 0.0;
                    for (std::int64_t c = 0; c < clean[pi].shape[1]; ++c) {
                        num += std::fabs(clean[pi].at(r, c) - noisy[pi].at(r, c));
                        den += std::fabs(clean[pi].at(r, c));
                    }
                    if (den == 0.0) {
                        throw DegenerateError("zero l1 norm at a probe point");
                    }
                    const double zeta = num / den;
                    acc[pi].sum += zeta;
                    acc[pi].sumsq += zeta * zeta;
                    acc[pi].count += 1;
                }
            }
        }
        point_base += bsz;
    }

    RobustnessReport report;
    for (std::size_t pi = 0; pi < probe_layers.size(); ++pi) {
        RobustnessEntry e;
        e.inject_layer = inject_layer;
        e.probe_layer = probe_layers[pi];
        e.delta = delta;
        e.draws = draws;
        const double cnt = static_cast<double>(acc[pi].count);
        e.mean_zeta = acc[pi].sum / cnt;
        const double var =
            std::max(0.0, acc[pi].sumsq / cnt - e.mean_zeta * e.mean_zeta);
        e.std_error = std::sqrt(var / cnt);
        report.entries.push_back(e);
    }
    return report;
}

} // namespace normalnorm
