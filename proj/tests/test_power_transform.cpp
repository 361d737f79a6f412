#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "normalnorm/errors.hpp"
#include "normalnorm/noise_rng.hpp"
#include "normalnorm/power_transform.hpp"

using namespace normalnorm;

namespace {

std::vector<double> standardized(std::vector<double> v) {
    double mu = 0.0;
    for (double x : v) mu += x;
    mu /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    const double sd = std::sqrt(ss / static_cast<double>(v.size()));
    for (double& x : v) x = (x - mu) / sd;
    return v;
}

std::vector<double> exponential_sample(std::uint64_t seed, std::int64_t n) {
    NoiseStream s{seed, 42, 0};
    std::vector<double> v(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        v[static_cast<std::size_t>(i)] =
            -std::log(uniform_at(s, static_cast<std::uint64_t>(i)));
    }
    return v;
}

std::vector<double> normal_sample(std::uint64_t seed, std::int64_t n) {
    NoiseStream s{seed, 43, 0};
    std::vector<double> v(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        v[static_cast<std::size_t>(i)] = gaussian_at(s, static_cast<std::uint64_t>(i));
    }
    return v;
}

// Grid-search oracle over the true profile NLL.
double grid_argmin(const Sample& s, double lo = -1.0, double hi = 3.0,
                   double step = 0.001) {
    double best_lam = lo;
    double best = nll(s, lo);
    for (double lam = lo + step; lam <= hi + 1e-12; lam += step) {
        const double v = nll(s, lam);
        if (v < best) {
            best = v;
            best_lam = lam;
        }
    }
    return best_lam;
}

} // namespace

TEST_CASE("yeo_johnson pointwise values") {
    CHECK(yeo_johnson(0.7, 1.0) == doctest::Approx(0.7).epsilon(1e-15));
    for (double lam : {-2.0, -0.5, 0.0, 0.7, 1.0, 2.0, 3.5}) {
        CHECK(yeo_johnson(0.0, lam) == doctest::Approx(0.0).epsilon(1e-15));
    }
    CHECK(yeo_johnson(1.0, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(yeo_johnson(-1.0, 2.0) == doctest::Approx(-std::log(2.0)).epsilon(1e-14));
    // (1/0.5)((1+3)^0.5 - 1) = 2
    CHECK(yeo_johnson(3.0, 0.5) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK_THROWS_AS(yeo_johnson(std::nan(""), 1.0), DomainError);
    CHECK_THROWS_AS(yeo_johnson(1.0, std::numeric_limits<double>::infinity()), DomainError);
}

TEST_CASE("yeo_johnson identity at lambda=1 is exact") {
    NoiseStream s{9, 1, 0};
    for (int i = 0; i < 200; ++i) {
        const double h = 20.0 * (uniform_at(s, static_cast<std::uint64_t>(i)) - 0.5);
        CHECK(yeo_johnson(h, 1.0) == h);
    }
}

TEST_CASE("yeo_johnson branch continuity and origin pinning") {
    for (double h : {-2.0, -0.5, 0.5, 2.0}) {
        for (double lam0 : {0.0, 2.0}) {
            const double at = yeo_johnson(h, lam0);
            CHECK(std::fabs(yeo_johnson(h, lam0 + 1e-9) - at) <= 1e-6);
            CHECK(std::fabs(yeo_johnson(h, lam0 - 1e-9) - at) <= 1e-6);
        }
    }
    for (double lam = -2.0; lam <= 4.0; lam += 0.25) {
        CHECK(std::fabs(yeo_johnson(1e-12, lam)) <= 1e-10);
        CHECK(std::fabs(yeo_johnson(-1e-12, lam)) <= 1e-10);
    }
}

TEST_CASE("yeo_johnson strictly increasing in h") {
    NoiseStream s{11, 2, 0};
    std::uint64_t ctr = 0;
    for (double lam : {-1.5, 0.0, 0.3, 1.0, 2.0, 3.0}) {
        std::vector<double> grid(257);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            grid[i] = 12.0 * (uniform_at(s, ctr++) - 0.5);
        }
        std::sort(grid.begin(), grid.end());
        for (std::size_t i = 1; i < grid.size(); ++i) {
            if (grid[i] == grid[i - 1]) continue;
            CHECK(yeo_johnson(grid[i], lam) > yeo_johnson(grid[i - 1], lam));
        }
    }
}

TEST_CASE("inverse examples and round trip") {
    CHECK(yeo_johnson_inverse(0.7, 1.0) == doctest::Approx(0.7));
    CHECK(yeo_johnson_inverse(std::log(2.0), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(yeo_johnson_inverse(2.0, 0.5) == doctest::Approx(3.0).epsilon(1e-12));

    NoiseStream s{13, 3, 0};
    for (int i = 0; i < 500; ++i) {
        const double h = 16.0 * (uniform_at(s, static_cast<std::uint64_t>(2 * i)) - 0.5);
        const double lam = -2.0 + 6.0 * uniform_at(s, static_cast<std::uint64_t>(2 * i + 1));
        const double x = yeo_johnson(h, lam);
        const double back = yeo_johnson_inverse(x, lam);
        CHECK(std::fabs(back - h) <= 1e-9 * std::max(1.0, std::fabs(h)));
        // forward(inverse(x)) == x as well
        const double fwd = yeo_johnson(back, lam);
        CHECK(std::fabs(fwd - x) <= 1e-9 * std::max(1.0, std::fabs(x)));
    }
    // out-of-image: for lambda=-1 the positive image is [0, 1)
    CHECK_THROWS_AS(yeo_johnson_inverse(1.5, -1.0), DomainError);
    // for lambda=3 the negative image is (-1, 0)
    CHECK_THROWS_AS(yeo_johnson_inverse(-1.5, 3.0), DomainError);
}

TEST_CASE("lambda derivatives at 1 match finite differences") {
    // frozen spot values
    CHECK(psi_dlambda_at1(0.0) == 0.0);
    CHECK(psi_dlambda_at1(1.0) == doctest::Approx(2.0 * std::log(2.0) - 1.0).epsilon(1e-12));
    // the h<0 branch is the even extension: same value as h=+1 (the
    // finite-difference oracle below pins the sign)
    CHECK(psi_dlambda_at1(-1.0) == doctest::Approx(2.0 * std::log(2.0) - 1.0).epsilon(1e-12));
    CHECK(psi_d2lambda_at1(0.0) == 0.0);
    const double d2_at_1 = 2.0 * std::log(2.0) * std::log(2.0) -
                           2.0 * (2.0 * std::log(2.0) - 1.0);
    CHECK(psi_d2lambda_at1(1.0) == doctest::Approx(d2_at_1).epsilon(1e-12));
    CHECK(psi_d2lambda_at1(-1.0) == doctest::Approx(-d2_at_1).epsilon(1e-12));

    for (double h = -5.0; h <= 5.0 + 1e-9; h += 0.25) {
        const double e1 = 1e-5;
        const double fd1 = (yeo_johnson(h, 1.0 + e1) - yeo_johnson(h, 1.0 - e1)) / (2.0 * e1);
        CHECK(std::fabs(psi_dlambda_at1(h) - fd1) <= 1e-7);
        const double e2 = 1e-4;
        const double fd2 = (yeo_johnson(h, 1.0 + e2) - 2.0 * yeo_johnson(h, 1.0) +
                            yeo_johnson(h, 1.0 - e2)) /
                           (e2 * e2);
        CHECK(std::fabs(psi_d2lambda_at1(h) - fd2) <= 1e-5);
    }
    // h=-0.5 against the oracle explicitly
    const double e2 = 1e-4;
    const double fd2 = (yeo_johnson(-0.5, 1.0 + e2) - 2.0 * yeo_johnson(-0.5, 1.0) +
                        yeo_johnson(-0.5, 1.0 - e2)) /
                       (e2 * e2);
    CHECK(psi_d2lambda_at1(-0.5) == doctest::Approx(fd2).epsilon(1e-6));
}

TEST_CASE("nll at lambda=1 on a normalized sample") {
    Sample s(standardized(normal_sample(3, 2048)));
    const double expect = 0.5 * (std::log(2.0 * std::numbers::pi_v<double>) + 1.0);
    CHECK(nll(s, 1.0) == doctest::Approx(expect).epsilon(1e-6));

    // direct-formula consistency at lambda=1 for an arbitrary sample
    Sample t(std::vector<double>{0.3, -1.2, 2.0, 0.1, -0.4, 0.9});
    double jac = 0.0;
    for (double v : t.values) {
        jac += (v >= 0 ? 1.0 : -1.0) * std::log1p(std::fabs(v));
    }
    (void)jac; // (lambda-1) factor vanishes at lambda=1
    const double direct = 0.5 * (std::log(2.0 * std::numbers::pi_v<double>) + 1.0) +
                          0.5 * std::log(t.variance);
    CHECK(nll(t, 1.0) == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("nll grid minimum does not exceed identity for skewed data") {
    Sample s(standardized(exponential_sample(5, 512)));
    const double lam_star = grid_argmin(s);
    CHECK(nll(s, lam_star) <= nll(s, 1.0));
}

TEST_CASE("nll degenerate transformed sample") {
    Sample constant(std::vector<double>{1.0, 1.0, 1.0});
    CHECK_THROWS_AS(nll(constant, 0.5), DegenerateError);
}

TEST_CASE("nll_quadratic symmetric sample has zero gradient") {
    Sample s(std::vector<double>{1.0, -1.0});
    const QuadraticCoeffs q = nll_quadratic(s);
    CHECK(q.d1 == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("nll_quadratic matches finite differences of nll") {
    Sample s(standardized(exponential_sample(7, 512)));
    const QuadraticCoeffs q = nll_quadratic(s);
    const double e = 1e-4;
    const double fd1 = (nll(s, 1.0 + e) - nll(s, 1.0 - e)) / (2.0 * e);
    const double fd2 = (nll(s, 1.0 + e) - 2.0 * nll(s, 1.0) + nll(s, 1.0 - e)) / (e * e);
    CHECK(std::fabs(q.d1 - fd1) / std::fabs(fd1) <= 1e-5);
    CHECK(std::fabs(q.d2 - fd2) / std::fabs(fd2) <= 1e-5);
    CHECK(q.l0 == doctest::Approx(nll(s, 1.0)).epsilon(1e-12));
}

TEST_CASE("nll_quadratic rejects unnormalized samples") {
    CHECK_THROWS_AS(nll_quadratic(Sample(std::vector<double>{5.0, 6.0, 7.0, 8.0})),
                    DomainError);
}

TEST_CASE("quadratic fidelity near the expansion point") {
    Sample s(standardized(exponential_sample(21, 512)));
    const QuadraticCoeffs q = nll_quadratic(s);
    for (double lam = 0.5; lam <= 1.5 + 1e-9; lam += 0.05) {
        const double l2 = q.l0 + (lam - 1.0) * q.d1 + 0.5 * (lam - 1.0) * (lam - 1.0) * q.d2;
        CHECK(std::fabs(l2 - nll(s, lam)) <= 0.05);
    }
}

TEST_CASE("estimator on a large normal sample recovers the identity") {
    Sample s(standardized(normal_sample(17, 4096)));
    const LambdaEstimate est = estimate_lambda(s, 1.0);
    CHECK(std::fabs(est.lambda_hat - 1.0) <= 0.1);
    CHECK_FALSE(est.clamped);
    CHECK(est.d2 > 0.0);
}

TEST_CASE("alpha=0 returns exactly 1") {
    Sample s(standardized(exponential_sample(23, 512)));
    const LambdaEstimate est = estimate_lambda(s, 0.0);
    CHECK(est.lambda_hat == 1.0);
    CHECK(est.alpha_used == 0.0);
}

TEST_CASE("estimator moves in the skew-correcting direction") {
    Sample right(standardized(exponential_sample(31, 512)));
    CHECK(estimate_lambda(right, 1.0).lambda_hat < 1.0);

    auto neg = exponential_sample(31, 512);
    for (double& v : neg) v = -v;
    Sample left(standardized(neg));
    CHECK(estimate_lambda(left, 1.0).lambda_hat > 1.0);

    // and the grid oracle agrees on the side
    CHECK(grid_argmin(right) < 1.0);
    CHECK(grid_argmin(left) > 1.0);
}

TEST_CASE("estimator tracks the grid oracle and improves the NLL") {
    // One-step accuracy on strong skew is bounded (the acceptance suite
    // documents the spec's tighter gate); it must land on the correct side,
    // strictly improve on the identity, and minimize its own quadratic.
    for (std::uint64_t seed : {101, 202, 303}) {
        Sample s(standardized(exponential_sample(seed, 512)));
        const LambdaEstimate est = estimate_lambda(s, 1.0);
        const double lam_star = grid_argmin(s);
        CHECK(est.lambda_hat < 1.0);
        CHECK(nll(s, est.lambda_hat) < nll(s, 1.0));
        CHECK(std::fabs(est.lambda_hat - lam_star) <= 0.5);
        // exact minimizer of the quadratic: residual gradient ~ 0
        const double resid = est.d1 + (est.lambda_hat - 1.0) * est.d2;
        CHECK(std::fabs(resid) <= 1e-12);
    }
}

TEST_CASE("alpha attenuates toward the identity monotonically") {
    Sample s(standardized(exponential_sample(47, 512)));
    const double l1 = estimate_lambda(s, 1.0).lambda_hat;
    const double lhalf = estimate_lambda(s, 0.5).lambda_hat;
    CHECK(std::fabs(lhalf - 1.0) == doctest::Approx(0.5 * std::fabs(l1 - 1.0)).epsilon(1e-12));
}

TEST_CASE("clamping and degenerate fallback") {
    // An extreme constructed sample can push the one-step outside [-3, 5].
    std::vector<double> v(64, 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = i + 1 == v.size() ? 40.0 : -0.1;
    }
    Sample s(standardized(v));
    const LambdaEstimate est = estimate_lambda(s, 1.0);
    CHECK(est.lambda_hat >= kLambdaMin);
    CHECK(est.lambda_hat <= kLambdaMax);
    if (!est.clamped) {
        CHECK(est.d2 > 0.0);
    }
}
