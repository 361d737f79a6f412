#ifndef NORMALNORM_POWER_TRANSFORM_HPP
#define NORMALNORM_POWER_TRANSFORM_HPP

#include <cstdint>
#include <span>
#include <vector>

namespace normalnorm {

// A flat vector of pre-activations for one normalization group, with its
// summary statistics. Construction validates finiteness and n >= 2.
struct Sample {
    std::vector<double> values;
    double mean = 0.0;
    double variance = 0.0; // biased (1/N)

    explicit Sample(std::vector<double> v);
    std::int64_t n() const { return static_cast<std::int64_t>(values.size()); }
};

// Result of the one-step estimator: lambda_hat plus the expansion
// coefficients it was built from.
struct LambdaEstimate {
    double lambda_hat = 1.0;
    double nll_at_1 = 0.0;
    double d1 = 0.0; // L'(lambda=1)
    double d2 = 0.0; // L''(lambda=1)
    bool clamped = false;
    double alpha_used = 1.0;
};

struct QuadraticCoeffs {
    double l0 = 0.0; // L(lambda=1)
    double d1 = 0.0;
    double d2 = 0.0;
};

inline constexpr double kLambdaMin = -3.0;
inline constexpr double kLambdaMax = 5.0;
inline constexpr double kCurvatureFloor = 1e-8;
inline constexpr double kVarianceFloor = 1e-12;

// Four-branch power transform, continuous across the lambda=0, lambda=2 and
// h=0 branch boundaries. lambda=1 is the identity and is returned exactly.
double yeo_johnson(double h, double lambda);

// Inverse on the image of the transform; throws DomainError outside it.
double yeo_johnson_inverse(double x, double lambda);

// d(psi)/dh at fixed lambda (the per-element Jacobian of the transform).
double yeo_johnson_dh(double h, double lambda);

// d(psi)/dlambda at lambda=1. Even in h: both signs reduce to
// (1+|h|)log(1+|h|) - |h|.
double psi_dlambda_at1(double h);

// d2(psi)/dlambda2 at lambda=1. Odd in h.
double psi_d2lambda_at1(double h);

// Profile negative log-likelihood of the transformed sample,
//   0.5(log 2pi + 1) + 0.5 log sigma2(lambda) - (lambda-1)/N sum sgn(h) log(1+|h|),
// with the biased variance of psi(h; lambda). Throws DegenerateError when
// sigma2(lambda) <= kVarianceFloor.
double nll(const Sample& sample, double lambda);

// L(1), L'(1), L''(1) of the profile NLL, assembled from the closed-form
// derivatives of sigma2(lambda) at lambda=1. Requires a normalized sample
// (|mean| <= 1e-3, |variance - 1| <= 1e-2); throws DomainError otherwise.
QuadraticCoeffs nll_quadratic(const Sample& sample);

// One-step estimate lambda_hat = 1 - alpha * L'(1)/L''(1), clamped to
// [kLambdaMin, kLambdaMax]. Falls back to 1 (clamped flag set) when the
// curvature is at or below kCurvatureFloor. alpha in [0, 1]; alpha == 0
// yields exactly 1.
LambdaEstimate estimate_lambda(const Sample& sample, double alpha);

// Span-based cores used by the normalization layer's hot path (no copies,
// no Sample validation; caller guarantees finite values and n >= 2).
QuadraticCoeffs nll_quadratic_core(std::span<const double> h, double mean, double variance);
double nll_core(std::span<const double> h, double lambda);

} // namespace normalnorm

#endif
