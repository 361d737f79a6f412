#include "normalnorm/power_transform.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "normalnorm/errors.hpp"

namespace normalnorm {

namespace {

constexpr double kHalfLog2PiPlus1 =
    0.5 * (1.8378770664093454835606594728 + 1.0); // 0.5*(log(2*pi) + 1)

inline void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw DomainError(std::string(what) + " must be finite");
    }
}

} // namespace

Sample::Sample(std::vector<double> v) : values(std::move(v)) {
    if (values.size() < 2) {
        throw DomainError("sample needs at least 2 values");
    }
    double sum = 0.0;
    for (double x : values) {
        if (!std::isfinite(x)) {
            throw DomainError("sample contains a non-finite value");
        }
        sum += x;
    }
    mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double x : values) {
        const double d = x - mean;
        ss += d * d;
    }
    variance = ss / static_cast<double>(values.size());
}

double yeo_johnson(double h, double lambda) {
    require_finite(h, "h");
    require_finite(lambda, "lambda");
    if (lambda == 1.0) {
        return h;
    }
    if (h >= 0.0) {
        if (lambda == 0.0) {
            return std::log1p(h);
        }
        return std::expm1(lambda * std::log1p(h)) / lambda;
    }
    const double m = 2.0 - lambda;
    if (m == 0.0) {
        return -std::log1p(-h);
    }
    return -std::expm1(m * std::log1p(-h)) / m;
}

double yeo_johnson_inverse(double x, double lambda) {
    require_finite(x, "x");
    require_finite(lambda, "lambda");
    if (lambda == 1.0) {
        return x;
    }
    if (x >= 0.0) {
        if (lambda == 0.0) {
            return std::expm1(x);
        }
        const double t = 1.0 + lambda * x;
        if (t <= 0.0) {
            throw DomainError("x outside the image of the transform for this lambda");
        }
        return std::expm1(std::log(t) / lambda);
    }
    const double m = 2.0 - lambda;
    if (m == 0.0) {
        return -std::expm1(-x);
    }
    const double t = 1.0 - m * x;
    if (t <= 0.0) {
        throw DomainError("x outside the image of the transform for this lambda");
    }
    return -std::expm1(std::log(t) / m);
}

double yeo_johnson_dh(double h, double lambda) {
    require_finite(h, "h");
    require_finite(lambda, "lambda");
    if (lambda == 1.0) {
        return 1.0;
    }
    if (h >= 0.0) {
        return std::exp((lambda - 1.0) * std::log1p(h));
    }
    return std::exp((1.0 - lambda) * std::log1p(-h));
}

double psi_dlambda_at1(double h) {
    require_finite(h, "h");
    const double a = std::fabs(h);
    return (1.0 + a) * std::log1p(a) - a;
}

double psi_d2lambda_at1(double h) {
    require_finite(h, "h");
    const double a = std::fabs(h);
    const double lg = std::log1p(a);
    const double d1 = (1.0 + a) * lg - a;
    const double mag = (1.0 + a) * lg * lg - 2.0 * d1;
    return h >= 0.0 ? mag : -mag;
}

double nll_core(std::span<const double> h, double lambda) {
    const std::int64_t n = static_cast<std::int64_t>(h.size());
    double sum = 0.0;
    double jac = 0.0;
    for (double v : h) {
        sum += yeo_johnson(v, lambda);
        jac += (v >= 0.0 ? 1.0 : -1.0) * std::log1p(std::fabs(v));
    }
    const double mu = sum / static_cast<double>(n);
    double ss = 0.0;
    for (double v : h) {
        const double d = yeo_johnson(v, lambda) - mu;
        ss += d * d;
    }
    const double var = ss / static_cast<double>(n);
    if (var <= kVarianceFloor) {
        throw DegenerateError("transformed sample is degenerate (variance <= floor)");
    }
    return kHalfLog2PiPlus1 + 0.5 * std::log(var) -
           (lambda - 1.0) * jac / static_cast<double>(n);
}

double nll(const Sample& sample, double lambda) {
    require_finite(lambda, "lambda");
    return nll_core(sample.values, lambda);
}

QuadraticCoeffs nll_quadratic_core(std::span<const double> h, double mean, double variance) {
    if (std::fabs(mean) > 1e-3 || std::fabs(variance - 1.0) > 1e-2) {
        throw DomainError("sample is not normalized (mean ~ 0, variance ~ 1 required)");
    }
    const double n = static_cast<double>(h.size());

    double sum_d1 = 0.0;
    double sum_d2 = 0.0;
    double jac = 0.0;
    for (double v : h) {
        sum_d1 += psi_dlambda_at1(v);
        sum_d2 += psi_d2lambda_at1(v);
        jac += (v >= 0.0 ? 1.0 : -1.0) * std::log1p(std::fabs(v));
    }
    const double m1 = sum_d1 / n;
    const double m2 = sum_d2 / n;
    jac /= n;

    // dvar  = 2/N sum (h - mu)(psi' - mean psi')
    // ddvar = 2/N sum [(h - mu)(psi'' - mean psi'') + (psi' - mean psi')^2]
    double dvar = 0.0;
    double ddvar = 0.0;
    for (double v : h) {
        const double hc = v - mean;
        const double p1 = psi_dlambda_at1(v) - m1;
        const double p2 = psi_d2lambda_at1(v) - m2;
        dvar += hc * p1;
        ddvar += hc * p2 + p1 * p1;
    }
    dvar *= 2.0 / n;
    ddvar *= 2.0 / n;

    QuadraticCoeffs out;
    out.l0 = kHalfLog2PiPlus1 + 0.5 * std::log(variance);
    out.d1 = dvar / (2.0 * variance) - jac;
    out.d2 = -dvar * dvar / (2.0 * variance * variance) + ddvar / (2.0 * variance);
    return out;
}

QuadraticCoeffs nll_quadratic(const Sample& sample) {
    return nll_quadratic_core(sample.values, sample.mean, sample.variance);
}

LambdaEstimate estimate_lambda(const Sample& sample, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw DomainError("alpha must lie in [0, 1]");
    }
    const QuadraticCoeffs q = nll_quadratic(sample);

    LambdaEstimate est;
    est.nll_at_1 = q.l0;
    est.d1 = q.d1;
    est.d2 = q.d2;
    est.alpha_used = alpha;

    if (q.d2 <= kCurvatureFloor) {
        est.lambda_hat = 1.0;
        est.clamped = true;
        return est;
    }
    if (alpha == 0.0) {
        est.lambda_hat = 1.0;
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

} // namespace normalnorm
