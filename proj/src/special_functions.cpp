#include "fab/special_functions.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace fab {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;
// Forward recursion loses about exp(2 |r| sqrt(n)) in relative accuracy for
// r < 0; beyond this product the backward branch is used.
constexpr double kForwardLimit = 5.0;

void check_args(int n, double r) {
    if (n < 1) throw std::invalid_argument("log_In: n must be >= 1");
    if (!std::isfinite(r)) throw std::invalid_argument("log_In: r must be finite");
}

// Running product kept as mantissa * 2^exponent so long products of ratios
// neither overflow nor cost a log per factor.
struct LogProduct {
    double mant = 1.0;
    long long expo = 0;

    void mul(double f) {
        mant *= f;
        if (mant > 1e150 || mant < 1e-150) {
            int e = 0;
            mant = std::frexp(mant, &e);
            expo += e;
        }
    }
    double log() const { return std::log(mant) + static_cast<double>(expo) * std::numbers::ln2; }
};

double log_In_forward(int n, double r, double log_I1) {
    if (n == 1) return log_I1;
    LogProduct prod;
    double h = std::exp(-0.5 * r * r - log_I1) + r;  // I_2 / I_1
    prod.mul(h);
    for (int k = 3; k <= n; ++k) {
        h = r + static_cast<double>(k - 2) / h;
        prod.mul(h);
    }
    return log_I1 + prod.log();
}

// Minimal-solution recurrence run downward: h_k = (k - 1) / (h_{k+1} - r).
double log_In_backward(int n, double r, double log_I1) {
    const double ar = std::abs(r);
    const double root = std::sqrt(static_cast<double>(n)) + 20.0 / ar;
    const double start = std::min(root * root, 1e9);
    const long long N = std::max<long long>(n + 1, static_cast<long long>(std::ceil(start)));
    double h = 0.5 * (r + std::sqrt(r * r + 4.0 * static_cast<double>(N)));  // h_{N+1}
    LogProduct prod;
    for (long long k = N; k >= 2; --k) {
        h = static_cast<double>(k - 1) / (h - r);
        if (k <= n) prod.mul(h);
    }
    return log_I1 + prod.log();
}

}  // namespace

double log_normal_cdf(double x) {
    if (std::isnan(x)) return x;
    if (x >= -30.0) return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
    // Mills ratio continued fraction: Phi(x) = phi(x) / (|x| + 1/(|x| + 2/(|x| + ...)))
    const double t = -x;
    double cf = t;
    for (int k = 60; k >= 1; --k) cf = t + k / cf;
    return -0.5 * x * x - kLogSqrt2Pi - std::log(cf);
}

double log_In(int n, double r) {
    check_args(n, r);
    const double log_I1 = kLogSqrt2Pi + log_normal_cdf(r);
    if (n == 1) return log_I1;
    if (r >= 0.0 || std::abs(r) * std::sqrt(static_cast<double>(n)) <= kForwardLimit)
        return log_In_forward(n, r, log_I1);
    return log_In_backward(n, r, log_I1);
}

double log_In_approx(int n, double r) {
    if (n < 2) throw std::invalid_argument("log_In_approx: n must be >= 2");
    const double half = 0.5 * n;
    return (half - 1.0) * std::numbers::ln2 + std::lgamma(half) + std::sqrt(static_cast<double>(n)) * r -
           0.25 * r * r;
}

double log_In_quadrature(int n, double s) {
    check_args(n, s);
    const double m = static_cast<double>(n - 1);
    const double mode = 0.5 * (s + std::sqrt(s * s + 4.0 * m));
    auto log_g = [&](double z) {
        if (z <= 0.0) return n == 1 ? 0.0 : -std::numeric_limits<double>::infinity();
        return m * std::log(z) - 0.5 * z * z + s * z;
    };
    const double peak = log_g(std::max(mode, 0.0));
    // The integrand is log-concave with curvature at least 1, so mass beyond
    // 40 units from the mode is below exp(-800) relative to the peak.
    auto f = [&](double z) {
        const double v = log_g(z) - peak;
        return v < -745.0 ? 0.0 : std::exp(v);
    };
    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    const double lo = std::max(0.0, mode - 40.0);
    const double hi = std::max(mode, 0.0) + 40.0;
    double total = 0.0;
    if (mode > lo) total += GK::integrate(f, lo, mode, 10, 1e-12);
    total += GK::integrate(f, std::max(mode, 0.0), hi, 10, 1e-12);
    return peak + std::log(total);
}

}  // namespace fab
