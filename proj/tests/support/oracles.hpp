#pragma once

// Reference computations for the unit tests. Nothing here calls into the
// library's own quadrature or special-function code.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace oracle {

inline constexpr double pi = std::numbers::pi;

/// Lanczos approximation (g = 7, n = 9), reflection for x < 1/2.
inline double lanczos_gamma(double x) {
    static constexpr std::array<double, 9> c{0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
                                             771.32342877765313,   -176.61502916214059,   12.507343278686905,
                                             -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};
    if (x < 0.5) return pi / (std::sin(pi * x) * lanczos_gamma(1.0 - x));
    x -= 1.0;
    double a = c[0];
    const double t = x + 7.5;
    for (int i = 1; i < 9; ++i) a += c[i] / (x + i);
    return std::sqrt(2.0 * pi) * std::pow(t, x + 0.5) * std::exp(-t) * a;
}

inline double c_alpha(double alpha) {
    return -alpha * (alpha - 1.0) / (lanczos_gamma(2.0 - alpha) * std::cos(pi * alpha / 2.0));
}

inline double K(double x) {
    const double ax = std::abs(x);
    if (ax <= 1.0) return 1.0;
    if (ax >= 2.0) return 0.0;
    return 1.0 / (1.0 + std::exp(1.0 / (2.0 - ax) + 1.0 / (1.0 - ax)));
}

/// FK(y) = 2 int_0^2 K(x) cos(xy) dx, split as the exact [0,1] piece plus a Kronrod integral on [1,2].
inline double fourier_K(double y) {
    const double inner = std::abs(y) < 1e-8 ? 2.0 : 2.0 * std::sin(y) / y;
    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    const int panels = 1 + static_cast<int>(std::abs(y) / 8.0);
    double band = 0.0;
    for (int k = 0; k < panels; ++k) {
        const double a = 1.0 + static_cast<double>(k) / panels, b = 1.0 + static_cast<double>(k + 1) / panels;
        band += GK::integrate([y](double x) { return K(x) * std::cos(x * y); }, a, b, 4, 1e-15);
    }
    return inner + 2.0 * band;
}

/// int_R f(v) |v|^{-alpha-1} dv for even f vanishing on [0,1) and constant beyond 2.
inline double tail_integral(double (*f)(double), double alpha) {
    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    const double body = GK::integrate([&](double v) { return f(v) * std::pow(v, -alpha - 1.0); }, 1.0, 2.0, 15, 1e-14);
    return 2.0 * (body + f(3.0) * std::pow(2.0, -alpha) / alpha);
}

/// E[1 - K(lambda Z)] for standard normal Z: Kronrod on the transition band plus the exact Gaussian tail.
inline double gaussian_truncated_mean(double lambda) {
    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    const double lo = 1.0 / lambda, hi = 2.0 / lambda;
    double band = 0.0;
    for (int k = 0; k < 8; ++k) {
        const double a = lo + (hi - lo) * k / 8.0, b = lo + (hi - lo) * (k + 1) / 8.0;
        band += GK::integrate([&](double z) { return (1.0 - K(lambda * z)) * std::exp(-0.5 * z * z); }, a, b, 10,
                              1e-15);
    }
    return 2.0 * (band / std::sqrt(2.0 * pi) + 0.5 * std::erfc(hi / std::sqrt(2.0)));
}

/// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    return d;
}

struct MeanSe {
    double mean = 0.0, se = 0.0;
};

template <class It>
MeanSe mean_se(It first, It last) {
    double s = 0.0, s2 = 0.0, m = 0.0;
    for (auto it = first; it != last; ++it) s += *it, s2 += *it * *it, m += 1.0;
    const double mu = s / m;
    return {mu, std::sqrt(std::max(s2 / m - mu * mu, 0.0) / m)};
}

}  // namespace oracle
