#pragma once

// Test functions f1 = cos, f2 = 1 - K, f3 = f2(2 .), the smooth truncation K,
// its Fourier transform FK(y) = int K(z) exp(-iyz) dz, and the tail functionals
// int f(v) / |v|^{alpha+1} dv that enter the limit matrices.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

#include "stablecir/common.hpp"
#include "stablecir/quadrature.hpp"
#include "stablecir/stable_levy.hpp"

namespace stablecir {

enum class KernelId { F1_Cos, F2_Trunc, F3_TruncHalfScale };

/// Sign of the 1/(1-|x|) term in K's transition branch. `Smooth` is the
/// C-infinity step (K -> 1 at |x| = 1+, K -> 0 at |x| = 2-). `Flipped`
/// flips the sign, which leaves K discontinuous at |x| = 1; it exists only as
/// a mutation hook for the validation suite.
enum class TransitionSign { Smooth, Flipped };

namespace debug {
inline std::atomic<TransitionSign>& transition_sign() {
    static std::atomic<TransitionSign> sign{TransitionSign::Smooth};
    return sign;
}
}  // namespace debug

namespace detail {

inline double transition_exponent(double ax, TransitionSign sign) {
    return sign == TransitionSign::Smooth ? 1.0 / (2.0 - ax) + 1.0 / (1.0 - ax)
                                          : 1.0 / (2.0 - ax) - 1.0 / (1.0 - ax);
}

}  // namespace detail

inline double K(double x, TransitionSign sign) {
    const double ax = std::abs(x);
    if (ax <= 1.0) return 1.0;
    if (ax >= 2.0) return 0.0;
    const double e = detail::transition_exponent(ax, sign);
    if (e > 700.0) return 0.0;
    return 1.0 / (1.0 + std::exp(e));
}

/// Smooth truncation: 1 on |x| <= 1, 0 on |x| >= 2.
inline double K(double x) { return K(x, debug::transition_sign().load(std::memory_order_relaxed)); }

/// K'(v) for 1 < v < 2 under the smooth convention.
inline double K_prime(double v) {
    if (v <= 1.0 || v >= 2.0) return 0.0;
    const double e = 1.0 / (2.0 - v) + 1.0 / (1.0 - v);
    if (std::abs(e) > 700.0) return 0.0;
    const double de = 1.0 / ((2.0 - v) * (2.0 - v)) + 1.0 / ((1.0 - v) * (1.0 - v));
    return -de / (2.0 + 2.0 * std::cosh(e));
}

inline double kernel_value(KernelId id, double x) {
    switch (id) {
        case KernelId::F1_Cos: return std::cos(x);
        case KernelId::F2_Trunc: return 1.0 - K(x);
        case KernelId::F3_TruncHalfScale: return 1.0 - K(2.0 * x);
    }
    return 0.0;
}

/// FK(y) and dFK/dy evaluated by adaptive quadrature over the transition band.
struct FourierKValue {
    double value = 0;
    double derivative = 0;
};

inline FourierKValue fourier_K_direct(double y, TransitionSign sign, double abs_tol = 1e-13) {
    y = std::abs(y);
    quad::Options opt;
    opt.abs_tol = abs_tol;
    opt.max_panels = 20000;
    opt.initial_panels = static_cast<std::size_t>(std::ceil(y / 4.0)) + 1;
    FourierKValue out;
    if (y >= 1.0 && sign == TransitionSign::Smooth) {
        // Integration by parts over [1,2] removes the exact [0,1] piece and its cancellation:
        // FK(y) = -(2/y) int K'(v) sin(yv) dv.
        auto g = [y](double v) {
            const double kp = K_prime(v);
            return quad::Values<2>{kp * std::sin(y * v), kp * v * std::cos(y * v)};
        };
        const auto r = quad::integrate_vector<2>(g, 1.0, 2.0, opt);
        if (!r.converged) throw QuadratureError("fourier_K: no convergence at y=" + std::to_string(y));
        out.value = -2.0 * r.value[0] / y;
        out.derivative = 2.0 * r.value[0] / (y * y) - 2.0 * r.value[1] / y;
        return out;
    }
    auto g = [y, sign](double v) {
        const double k = K(v, sign);
        return quad::Values<2>{k * std::cos(y * v), -k * v * std::sin(y * v)};
    };
    const auto r = quad::integrate_vector<2>(g, 1.0, 2.0, opt);
    if (!r.converged) throw QuadratureError("fourier_K: no convergence at y=" + std::to_string(y));
    double sinc, dsinc;  // sin(y)/y and its derivative
    if (y < 1e-4) {
        sinc = 1.0 - y * y / 6.0;
        dsinc = -y / 3.0;
    } else {
        sinc = std::sin(y) / y;
        dsinc = (y * std::cos(y) - std::sin(y)) / (y * y);
    }
    out.value = 2.0 * sinc + 2.0 * r.value[0];
    out.derivative = 2.0 * dsinc + 2.0 * r.value[1];
    return out;
}

/// FK tabulated with cubic Hermite interpolation: step 1/128 on [0, 256] built
/// eagerly, step 1/16 on [256, 1024] built on first use (|FK| < 2e-11 there), and
/// direct quadrature beyond. Read-only once built.
class FourierKCache {
public:
    static constexpr double kStep = 1.0 / 128.0;
    static constexpr double kRange = 256.0;
    static constexpr double kFarStep = 1.0 / 16.0;
    static constexpr double kFarRange = 1024.0;

    explicit FourierKCache(TransitionSign sign) : sign_(sign) { near_ = build(0.0, kRange, kStep); }

    double operator()(double y) const {
        y = std::abs(y);
        if (y < kRange) return near_.eval(y, kStep);
        if (y < kFarRange) {
            std::call_once(far_once_, [this] { far_ = build(kRange, kFarRange, kFarStep); });
            return far_.eval(y - kRange, kFarStep);
        }
        return fourier_K_direct(y, sign_).value;
    }

    TransitionSign sign() const noexcept { return sign_; }

    static const FourierKCache& instance(TransitionSign sign) {
        if (sign == TransitionSign::Smooth) {
            static const FourierKCache smooth(TransitionSign::Smooth);
            return smooth;
        }
        static const FourierKCache flipped(TransitionSign::Flipped);
        return flipped;
    }

    static const FourierKCache& instance() { return instance(debug::transition_sign().load()); }

private:
    struct Segment {
        std::vector<double> value, slope;

        double eval(double y, double h) const {
            const double t = y / h;
            const std::size_t i = std::min(static_cast<std::size_t>(t), value.size() - 2);
            const double s = t - static_cast<double>(i);
            const double s2 = s * s, s3 = s2 * s;
            const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
            const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
            return h00 * value[i] + h10 * h * slope[i] + h01 * value[i + 1] + h11 * h * slope[i + 1];
        }
    };

    Segment build(double lo, double hi, double h) const {
        const std::size_t m = static_cast<std::size_t>((hi - lo) / h) + 1;
        Segment seg;
        seg.value.resize(m);
        seg.slope.resize(m);
        for (std::size_t i = 0; i < m; ++i) {
            const auto v = fourier_K_direct(lo + static_cast<double>(i) * h, sign_);
            seg.value[i] = v.value;
            seg.slope[i] = v.derivative;
        }
        return seg;
    }

    TransitionSign sign_;
    Segment near_;
    mutable Segment far_;
    mutable std::once_flag far_once_;
};

/// FK(y), or F[K(2 .)](y) = FK(y/2)/2 when `half_scale`. Real and even.
inline double fourier_K(double y, bool half_scale = false) {
    const auto& fk = FourierKCache::instance();
    return half_scale ? 0.5 * fk(0.5 * y) : fk(y);
}

/// An even function f on R described on v >= 0: f vanishes on [0, lower) and
/// equals f(upper) on [upper, inf).
struct TailFunction {
    std::function<double(double)> f;
    double lower = 1.0;
    double upper = 2.0;
};

inline TailFunction kernel_tail_function(KernelId id) {
    switch (id) {
        case KernelId::F2_Trunc: return {[](double v) { return 1.0 - K(v); }, 1.0, 2.0};
        case KernelId::F3_TruncHalfScale: return {[](double v) { return 1.0 - K(2.0 * v); }, 0.5, 1.0};
        case KernelId::F1_Cos: break;
    }
    throw DomainError("kernel_tail_function: cos does not vanish near zero");
}

/// Pointwise product of two truncation kernels (f2^2, f2 f3, f3^2).
inline TailFunction product_tail_function(KernelId a, KernelId b) {
    const TailFunction fa = kernel_tail_function(a), fb = kernel_tail_function(b);
    return {[fa, fb](double v) { return fa.f(v) * fb.f(v); }, std::max(fa.lower, fb.lower),
            std::max(fa.upper, fb.upper)};
}

/// int_R f(v) / |v|^{alpha+1} dv = 2 int_lower^inf, with the constant tail beyond `upper` done exactly.
inline double tail_integral(const TailFunction& tf, double alpha, double abs_tol = 1e-12) {
    detail::require_alpha_open(alpha, "tail_integral");
    detail::require(tf.lower > 0.0 && tf.upper >= tf.lower, "tail_integral: need 0 < lower <= upper");
    // An integrand that does not vanish near the origin is not integrable against |v|^{-alpha-1}.
    if (tf.f(0.0) != 0.0 || tf.f(0.5 * tf.lower) != 0.0)
        throw DomainError("tail_integral: f must vanish on a neighbourhood of 0");
    quad::Options opt;
    opt.abs_tol = abs_tol;
    opt.initial_panels = 4;
    double body = 0.0;
    if (tf.upper > tf.lower)
        body = quad::integrate([&](double v) { return tf.f(v) / std::pow(v, alpha + 1.0); }, tf.lower, tf.upper, opt)
                   .value;
    const double f_inf = tf.f(tf.upper);
    const double tail = f_inf * std::pow(tf.upper, -alpha) / alpha;
    return 2.0 * (body + tail);
}

inline double tail_integral(KernelId id, double alpha) { return tail_integral(kernel_tail_function(id), alpha); }

/// psi(alpha) = c_alpha int f2(v) / |v|^{alpha+1} dv.
inline double psi(double alpha) { return c_alpha(alpha) * tail_integral(KernelId::F2_Trunc, alpha); }

/// d/dalpha c_alpha, from the logarithmic derivative of the closed form.
inline double dc_alpha(double alpha) {
    detail::require_alpha_open(alpha, "dc_alpha");
    const double dlog = 1.0 / alpha + 1.0 / (alpha - 1.0) + boost::math::digamma(2.0 - alpha) +
                        0.5 * kPi * std::tan(kPi * alpha / 2.0);
    return c_alpha(alpha) * dlog;
}

/// dpsi/dalpha by differentiating under the integral (ln v weight) plus the c_alpha derivative.
inline double dpsi_dalpha(double alpha) {
    detail::require_alpha_open(alpha, "dpsi_dalpha");
    quad::Options opt;
    opt.abs_tol = 1e-12;
    opt.initial_panels = 4;
    const double body =
        quad::integrate([alpha](double v) { return (1.0 - K(v)) * std::log(v) / std::pow(v, alpha + 1.0); }, 1.0,
                        2.0, opt)
            .value;
    // int_2^inf ln(v) v^{-alpha-1} dv
    const double tail = std::pow(2.0, -alpha) * (alpha * std::log(2.0) + 1.0) / (alpha * alpha);
    const double dtail_integral = -2.0 * (body + tail);
    return dc_alpha(alpha) * tail_integral(KernelId::F2_Trunc, alpha) + c_alpha(alpha) * dtail_integral;
}

namespace detail {

// (2/pi) int_0^Y FK(y) y^alpha (ln y)^power dy over [0, y_max].
inline double fourier_moment(double alpha, bool log_weight, double y_max) {
    const auto& fk = FourierKCache::instance();
    auto g = [&](double y) {
        if (y == 0.0) return 0.0;
        const double w = std::pow(y, alpha) * (log_weight ? std::log(y) : 1.0);
        return fk(y) * w;
    };
    quad::Options opt;
    opt.abs_tol = 1e-10;
    opt.max_panels = 100000;
    opt.initial_panels = static_cast<std::size_t>(y_max / 2.0);
    return 2.0 / kPi * quad::integrate(g, 0.0, y_max, opt).value;
}

}  // namespace detail

/// Upper limit of the y-integrals for the undamped Fourier identities.
inline constexpr double kFourierIdentityRange = 640.0;

/// psi via the Fourier identity (1/pi) int_R FK(y) |y|^alpha dy.
inline double psi_fourier(double alpha) {
    detail::require_alpha_open(alpha, "psi_fourier");
    return detail::fourier_moment(alpha, false, kFourierIdentityRange);
}

/// dpsi/dalpha via (1/pi) int_R FK(y) |y|^alpha ln|y| dy.
inline double dpsi_dalpha_fourier(double alpha) {
    detail::require_alpha_open(alpha, "dpsi_dalpha_fourier");
    return detail::fourier_moment(alpha, true, kFourierIdentityRange);
}

}  // namespace stablecir
