#pragma once

// Centering terms P_n f(x, theta) of the three test functions and their
// theta-gradients.
//
// With s = u^2 sigma^2 and c(x) = 2 delta x^{1-alpha/2} u^alpha Delta^{1-alpha/2},
// the Euler increment law has characteristic function
//     Fg(y) = exp(-s y^2 - c |y|^alpha),
// so P_n f1 = Fg(1) and, for the truncation kernels,
//     P_n K_k = (1/pi) int_0^inf FK_k(y) Fg(y) dy,   P_n f_k = 1 - P_n K_k.
// The gradients only need the moments
//     H_w = (1/pi) int_0^inf FK_k(y) w(y) Fg(y) dy,  w in {1, y^2, y^alpha, y^alpha ln y}.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stablecir/common.hpp"
#include "stablecir/kernels.hpp"
#include "stablecir/quadrature.hpp"
#include "stablecir/stable_levy.hpp"

namespace stablecir {

struct Theta {
    double sigma_sq = 1.0;
    double delta = 1.0;
    double alpha = 1.5;

    /// Strict membership in (0,inf) x (0,inf) x (1,2).
    void validate() const {
        detail::require(std::isfinite(sigma_sq) && sigma_sq > 0.0, "Theta: sigma_sq must be positive");
        detail::require(std::isfinite(delta) && delta > 0.0, "Theta: delta must be positive");
        detail::require_alpha_open(alpha, "Theta");
    }

    /// Closure used by the centering terms: sigma_sq = 0 or delta = 0 allowed.
    void validate_closure() const {
        detail::require(std::isfinite(sigma_sq) && sigma_sq >= 0.0, "Theta: sigma_sq must be non-negative");
        detail::require(std::isfinite(delta) && delta >= 0.0, "Theta: delta must be non-negative");
        detail::require_alpha_open(alpha, "Theta");
    }

    Eigen::Vector3d vec() const { return {sigma_sq, delta, alpha}; }
    static Theta from_vec(const Eigen::Vector3d& v) { return {v[0], v[1], v[2]}; }
};

struct TuningConfig {
    double delta_n = 1e-4;
    std::size_t n = 10000;
    double p_exponent = 0.51;
    double u_n = 0.0;

    /// u_n = 1 / ln(1/Delta_n)^p.
    static double bandwidth(double delta_n, double p) {
        detail::require(delta_n > 0.0 && delta_n < 1.0, "bandwidth: delta_n must lie in (0,1)");
        return 1.0 / std::pow(std::log(1.0 / delta_n), p);
    }

    static TuningConfig from_rule(double delta_n, std::size_t n, double p = 0.51) {
        detail::require(p > 0.5, "TuningConfig: p_exponent must exceed 1/2");
        TuningConfig t{delta_n, n, p, bandwidth(delta_n, p)};
        t.validate();
        return t;
    }

    /// Explicit bandwidth, bypassing the rule (p_exponent is then informational).
    static TuningConfig with_bandwidth(double delta_n, std::size_t n, double u_n) {
        TuningConfig t{delta_n, n, 0.0, u_n};
        t.validate();
        return t;
    }

    void validate() const {
        detail::require(std::isfinite(delta_n) && delta_n > 0.0, "TuningConfig: delta_n must be positive");
        detail::require(std::isfinite(u_n) && u_n > 0.0, "TuningConfig: u_n must be positive");
    }
};

struct BandwidthRegime {
    bool p_ok = false;            // p > 1/2
    bool above_noise = false;     // u_n > sqrt(Delta_n)
    double u_sq_log = 0.0;        // u_n^2 ln(1/Delta_n), must go to 0 along refinement
    double u_over_sqrt_delta = 0.0;
};

inline BandwidthRegime check_bandwidth_regime(const TuningConfig& t) {
    BandwidthRegime r;
    r.p_ok = t.p_exponent > 0.5;
    r.u_over_sqrt_delta = t.u_n / std::sqrt(t.delta_n);
    r.above_noise = r.u_over_sqrt_delta > 1.0;
    r.u_sq_log = t.u_n * t.u_n * std::log(1.0 / t.delta_n);
    return r;
}

namespace detail {

/// 2 x^{1-alpha/2} u^alpha Delta^{1-alpha/2}; the jump scale of Fg per unit delta.
inline double jump_scale_per_delta(double x, double alpha, const TuningConfig& t) {
    return 2.0 * std::exp((1.0 - 0.5 * alpha) * std::log(x) + alpha * std::log(t.u_n) +
                          (1.0 - 0.5 * alpha) * std::log(t.delta_n));
}

/// d/dalpha ln c(x) = ln(u/sqrt(Delta)) - ln sqrt(x).
inline double log_scale_alpha_slope(double x, const TuningConfig& t) {
    return std::log(t.u_n / std::sqrt(t.delta_n)) - 0.5 * std::log(x);
}

inline void require_state(double x, const char* where) {
    if (!(x > 0.0) || !std::isfinite(x)) throw DomainError(std::string(where) + ": state x must be positive");
}

}  // namespace detail

/// Characteristic function of the Euler increment law at frequency y.
inline double fourier_g(double y, double x, const Theta& th, const TuningConfig& t) {
    detail::require_state(x, "fourier_g");
    th.validate_closure();
    const double s = t.u_n * t.u_n * th.sigma_sq;
    const double c = th.delta * detail::jump_scale_per_delta(x, th.alpha, t);
    const double ay = std::abs(y);
    return std::exp(-s * ay * ay - c * std::pow(ay, th.alpha));
}

inline double pn_f1(double x, const Theta& th, const TuningConfig& t) { return fourier_g(1.0, x, th, t); }

inline Eigen::Vector3d grad_pn_f1(double x, const Theta& th, const TuningConfig& t) {
    const double p = pn_f1(x, th, t);
    const double per_delta = detail::jump_scale_per_delta(x, th.alpha, t);
    const double c = th.delta * per_delta;
    return {-t.u_n * t.u_n * p, -per_delta * p, -c * detail::log_scale_alpha_slope(x, t) * p};
}

/// The four Fourier moments of one truncation kernel at one (s, c).
struct FourierMoments {
    double h0 = 0, h2 = 0, ha = 0, hal = 0;
    double residual_bound = 0;  // bound on the neglected tail beyond the cut-off
    double cutoff = 0;
    std::size_t evaluations = 0;
};

namespace detail {

// Empirical envelope |FK(y)| <= kEnvelopeScale exp(-kEnvelopeRate sqrt(y)); checked in the tests.
inline constexpr double kEnvelopeScale = 9.0;
inline constexpr double kEnvelopeRate = 1.5;
inline constexpr double kTruncationTarget = 1e-13;
inline constexpr double kMaxResidual = 1e-8;

/// Bound on (1/pi) int_Y^inf |FK_k(y)| max(1, y^3) Fg(y) dy, using Fg decreasing and y^w <= y^3 for
/// every moment weight w. `scale` rescales the frequency (FK_3(y) = FK(y/2)/2).
inline double tail_bound(double y_cut, double s, double c, double alpha, double scale) {
    const double fg = std::exp(-s * y_cut * y_cut - c * std::pow(y_cut, alpha));
    // With t = sqrt(y/scale): int_T^inf 2 t^7 e^{-k t} dt <= 2 T^7 e^{-kT} / (k - 7/T) for kT > 7,
    // and the change of variables contributes scale^4 (y^3 dy).
    const double tt = std::sqrt(y_cut / scale);
    if (kEnvelopeRate * tt <= 14.0) return std::numeric_limits<double>::infinity();
    const double env = 2.0 * std::pow(tt, 7.0) * std::exp(-kEnvelopeRate * tt) / (kEnvelopeRate - 7.0 / tt);
    const double amp = scale == 1.0 ? 1.0 : 0.5;
    return fg * amp * kEnvelopeScale * std::pow(scale, 4.0) * env / kPi;
}

}  // namespace detail

inline FourierMoments fourier_moments(KernelId k, double s, double c, double alpha, double abs_tol = 1e-12) {
    detail::require(k != KernelId::F1_Cos, "fourier_moments: only truncation kernels");
    detail::require_alpha_open(alpha, "fourier_moments");
    detail::require(s >= 0.0 && c >= 0.0 && std::isfinite(s) && std::isfinite(c),
                    "fourier_moments: scales must be finite and non-negative");
    const bool half = k == KernelId::F3_TruncHalfScale;
    const double scale = half ? 2.0 : 1.0;

    FourierMoments out;
    if (s == 0.0 && c == 0.0) {
        // Degenerate spike: the increment law is a point mass at 0, P_n K_k = K_k(0) = 1.
        out.h0 = 1.0;
        out.h2 = out.ha = out.hal = std::numeric_limits<double>::infinity();
        return out;
    }

    // FK is tabulated up to kFarRange; beyond it only the envelope bound is used.
    const double max_cut = FourierKCache::kFarRange * scale;
    double y_cut = 16.0 * scale;
    while (detail::tail_bound(y_cut, s, c, alpha, scale) > detail::kTruncationTarget && y_cut < max_cut)
        y_cut *= 1.25;
    y_cut = std::min(y_cut, max_cut);
    out.cutoff = y_cut;
    out.residual_bound = detail::tail_bound(y_cut, s, c, alpha, scale);
    if (!(out.residual_bound <= detail::kMaxResidual))
        throw QuadratureError("fourier_moments: truncation residual " + std::to_string(out.residual_bound) +
                              " exceeds 1e-8");

    const auto& fk = FourierKCache::instance();
    auto g = [&](double y) {
        const double fky = half ? 0.5 * fk(0.5 * y) : fk(y);
        const double ya = std::pow(y, alpha);
        const double base = fky * std::exp(-s * y * y - c * ya);
        return quad::Values<4>{base, base * y * y, base * ya, base * ya * std::log(y)};
    };
    quad::Options opt;
    opt.abs_tol = abs_tol * kPi;
    opt.max_panels = 50000;
    opt.initial_panels = static_cast<std::size_t>(std::ceil(y_cut / (2.0 * scale)));
    const auto r = quad::integrate_vector<4>(g, 0.0, y_cut, opt);
    if (!r.converged) throw QuadratureError("fourier_moments: adaptive quadrature did not converge");
    out.h0 = r.value[0] / kPi;
    out.h2 = r.value[1] / kPi;
    out.ha = r.value[2] / kPi;
    out.hal = r.value[3] / kPi;
    out.evaluations = r.evaluations;
    return out;
}

/// P_n f_k for a truncation kernel, with the truncation residual bound.
struct TruncValue {
    double value = 0;
    double residual_bound = 0;
};

inline TruncValue pn_trunc_detailed(KernelId k, double x, const Theta& th, const TuningConfig& t) {
    detail::require_state(x, "pn_trunc");
    th.validate_closure();
    const double s = t.u_n * t.u_n * th.sigma_sq;
    const double c = th.delta * detail::jump_scale_per_delta(x, th.alpha, t);
    const auto m = fourier_moments(k, s, c, th.alpha);
    return {1.0 - m.h0, m.residual_bound};
}

inline double pn_trunc(KernelId k, double x, const Theta& th, const TuningConfig& t) {
    return pn_trunc_detailed(k, x, th, t).value;
}

namespace detail {

inline Eigen::Vector3d trunc_gradient_from_moments(const FourierMoments& m, double per_delta, double delta,
                                                   double slope, double u_n) {
    const double c = delta * per_delta;
    // Gradient of P_n K; P_n f = 1 - P_n K flips the sign.
    const Eigen::Vector3d gk{-u_n * u_n * m.h2, -per_delta * m.ha, -c * (m.hal + slope * m.ha)};
    return -gk;
}

}  // namespace detail

inline Eigen::Vector3d grad_pn_trunc(KernelId k, double x, const Theta& th, const TuningConfig& t) {
    detail::require_state(x, "grad_pn_trunc");
    th.validate_closure();
    const double s = t.u_n * t.u_n * th.sigma_sq;
    const double per_delta = detail::jump_scale_per_delta(x, th.alpha, t);
    const auto m = fourier_moments(k, s, th.delta * per_delta, th.alpha);
    return detail::trunc_gradient_from_moments(m, per_delta, th.delta, detail::log_scale_alpha_slope(x, t), t.u_n);
}

/// First-order small-scale expansion u^alpha Delta^{1-alpha/2} c_alpha delta x^{1-alpha/2} int f/|v|^{alpha+1}.
inline double leading_term(const TailFunction& f, double x, const Theta& th, const TuningConfig& t) {
    detail::require_state(x, "leading_term");
    th.validate_closure();
    return 0.5 * detail::jump_scale_per_delta(x, th.alpha, t) * c_alpha(th.alpha) * th.delta *
           tail_integral(f, th.alpha);
}

inline double leading_term(KernelId k, double x, const Theta& th, const TuningConfig& t) {
    return leading_term(kernel_tail_function(k), x, th, t);
}

/// Chebyshev-Lobatto interpolation on [-1, 1] with m nodes.
class ChebyshevGrid {
public:
    explicit ChebyshevGrid(std::size_t m = 1) : nodes_(m), bary_(m) {
        detail::require(m >= 1, "ChebyshevGrid: need at least one node");
        for (std::size_t j = 0; j < m; ++j) {
            nodes_[j] = m == 1 ? 0.0 : std::cos(kPi * static_cast<double>(j) / static_cast<double>(m - 1));
            bary_[j] = ((j % 2) ? -1.0 : 1.0) * ((j == 0 || j + 1 == m) ? 0.5 : 1.0);
        }
    }

    std::size_t size() const noexcept { return nodes_.size(); }
    double node(std::size_t j) const { return nodes_[j]; }

    /// Lagrange basis values L_j(t), accumulated into `out` with weight `w`.
    void accumulate_basis(double t, double w, std::vector<double>& out) const {
        const std::size_t m = nodes_.size();
        if (m == 1) {
            out[0] += w;
            return;
        }
        double den = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double d = t - nodes_[j];
            if (d == 0.0) {
                out[j] += w;
                return;
            }
            den += bary_[j] / d;
        }
        for (std::size_t j = 0; j < m; ++j) out[j] += w * bary_[j] / ((t - nodes_[j]) * den);
    }

private:
    std::vector<double> nodes_, bary_;
};

/// Maps states in [x_lo, x_hi] to [-1, 1] linearly in ln x. The map does not depend on theta,
/// so interpolation weights of a fixed sample can be summed once and reused for every theta.
struct StateInterval {
    double x_lo = 1.0, x_hi = 1.0;

    StateInterval() = default;
    StateInterval(double lo, double hi) : x_lo(lo), x_hi(hi) {
        detail::require_state(lo, "StateInterval");
        detail::require(hi >= lo && std::isfinite(hi), "StateInterval: need x_lo <= x_hi");
    }

    bool degenerate() const { return !(std::log(x_hi / x_lo) > 1e-12); }

    double position(double x) const {
        if (degenerate()) return 0.0;
        const double a = std::log(x_lo), b = std::log(x_hi);
        return std::clamp((2.0 * std::log(x) - a - b) / (b - a), -1.0, 1.0);
    }

    double state_at(double t) const {
        const double a = std::log(x_lo), b = std::log(x_hi);
        return std::exp(0.5 * (a + b) + 0.5 * (b - a) * t);
    }

    /// Node count giving interpolation errors near rounding for every alpha in (1,2).
    std::size_t default_nodes() const {
        if (degenerate()) return 1;
        const double width = 0.5 * std::log(x_hi / x_lo);
        return std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(14.0 + 8.0 * width)), 14, 96);
    }
};

/// Centering terms of f2, f3 and their gradients, tabulated at one theta on the
/// Chebyshev nodes of a StateInterval. P_n f_{2,3} depend on x only through
/// c(x), which is smooth in ln x, so interpolation in ln x is spectrally accurate.
class CenteringTable {
public:
    struct Node {
        Eigen::Vector2d value;             // P_n f2, P_n f3
        Eigen::Matrix<double, 2, 3> grad;  // rows f2, f3; columns sigma^2, delta, alpha
    };

    CenteringTable(const Theta& th, const TuningConfig& t, const StateInterval& range, std::size_t nodes = 0)
        : theta_(th), tuning_(t), range_(range), grid_(nodes ? nodes : range.default_nodes()) {
        th.validate_closure();
        t.validate();
        if (range.degenerate()) grid_ = ChebyshevGrid(1);
        const double s = t.u_n * t.u_n * th.sigma_sq;
        nodes_.resize(grid_.size());
        for (std::size_t j = 0; j < grid_.size(); ++j) {
            const double x = range.degenerate() ? range.x_lo : range.state_at(grid_.node(j));
            const double per_delta = detail::jump_scale_per_delta(x, th.alpha, t);
            const double slope = detail::log_scale_alpha_slope(x, t);
            for (int k = 0; k < 2; ++k) {
                const auto fm = fourier_moments(k == 0 ? KernelId::F2_Trunc : KernelId::F3_TruncHalfScale, s,
                                                th.delta * per_delta, th.alpha);
                residual_ = std::max(residual_, fm.residual_bound);
                nodes_[j].value[k] = 1.0 - fm.h0;
                nodes_[j].grad.row(k) =
                    detail::trunc_gradient_from_moments(fm, per_delta, th.delta, slope, t.u_n).transpose();
            }
        }
    }

    CenteringTable(const Theta& th, const TuningConfig& t, double x_lo, double x_hi)
        : CenteringTable(th, t, StateInterval(x_lo, x_hi)) {}

    /// (P_n f1, P_n f2, P_n f3) at x.
    Eigen::Vector3d values(double x) const {
        const auto w = basis(x);
        Eigen::Vector3d v;
        v[0] = pn_f1_exact(x);
        v.tail<2>() = Eigen::Vector2d::Zero();
        for (std::size_t j = 0; j < nodes_.size(); ++j) v.tail<2>() += w[j] * nodes_[j].value;
        return v;
    }

    /// Rows: gradients of P_n f1, P_n f2, P_n f3 with respect to (sigma^2, delta, alpha).
    Eigen::Matrix3d gradients(double x) const {
        const auto w = basis(x);
        Eigen::Matrix3d g = Eigen::Matrix3d::Zero();
        g.row(0) = grad_f1_exact(x).transpose();
        for (std::size_t j = 0; j < nodes_.size(); ++j) g.bottomRows<2>() += w[j] * nodes_[j].grad;
        return g;
    }

    /// Sums over a sample given its summed basis weights (see StateInterval).
    void accumulate_truncated(const std::vector<double>& weight_sums, Eigen::Vector2d& value_sum,
                              Eigen::Matrix<double, 2, 3>& grad_sum) const {
        detail::require(weight_sums.size() == nodes_.size(), "CenteringTable: weight/node count mismatch");
        for (std::size_t j = 0; j < nodes_.size(); ++j) {
            value_sum += weight_sums[j] * nodes_[j].value;
            grad_sum += weight_sums[j] * nodes_[j].grad;
        }
    }

    double pn_f1_exact(double x) const {
        return std::exp(-tuning_.u_n * tuning_.u_n * theta_.sigma_sq -
                        theta_.delta * detail::jump_scale_per_delta(x, theta_.alpha, tuning_));
    }

    Eigen::Vector3d grad_f1_exact(double x) const {
        const double per_delta = detail::jump_scale_per_delta(x, theta_.alpha, tuning_);
        const double c = theta_.delta * per_delta;
        const double p = std::exp(-tuning_.u_n * tuning_.u_n * theta_.sigma_sq - c);
        return {-tuning_.u_n * tuning_.u_n * p, -per_delta * p, -c * detail::log_scale_alpha_slope(x, tuning_) * p};
    }

    double residual_bound() const noexcept { return residual_; }
    std::size_t node_count() const noexcept { return nodes_.size(); }
    const ChebyshevGrid& grid() const noexcept { return grid_; }
    const StateInterval& range() const noexcept { return range_; }
    const Theta& theta() const noexcept { return theta_; }

private:
    std::vector<double> basis(double x) const {
        std::vector<double> w(nodes_.size(), 0.0);
        grid_.accumulate_basis(range_.position(x), 1.0, w);
        return w;
    }

    Theta theta_;
    TuningConfig tuning_;
    StateInterval range_;
    ChebyshevGrid grid_;
    double residual_ = 0;
    std::vector<Node> nodes_;
};

}  // namespace stablecir
