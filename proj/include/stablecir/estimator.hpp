#pragma once

// Estimating equation F_n(theta) = 0 for theta = (sigma^2, delta, alpha), its
// Newton solver, the rate matrices and the plug-in asymptotic covariance.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stablecir/common.hpp"
#include "stablecir/kernels.hpp"
#include "stablecir/moment_engine.hpp"
#include "stablecir/quadrature.hpp"
#include "stablecir/random.hpp"
#include "stablecir/sde_sim.hpp"
#include "stablecir/stable_levy.hpp"

namespace stablecir {

enum class Regime { FixedWindow, Ergodic };

inline const char* to_string(Regime r) { return r == Regime::FixedWindow ? "fixed_window" : "ergodic"; }

struct RegimeSpec {
    Regime regime = Regime::FixedWindow;

    void validate(const ModelParams& generating) const {
        if (regime == Regime::Ergodic && !(generating.b > 0.0))
            throw DomainError("RegimeSpec: the ergodic regime requires b > 0");
    }
};

/// sqrt(n) Delta^{1/alpha + alpha/4 - 1/2}: must be small for the long-horizon limit theory.
inline double ergodic_rate_indicator(std::size_t n, double delta_n, double alpha) {
    return std::sqrt(static_cast<double>(n)) * std::pow(delta_n, 1.0 / alpha + 0.25 * alpha - 0.5);
}

/// Symmetrized increments rho_i with their base states, plus what the solver
/// needs from the path.
struct Increments {
    std::vector<double> rho;
    std::vector<double> x_base;
    std::size_t n = 0;       // number of observation intervals; F_n carries 1/n
    double delta_n = 0.0;
    Eigen::Vector3d f_sum = Eigen::Vector3d::Zero();  // sum_i f_k(rho_i)
    StateInterval range;
    /// Summed interpolation weights of x_base on range's default Chebyshev grid.
    std::vector<double> weight_sums;
    /// Full observation grid for the plug-in path functional; may be empty.
    std::shared_ptr<const std::vector<double>> observations;

    std::size_t size() const noexcept { return x_base.size(); }

    std::vector<double> weight_sums_for(std::size_t nodes) const {
        const ChebyshevGrid grid(range.degenerate() ? 1 : nodes);
        std::vector<double> w(grid.size(), 0.0);
        for (double x : x_base) grid.accumulate_basis(range.position(x), 1.0, w);
        return w;
    }

    /// Sets the state range and the interpolation weights; call after filling x_base.
    void prepare() {
        if (x_base.empty()) return;
        const auto [lo, hi] = std::minmax_element(x_base.begin(), x_base.end());
        range = StateInterval(*lo, *hi);
        weight_sums = weight_sums_for(range.default_nodes());
    }
};

inline Eigen::Vector3d test_function_values(double rho) {
    return {kernel_value(KernelId::F1_Cos, rho), kernel_value(KernelId::F2_Trunc, rho),
            kernel_value(KernelId::F3_TruncHalfScale, rho)};
}

inline Increments symmetrized_increments(const PathSample& path, const TuningConfig& t) {
    detail::require(path.observations.size() >= 3, "symmetrized_increments: need at least 3 observations");
    detail::require(path.observations.size() == path.n + 1, "symmetrized_increments: length must equal n+1");
    t.validate();
    const auto& x = path.observations;
    const double scale = t.u_n / std::sqrt(path.delta_n);
    Increments inc;
    inc.n = path.n;
    inc.delta_n = path.delta_n;
    const std::size_t m = path.n / 2;
    inc.rho.reserve(m);
    inc.x_base.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double base = x[2 * i];
        if (!(base > 0.0) || !std::isfinite(base))
            throw DomainError("symmetrized_increments: non-positive base state at index " + std::to_string(2 * i));
        const double r = scale * (x[2 * i + 2] - 2.0 * x[2 * i + 1] + base) / std::sqrt(base);
        inc.rho.push_back(r);
        inc.x_base.push_back(base);
        inc.f_sum += test_function_values(r);
    }
    inc.prepare();
    inc.observations = std::make_shared<const std::vector<double>>(x);
    return inc;
}

/// Increments whose observed moments are replaced by the centering terms at theta_star,
/// so that F_n(theta_star) = 0 up to rounding.
inline Increments synthetic_centered_increments(std::vector<double> x_base, std::size_t n, double delta_n,
                                                const Theta& theta_star, const TuningConfig& t) {
    detail::require(!x_base.empty(), "synthetic_centered_increments: empty base states");
    Increments inc;
    inc.n = n;
    inc.delta_n = delta_n;
    inc.x_base = std::move(x_base);
    inc.prepare();
    const CenteringTable tab(theta_star, t, inc.range);
    for (double xb : inc.x_base) inc.f_sum += tab.values(xb);
    inc.rho.assign(inc.x_base.size(), std::numeric_limits<double>::quiet_NaN());
    return inc;
}

/// F_n and its Jacobian at one theta, sharing one centering table.
struct Evaluation {
    Eigen::Vector3d F = Eigen::Vector3d::Zero();
    Eigen::Matrix3d J = Eigen::Matrix3d::Zero();
    double residual_bound = 0.0;
};

/// `nodes` = 0 uses the increments' default interpolation grid.
inline Evaluation evaluate(const Theta& th, const Increments& inc, const TuningConfig& t, bool with_jacobian = true,
                           std::size_t nodes = 0) {
    th.validate_closure();
    Evaluation ev;
    if (inc.size() == 0) return ev;
    detail::require(inc.n > 0, "evaluate: increments carry n = 0");
    const std::size_t m = nodes ? nodes : inc.weight_sums.size();
    const CenteringTable tab(th, t, inc.range, m);
    Eigen::Vector2d trunc_sum = Eigen::Vector2d::Zero();
    Eigen::Matrix<double, 2, 3> trunc_grad = Eigen::Matrix<double, 2, 3>::Zero();
    if (tab.node_count() == inc.weight_sums.size())
        tab.accumulate_truncated(inc.weight_sums, trunc_sum, trunc_grad);
    else
        tab.accumulate_truncated(inc.weight_sums_for(tab.node_count()), trunc_sum, trunc_grad);
    double f1_sum = 0.0;
    Eigen::Vector3d f1_grad = Eigen::Vector3d::Zero();
    for (double xb : inc.x_base) {
        f1_sum += tab.pn_f1_exact(xb);
        if (with_jacobian) f1_grad += tab.grad_f1_exact(xb);
    }
    const double inv_n = 1.0 / static_cast<double>(inc.n);
    Eigen::Vector3d p_sum;
    p_sum << f1_sum, trunc_sum;
    ev.F = inv_n * (inc.f_sum - p_sum);
    if (with_jacobian) {
        ev.J.row(0) = -inv_n * f1_grad.transpose();
        ev.J.bottomRows<2>() = -inv_n * trunc_grad;
    }
    ev.residual_bound = tab.residual_bound();
    return ev;
}

inline Eigen::Vector3d estimating_function(const Theta& th, const Increments& inc, const TuningConfig& t) {
    return evaluate(th, inc, t, false).F;
}

inline Eigen::Matrix3d jacobian(const Theta& th, const Increments& inc, const TuningConfig& t) {
    return evaluate(th, inc, t, true).J;
}

namespace detail {

/// 1 / (u^{alpha/2} Delta^{1/2 - alpha/4}).
inline double jump_rate(double alpha, const TuningConfig& t) {
    return 1.0 / (std::pow(t.u_n, 0.5 * alpha) * std::pow(t.delta_n, 0.5 - 0.25 * alpha));
}

}  // namespace detail

inline Eigen::Matrix3d rate_matrix_a(const Theta& th, const TuningConfig& t) {
    const double rn = std::sqrt(static_cast<double>(t.n));
    const double v = detail::jump_rate(th.alpha, t);
    Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
    a(0, 0) = rn / (t.u_n * t.u_n);
    a(1, 1) = rn * v;
    a(2, 2) = rn * v;
    return a;
}

inline Eigen::Matrix3d rate_matrix_lambda(const Theta& th, const TuningConfig& t) {
    const double rn = std::sqrt(static_cast<double>(t.n));
    const double v = detail::jump_rate(th.alpha, t);
    Eigen::Matrix3d l = Eigen::Matrix3d::Zero();
    l(0, 0) = 1.0 / rn;
    l(1, 1) = v / rn;
    l(1, 2) = -th.delta * std::log(t.u_n / std::sqrt(t.delta_n)) * v / rn;
    l(2, 2) = v / rn;
    return l;
}

/// Plug-in path functional I(alpha) = int X^{1-alpha/2} dt and its alpha-derivative.
struct PluginI {
    double i_hat = 0.0;
    double di_hat = 0.0;
    /// Length of the window the integral runs over (0 for the ergodic time average).
    double window = 0.0;

    /// Time-averaged value that enters the limit matrices.
    double normalized_i() const { return window > 0.0 ? i_hat / window : i_hat; }
    double normalized_di() const { return window > 0.0 ? di_hat / window : di_hat; }
};

namespace detail {

inline PluginI plugin_from_grid(double alpha, const std::vector<double>& x, std::size_t count, double step,
                                Regime regime) {
    require_alpha_open(alpha, "plugin_I");
    require(count > 0, "plugin_I: empty grid");
    const double expo = 1.0 - 0.5 * alpha;
    double s = 0.0, ds = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        if (!(x[i] > 0.0) || !std::isfinite(x[i])) throw DomainError("plugin_I: non-positive state");
        const double w = std::pow(x[i], expo);
        s += w;
        ds -= w * 0.5 * std::log(x[i]);
    }
    PluginI out;
    if (regime == Regime::FixedWindow) {
        out.i_hat = step * s;
        out.di_hat = step * ds;
        out.window = step * static_cast<double>(count);
    } else {
        out.i_hat = s / static_cast<double>(count);
        out.di_hat = ds / static_cast<double>(count);
    }
    return out;
}

}  // namespace detail

/// FixedWindow: left Riemann sums Delta sum_{i<n} over [0, T]; Ergodic: time averages.
inline PluginI plugin_I(double alpha, const PathSample& path, const RegimeSpec& regime) {
    detail::require(path.observations.size() == path.n + 1 && path.n >= 1, "plugin_I: malformed path");
    return detail::plugin_from_grid(alpha, path.observations, path.n, path.delta_n, regime.regime);
}

/// Same functional from increments: the full grid when available, else the even-indexed bases.
inline PluginI plugin_I(double alpha, const Increments& inc, const RegimeSpec& regime) {
    if (inc.observations && inc.observations->size() == inc.n + 1)
        return detail::plugin_from_grid(alpha, *inc.observations, inc.n, inc.delta_n, regime.regime);
    return detail::plugin_from_grid(alpha, inc.x_base, inc.x_base.size(), 2.0 * inc.delta_n, regime.regime);
}

/// Limit covariance of A_n F_n, with i the time-averaged path functional.
inline Eigen::Matrix3d sigma_matrix(const Theta& th, double i) {
    detail::require(i > 0.0, "sigma_matrix: i_hat must be positive");
    const double a = th.alpha;
    const double ci = c_alpha(a) * th.delta * i;
    const double t22 = tail_integral(product_tail_function(KernelId::F2_Trunc, KernelId::F2_Trunc), a);
    const double t23 = tail_integral(product_tail_function(KernelId::F2_Trunc, KernelId::F3_TruncHalfScale), a);
    const double t33 = tail_integral(product_tail_function(KernelId::F3_TruncHalfScale, KernelId::F3_TruncHalfScale), a);
    Eigen::Matrix3d s = Eigen::Matrix3d::Zero();
    s(0, 0) = 2.0 * th.sigma_sq * th.sigma_sq;
    s(1, 1) = ci * t22;
    s(1, 2) = s(2, 1) = ci * t23;
    s(2, 2) = ci * t33;
    return 0.5 * s;
}

/// Limit of A_n grad F_n Lambda_n, with i, di the time-averaged functional and its alpha-derivative.
inline Eigen::Matrix3d w_matrix(const Theta& th, double i, double di, double det_threshold = 1e-300) {
    detail::require(i > 0.0, "w_matrix: i_hat must be positive");
    const double a = th.alpha;
    const double ps = psi(a), dps = dpsi_dalpha(a);
    const double two_a = std::pow(2.0, a);
    const double d_psi_i = dps * i + ps * di;
    const double d_psi2_i = two_a * (std::log(2.0) * ps * i + d_psi_i);
    Eigen::Matrix3d w = Eigen::Matrix3d::Zero();
    w(0, 0) = 1.0;
    w(1, 1) = -ps * i;
    w(1, 2) = -th.delta * d_psi_i;
    w(2, 1) = -two_a * ps * i;
    w(2, 2) = -th.delta * d_psi2_i;
    w *= 0.5;
    const double det = w.determinant();
    if (!(std::abs(det) > det_threshold) || !std::isfinite(det))
        throw SingularMatrixError("w_matrix: determinant " + std::to_string(det) + " below threshold");
    return w;
}

/// Closed form of det W.
inline double w_determinant_closed_form(const Theta& th, double i) {
    const double ps = psi(th.alpha);
    return 0.125 * th.delta * ps * ps * i * i * std::pow(2.0, th.alpha) * std::log(2.0);
}

/// A_n grad F_n Lambda_n at theta.
inline Eigen::Matrix3d normalized_jacobian(const Theta& th, const Increments& inc, const TuningConfig& t) {
    return rate_matrix_a(th, t) * jacobian(th, inc, t) * rate_matrix_lambda(th, t);
}

/// 2x2 block for known alpha: rows (f1, f2), columns (sigma^2, delta).
inline Eigen::Matrix2d normalized_jacobian_known_alpha(const Theta& th, const Increments& inc,
                                                       const TuningConfig& t) {
    const Eigen::Matrix3d j = jacobian(th, inc, t);
    const double rn = std::sqrt(static_cast<double>(t.n));
    const double v = detail::jump_rate(th.alpha, t);
    const Eigen::Vector2d a{rn / (t.u_n * t.u_n), rn * v};
    const Eigen::Vector2d l{1.0 / rn, v / rn};
    return a.asDiagonal() * j.topLeftCorner<2, 2>() * l.asDiagonal();
}

struct EstimationResult {
    Theta theta_hat;
    bool converged = false;
    std::size_t iterations = 0;
    double residual_norm = std::numeric_limits<double>::infinity();
    Eigen::Matrix3d lambda_n = Eigen::Matrix3d::Zero();
    Eigen::Matrix3d sigma_hat = Eigen::Matrix3d::Zero();
    Eigen::Matrix3d w_hat = Eigen::Matrix3d::Zero();
    Eigen::Matrix3d asy_cov = Eigen::Matrix3d::Zero();
    std::array<std::pair<double, double>, 3> ci_95{};
    double i_hat = 0.0;
    double di_hat = 0.0;

    bool known_alpha = false;
    Theta start;
    std::size_t n = 0;
    double delta_n = 0.0;
    double u_n = 0.0;
    std::string message;

    /// Standard errors sqrt(diag(Lambda_n asy_cov Lambda_n^T)).
    Eigen::Vector3d standard_errors() const {
        const Eigen::Matrix3d cov = lambda_n * asy_cov * lambda_n.transpose();
        return cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    }
};

struct SolveOptions {
    double tol = 1e-8;
    std::size_t max_iterations = 100;
    std::size_t max_halvings = 12;
    /// Iterates stay in [margin, inf) x [margin, inf) x [1 + margin, 2 - margin].
    double margin = 1e-3;
    double upper_scale = 1e6;
    double max_relative_step = 0.5;
    double max_alpha_step = 0.2;
    /// Stop when the merit improved by less than `stagnation_ratio` over `stagnation_window` iterations.
    std::size_t stagnation_window = 8;
    double stagnation_ratio = 0.01;
    RegimeSpec regime;
};

namespace detail {

inline Eigen::Vector3d project(const Eigen::Vector3d& v, const SolveOptions& o) {
    return {std::clamp(v[0], o.margin, o.upper_scale), std::clamp(v[1], o.margin, o.upper_scale),
            std::clamp(v[2], 1.0 + o.margin, 2.0 - o.margin)};
}

/// Largest multiple (at most 1) of `step` that moves sigma^2 and delta by at most
/// `max_relative_step` of their value and alpha by at most `max_alpha_step`.
inline double step_cap(const Eigen::Vector3d& x, const Eigen::Vector3d& step, const SolveOptions& o) {
    double cap = 1.0;
    for (int k = 0; k < 2; ++k)
        if (std::abs(step[k]) > o.max_relative_step * x[k]) cap = std::min(cap, o.max_relative_step * x[k] / std::abs(step[k]));
    if (std::abs(step[2]) > o.max_alpha_step) cap = std::min(cap, o.max_alpha_step / std::abs(step[2]));
    return cap;
}

inline bool stagnated(const std::vector<double>& history, const SolveOptions& o) {
    const std::size_t w = o.stagnation_window;
    if (w == 0 || history.size() <= w) return false;
    return history.back() > (1.0 - o.stagnation_ratio) * history[history.size() - 1 - w];
}

inline double merit(const Eigen::Matrix3d& a, const Eigen::Vector3d& f) { return (a * f).cwiseAbs().maxCoeff(); }

inline void fill_inference(EstimationResult& res, const Increments& inc, const TuningConfig& t,
                           const SolveOptions& opt) {
    const Theta& th = res.theta_hat;
    const PluginI pi = plugin_I(th.alpha, inc, opt.regime);
    res.i_hat = pi.i_hat;
    res.di_hat = pi.di_hat;
    const double in = pi.normalized_i(), din = pi.normalized_di();
    res.lambda_n = rate_matrix_lambda(th, t);
    res.sigma_hat = sigma_matrix(th, in);
    res.w_hat = w_matrix(th, in, din);
    const Eigen::Matrix3d w_inv = res.w_hat.inverse();
    res.asy_cov = w_inv * res.sigma_hat * w_inv.transpose();
    const Eigen::Vector3d se = res.standard_errors();
    const Eigen::Vector3d v = th.vec();
    for (int k = 0; k < 3; ++k) res.ci_95[k] = {v[k] - 1.959963984540054 * se[k], v[k] + 1.959963984540054 * se[k]};
}

}  // namespace detail

/// Damped Newton from `initial`, in the coordinates normalized by A_n and Lambda_n.
inline EstimationResult solve(const Theta& initial, const Increments& inc, const TuningConfig& t,
                              const SolveOptions& opt = {}) {
    initial.validate();
    t.validate();
    EstimationResult res;
    res.start = initial;
    res.n = t.n;
    res.delta_n = t.delta_n;
    res.u_n = t.u_n;
    if (inc.size() == 0) {
        res.theta_hat = initial;
        res.message = "no increments";
        return res;
    }
    Eigen::Vector3d x = detail::project(initial.vec(), opt);
    Evaluation ev = evaluate(Theta::from_vec(x), inc, t);
    std::vector<double> history;
    for (std::size_t it = 0;; ++it) {
        const Theta th = Theta::from_vec(x);
        const Eigen::Matrix3d a = rate_matrix_a(th, t);
        const Eigen::Matrix3d l = rate_matrix_lambda(th, t);
        const double m0 = detail::merit(a, ev.F);
        res.iterations = it;
        res.residual_norm = m0;
        history.push_back(m0);
        res.theta_hat = th;
        if (m0 < opt.tol) {
            res.converged = true;
            break;
        }
        if (detail::stagnated(history, opt)) {
            res.message = "stagnated";
            break;
        }
        if (it >= opt.max_iterations) {
            res.message = "iteration limit reached";
            break;
        }
        const Eigen::Matrix3d mj = a * ev.J * l;
        Eigen::FullPivLU<Eigen::Matrix3d> lu(mj);
        if (!lu.isInvertible() || !(lu.rcond() > 1e-14))
            throw SingularMatrixError("solve: normalized Jacobian is singular at iteration " + std::to_string(it));
        const Eigen::Vector3d step = l * lu.solve(-(a * ev.F));
        double lambda = detail::step_cap(x, step, opt);
        bool accepted = false;
        for (std::size_t h = 0; h <= opt.max_halvings; ++h, lambda *= 0.5) {
            const Eigen::Vector3d cand = detail::project(x + lambda * step, opt);
            if ((cand - x).norm() == 0.0) break;
            Evaluation ec = evaluate(Theta::from_vec(cand), inc, t, false);
            if ((a * ec.F).norm() < (a * ev.F).norm()) {
                x = cand;
                ev = evaluate(Theta::from_vec(cand), inc, t);
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            res.iterations = it + 1;
            res.message = "line search stalled";
            break;
        }
    }
    if (res.converged) {
        detail::fill_inference(res, inc, t, opt);
        res.message = "converged";
    }
    return res;
}

inline constexpr std::size_t kPresearchNodes = 6;

/// Coarse 5x5x5 search for starts: sigma^2 around the Gaussian pilot, delta and alpha on fixed
/// grids. Returns grid points ordered by increasing merit ||A_n F_n||_inf.
inline std::vector<std::pair<double, Theta>> presearch_candidates(const Increments& inc, const TuningConfig& t) {
    detail::require(inc.size() > 0, "presearch: no increments");
    const double mean_cos = inc.f_sum[0] / static_cast<double>(inc.size());
    double pilot = 1.0;
    if (mean_cos > 0.0 && mean_cos < 1.0) pilot = std::max(1e-2, -std::log(mean_cos) / (t.u_n * t.u_n));
    const std::array<double, 5> sig{0.4 * pilot, 0.6 * pilot, 0.8 * pilot, 0.9 * pilot, pilot};
    const std::array<double, 5> del{0.1, 0.3, 1.0, 3.0, 10.0};
    const std::array<double, 5> alp{1.1, 1.3, 1.5, 1.7, 1.9};
    const auto sums = inc.weight_sums_for(kPresearchNodes);
    Increments coarse = inc;
    coarse.weight_sums = sums;
    std::vector<std::pair<double, Theta>> out;
    for (double s : sig)
        for (double d : del)
            for (double a : alp) {
                const Theta th{s, d, a};
                try {
                    out.emplace_back(detail::merit(rate_matrix_a(th, t), evaluate(th, coarse, t, false).F), th);
                } catch (const QuadratureError&) {
                }
            }
    std::stable_sort(out.begin(), out.end(), [](const auto& l, const auto& r) { return l.first < r.first; });
    return out;
}

inline Theta presearch_initial(const Increments& inc, const TuningConfig& t, double* best_merit = nullptr) {
    const auto c = presearch_candidates(inc, t);
    detail::require(!c.empty(), "presearch: every grid point failed");
    if (best_merit) *best_merit = c.front().first;
    return c.front().second;
}

/// Pre-search followed by Newton from the best `starts` grid points until one converges.
inline EstimationResult estimate(const Increments& inc, const TuningConfig& t, const SolveOptions& opt = {},
                                 std::size_t starts = 3) {
    const auto c = presearch_candidates(inc, t);
    detail::require(!c.empty(), "presearch: every grid point failed");
    EstimationResult best;
    for (std::size_t k = 0; k < std::min(starts, c.size()); ++k) {
        EstimationResult r;
        try {
            r = solve(c[k].second, inc, t, opt);
        } catch (const SingularMatrixError& e) {
            r.theta_hat = r.start = c[k].second;
            r.message = e.what();
        }
        if (r.converged) return r;
        if (k == 0 || r.residual_norm < best.residual_norm) best = r;
    }
    return best;
}

/// (sigma^2, delta) with alpha frozen: rows f1, f2 of F_n.
inline EstimationResult solve_known_alpha(double sigma_sq0, double delta0, double alpha0, const Increments& inc,
                                          const TuningConfig& t, const SolveOptions& opt = {}) {
    detail::require_alpha_open(alpha0, "solve_known_alpha");
    const Theta initial{sigma_sq0, delta0, alpha0};
    initial.validate();
    t.validate();
    EstimationResult res;
    res.known_alpha = true;
    res.start = initial;
    res.n = t.n;
    res.delta_n = t.delta_n;
    res.u_n = t.u_n;
    if (inc.size() == 0) {
        res.theta_hat = initial;
        res.message = "no increments";
        return res;
    }
    const double rn = std::sqrt(static_cast<double>(t.n));
    const double v = detail::jump_rate(alpha0, t);
    const Eigen::Vector2d a{rn / (t.u_n * t.u_n), rn * v};
    const Eigen::Vector2d l{1.0 / rn, v / rn};
    auto clamp2 = [&](const Eigen::Vector2d& z) {
        return Eigen::Vector2d{std::clamp(z[0], opt.margin, opt.upper_scale),
                               std::clamp(z[1], opt.margin, opt.upper_scale)};
    };
    Eigen::Vector2d x = clamp2({sigma_sq0, delta0});
    auto eval2 = [&](const Eigen::Vector2d& z, bool jac = true) {
        return evaluate(Theta{z[0], z[1], alpha0}, inc, t, jac);
    };
    Evaluation ev = eval2(x);
    std::vector<double> history;
    for (std::size_t it = 0;; ++it) {
        const Eigen::Vector2d af = a.cwiseProduct(ev.F.head<2>());
        res.iterations = it;
        res.residual_norm = af.cwiseAbs().maxCoeff();
        history.push_back(res.residual_norm);
        res.theta_hat = {x[0], x[1], alpha0};
        if (res.residual_norm < opt.tol) {
            res.converged = true;
            break;
        }
        if (detail::stagnated(history, opt)) {
            res.message = "stagnated";
            break;
        }
        if (it >= opt.max_iterations) {
            res.message = "iteration limit reached";
            break;
        }
        const Eigen::Matrix2d mj = a.asDiagonal() * ev.J.topLeftCorner<2, 2>() * l.asDiagonal();
        Eigen::FullPivLU<Eigen::Matrix2d> lu(mj);
        if (!lu.isInvertible() || !(lu.rcond() > 1e-14))
            throw SingularMatrixError("solve_known_alpha: normalized Jacobian is singular");
        const Eigen::Vector2d step = l.cwiseProduct(lu.solve(-af));
        double lambda = detail::step_cap({x[0], x[1], alpha0}, {step[0], step[1], 0.0}, opt);
        bool accepted = false;
        for (std::size_t h = 0; h <= opt.max_halvings; ++h, lambda *= 0.5) {
            const Eigen::Vector2d cand = clamp2(x + lambda * step);
            if ((cand - x).norm() == 0.0) break;
            Evaluation ec = eval2(cand, false);
            if (a.cwiseProduct(ec.F.head<2>()).norm() < af.norm()) {
                x = cand;
                ev = eval2(cand);
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            res.iterations = it + 1;
            res.message = "line search stalled";
            break;
        }
    }
    if (res.converged) {
        const Theta& th = res.theta_hat;
        const PluginI pi = plugin_I(alpha0, inc, opt.regime);
        res.i_hat = pi.i_hat;
        res.di_hat = pi.di_hat;
        res.lambda_n = rate_matrix_lambda(th, t);
        res.lambda_n(1, 2) = 0.0;
        res.lambda_n(2, 2) = 0.0;
        const Eigen::Matrix3d s3 = sigma_matrix(th, pi.normalized_i());
        res.sigma_hat.topLeftCorner<2, 2>() = s3.topLeftCorner<2, 2>();
        const double ps = psi(alpha0);
        res.w_hat(0, 0) = 0.5;
        res.w_hat(1, 1) = -0.5 * ps * pi.normalized_i();
        const Eigen::Matrix2d w_inv = res.w_hat.topLeftCorner<2, 2>().inverse();
        res.asy_cov.topLeftCorner<2, 2>() = w_inv * res.sigma_hat.topLeftCorner<2, 2>() * w_inv.transpose();
        const Eigen::Vector3d se = res.standard_errors();
        const Eigen::Vector3d v3 = th.vec();
        for (int k = 0; k < 3; ++k)
            res.ci_95[k] = {v3[k] - 1.959963984540054 * se[k], v3[k] + 1.959963984540054 * se[k]};
        res.message = "converged";
    }
    return res;
}

/// Known-alpha start from sigma^2 around the Gaussian pilot and delta on a fixed grid, then Newton.
inline EstimationResult estimate_known_alpha(const Increments& inc, const TuningConfig& t, double alpha0,
                                             const SolveOptions& opt = {}) {
    detail::require(inc.size() > 0, "estimate_known_alpha: no increments");
    const double mean_cos = inc.f_sum[0] / static_cast<double>(inc.size());
    double pilot = 1.0;
    if (mean_cos > 0.0 && mean_cos < 1.0) pilot = std::max(1e-2, -std::log(mean_cos) / (t.u_n * t.u_n));
    const auto sums = inc.weight_sums_for(kPresearchNodes);
    Increments coarse = inc;
    coarse.weight_sums = sums;
    double best_m = std::numeric_limits<double>::infinity();
    Theta best{pilot, 1.0, alpha0};
    for (double s : {0.6 * pilot, 0.8 * pilot, pilot})
        for (double d : {0.1, 0.3, 1.0, 3.0, 10.0}) {
            const Theta th{s, d, alpha0};
            const Eigen::Vector3d af = rate_matrix_a(th, t) * evaluate(th, coarse, t, false).F;
            const double m = af.head<2>().cwiseAbs().maxCoeff();
            if (m < best_m) {
                best_m = m;
                best = th;
            }
        }
    return solve_known_alpha(best.sigma_sq, best.delta, alpha0, inc, t, opt);
}

/// Independent known-alpha solves from `starts` uniform draws in [lo, hi] (sigma^2, delta).
inline std::vector<EstimationResult> solve_known_alpha_multistart(const Eigen::Vector2d& lo, const Eigen::Vector2d& hi,
                                                                  std::size_t starts, double alpha0,
                                                                  const Increments& inc, const TuningConfig& t,
                                                                  RandomStream& rng, const SolveOptions& opt = {}) {
    std::vector<EstimationResult> out;
    out.reserve(starts);
    for (std::size_t k = 0; k < starts; ++k) {
        const double s0 = lo[0] + (hi[0] - lo[0]) * rng.uniform_open();
        const double d0 = lo[1] + (hi[1] - lo[1]) * rng.uniform_open();
        try {
            out.push_back(solve_known_alpha(s0, d0, alpha0, inc, t, opt));
        } catch (const SingularMatrixError& e) {
            EstimationResult r;
            r.known_alpha = true;
            r.start = {s0, d0, alpha0};
            r.message = e.what();
            out.push_back(r);
        }
    }
    return out;
}

/// Laplace transform of the stationary law, from the branching mechanism
/// R(x) = b x + sigma^2 x^2 / 2 + (delta / |cos(pi alpha / 2)|) x^alpha and immigration a x:
///     exp(-int_0^lambda a / (sigma^2 x / 2 + (delta / |cos(pi alpha / 2)|) x^{alpha-1} + b) dx).
inline double stationary_laplace(double lambda, const ModelParams& p) {
    detail::require(p.b > 0.0, "stationary_laplace: requires b > 0 (ergodic regime)");
    detail::require(lambda >= 0.0 && std::isfinite(lambda), "stationary_laplace: lambda must be non-negative");
    detail::require_alpha_open(p.alpha, "stationary_laplace");
    if (lambda == 0.0) return 1.0;
    const double jump = p.delta / std::abs(std::cos(kPi * p.alpha / 2.0));
    auto g = [&](double x) { return p.a / (0.5 * p.sigma_sq * x + jump * std::pow(x, p.alpha - 1.0) + p.b); };
    quad::Options opt;
    opt.abs_tol = 1e-13;
    return std::exp(-quad::integrate(g, 0.0, lambda, opt).value);
}

}  // namespace stablecir
