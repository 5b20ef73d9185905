#pragma once

// Oracle suite run by `validate` and reused by the acceptance binary.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "stablecir/estimator.hpp"
#include "stablecir/io.hpp"
#include "stablecir/kernels.hpp"
#include "stablecir/moment_engine.hpp"
#include "stablecir/random.hpp"
#include "stablecir/sde_sim.hpp"
#include "stablecir/stable_levy.hpp"

namespace stablecir::validation {

struct ValidationCheck {
    std::string name;
    std::string tolerance;
    double measured = std::nan("");
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

inline ValidationCheck make_check(std::string name, std::string tolerance) {
    ValidationCheck c;
    c.name = std::move(name);
    c.tolerance = std::move(tolerance);
    return c;
}

struct ValidationReport {
    std::vector<ValidationCheck> checks;

    bool all_passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
    }
};

inline io::json to_json(const ValidationCheck& c) {
    return {{"name", c.name},
            {"tolerance", c.tolerance},
            {"measured", std::isfinite(c.measured) ? io::json(c.measured) : io::json(nullptr)},
            {"passed", c.passed},
            {"detail", c.detail},
            {"seconds", c.seconds}};
}

inline io::json to_json(const ValidationReport& r) {
    io::json a = io::json::array();
    for (const auto& c : r.checks) a.push_back(to_json(c));
    return {{"all_passed", r.all_passed()}, {"checks", a}};
}

inline std::string format_line(const ValidationCheck& c) {
    return std::string(c.passed ? "PASS" : "FAIL") + "  " + c.name + "  measured=" + io::format_double(c.measured) +
           "  tolerance: " + c.tolerance + (c.detail.empty() ? "" : "  (" + c.detail + ")");
}

// Stable law fidelity

struct CfComparison {
    double alpha, z;
    std::complex<double> empirical, analytic;
    double se_re, se_im;

    double worst_sigma() const {
        return std::max(std::abs(empirical.real() - analytic.real()) / se_re,
                        std::abs(empirical.imag() - analytic.imag()) / se_im);
    }
};

inline std::vector<CfComparison> stable_cf_comparisons(double alpha, std::size_t draws, std::uint64_t seed) {
    const std::array<double, 6> zs{-2.0, -1.0, -0.5, 0.5, 1.0, 2.0};
    StableSampler sampler({alpha, Skew::SpectrallyPositive});
    RandomStream rng(seed);
    std::array<double, 6> sc{}, ss{}, sc2{}, ss2{};
    for (std::size_t i = 0; i < draws; ++i) {
        const double l = sampler(rng);
        for (std::size_t k = 0; k < zs.size(); ++k) {
            const double c = std::cos(zs[k] * l), s = std::sin(zs[k] * l);
            sc[k] += c, ss[k] += s, sc2[k] += c * c, ss2[k] += s * s;
        }
    }
    const double m = static_cast<double>(draws);
    const StableSpec spec{alpha, Skew::SpectrallyPositive};
    std::vector<CfComparison> out;
    for (std::size_t k = 0; k < zs.size(); ++k) {
        const double mc = sc[k] / m, ms = ss[k] / m;
        out.push_back({alpha, zs[k], {mc, ms}, spec.characteristic_function(zs[k]),
                       std::sqrt(std::max(sc2[k] / m - mc * mc, 0.0) / m),
                       std::sqrt(std::max(ss2[k] / m - ms * ms, 0.0) / m)});
    }
    return out;
}

inline ValidationCheck check_stable_cf(std::size_t draws = 1000000, std::uint64_t seed = 20240601) {
    auto c = make_check("stable_characteristic_function", "each Re/Im within 3 Monte Carlo standard errors");
    double worst = 0.0;
    std::string where;
    for (double alpha : {1.2, 1.5, 1.8})
        for (const auto& r : stable_cf_comparisons(alpha, draws, seed + static_cast<std::uint64_t>(alpha * 10))) {
            if (r.worst_sigma() > worst) {
                worst = r.worst_sigma();
                where = "alpha=" + io::format_double(alpha) + " z=" + io::format_double(r.z);
            }
        }
    c.measured = worst;
    c.passed = worst <= 3.0;
    c.detail = "largest deviation in standard errors at " + where;
    return c;
}

// Centering terms against direct simulation of the driftless Euler increment

struct CenteringPoint {
    Theta theta;
    double x;
};

inline std::vector<CenteringPoint> centering_grid() {
    std::vector<CenteringPoint> g;
    for (const Theta& th : {Theta{1.0, 1.0, 1.5}, Theta{0.5, 2.0, 1.2}, Theta{2.0, 0.5, 1.8}})
        for (double x : {0.5, 1.0, 2.0}) g.push_back({th, x});
    return g;
}

struct CenteringComparison {
    CenteringPoint point;
    Eigen::Vector3d monte_carlo, analytic, standard_error;

    double worst_sigma() const {
        return ((monte_carlo - analytic).cwiseAbs().array() / standard_error.array()).maxCoeff();
    }
};

/// Draws rho = sqrt(2) u sigma Z + c^{1/alpha} S with S symmetric stable and averages f_k(rho).
inline CenteringComparison centering_comparison(const CenteringPoint& p, const TuningConfig& t, std::size_t draws,
                                                std::uint64_t seed) {
    const Theta& th = p.theta;
    const double gauss = std::sqrt(2.0 * th.sigma_sq) * t.u_n;
    const double c = 2.0 * th.delta * std::pow(p.x, 1.0 - th.alpha / 2.0) * std::pow(t.u_n, th.alpha) *
                     std::pow(t.delta_n, 1.0 - th.alpha / 2.0);
    const double jump = std::pow(c, 1.0 / th.alpha);
    StableSampler sampler({th.alpha, Skew::Symmetric});
    RandomStream rng(seed);
    Eigen::Vector3d s = Eigen::Vector3d::Zero(), s2 = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < draws; ++i) {
        const double rho = gauss * rng.normal() + jump * sampler(rng);
        const Eigen::Vector3d f{kernel_value(KernelId::F1_Cos, rho), kernel_value(KernelId::F2_Trunc, rho),
                                kernel_value(KernelId::F3_TruncHalfScale, rho)};
        s += f;
        s2 += f.cwiseProduct(f);
    }
    const double m = static_cast<double>(draws);
    CenteringComparison out;
    out.point = p;
    out.monte_carlo = s / m;
    out.standard_error = ((s2 / m - out.monte_carlo.cwiseProduct(out.monte_carlo)).cwiseMax(0.0) / m).cwiseSqrt();
    out.analytic = {pn_f1(p.x, th, t), pn_trunc(KernelId::F2_Trunc, p.x, th, t),
                    pn_trunc(KernelId::F3_TruncHalfScale, p.x, th, t)};
    return out;
}

inline TuningConfig centering_tuning() { return TuningConfig::from_rule(1.0 / 16384.0, 16384, 0.51); }

inline ValidationCheck check_centering_mc(std::size_t draws = 1000000, std::uint64_t seed = 7001) {
    auto c = make_check("centering_terms_vs_monte_carlo", "each of pn_f1, pn_trunc(f2), pn_trunc(f3) within 3 standard errors at 9 (theta, x) points");
    const TuningConfig t = centering_tuning();
    double worst = 0.0;
    std::size_t k = 0;
    for (const auto& p : centering_grid()) {
        const auto r = centering_comparison(p, t, draws, seed + k++);
        worst = std::max(worst, r.worst_sigma());
    }
    c.measured = worst;
    c.passed = worst <= 3.0;
    c.detail = "largest deviation in standard errors";
    return c;
}

// Small-scale expansion of the truncated centering term

struct ExpansionRow {
    double delta_n, u_n, pn, leading, ratio;
};

inline std::vector<ExpansionRow> expansion_rows(KernelId k = KernelId::F2_Trunc, double x = 1.0,
                                                const Theta& th = {1.0, 1.0, 1.5}) {
    std::vector<ExpansionRow> rows;
    for (double d : {1e-3, 1e-4, 1e-5, 1e-6}) {
        const TuningConfig t = TuningConfig::from_rule(d, 1000, 0.51);
        const double pn = pn_trunc(k, x, th, t);
        const double lead = leading_term(k, x, th, t);
        rows.push_back({d, t.u_n, pn, lead, pn / lead});
    }
    return rows;
}

inline constexpr double kExpansionTolerance = 0.10;

inline bool expansion_trend_ok(const std::vector<ExpansionRow>& rows) {
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (!(std::abs(rows[i].ratio - 1.0) < std::abs(rows[i - 1].ratio - 1.0))) return false;
    return true;
}

inline ValidationCheck check_expansion() {
    auto c = make_check("truncated_term_expansion", "|ratio - 1| strictly decreasing along delta_n = 1e-3..1e-6 and final |ratio - 1| <= 0.10");
    const auto rows = expansion_rows();
    const bool trend = expansion_trend_ok(rows);
    c.measured = rows.back().ratio;
    c.passed = trend && std::abs(rows.back().ratio - 1.0) <= kExpansionTolerance;
    c.detail = "ratios";
    for (const auto& r : rows) c.detail += " " + io::format_double(std::round(r.ratio * 1e4) / 1e4);
    c.detail += trend ? ", trend monotone" : ", trend not monotone";
    return c;
}

// Analytic gradients against central differences

inline double relative_gap(double analytic, double numeric, double floor = 1e-12) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline std::vector<Theta> gradient_grid() {
    std::vector<Theta> g;
    for (double s : {0.5, 1.0, 2.0})
        for (double d : {0.5, 1.0, 2.0})
            for (double a : {1.2, 1.5, 1.8}) g.push_back({s, d, a});
    return g;
}

/// Worst relative gap over the three parameter partials of one centering function.
inline double gradient_gap(const std::function<double(const Theta&)>& f, const Eigen::Vector3d& analytic,
                           const Theta& th, double rel_step = 1e-4) {
    double worst = 0.0;
    for (int j = 0; j < 3; ++j) {
        Eigen::Vector3d up = th.vec(), dn = th.vec();
        const double h = rel_step * std::abs(th.vec()[j]);
        up[j] += h;
        dn[j] -= h;
        const double fd = (f(Theta::from_vec(up)) - f(Theta::from_vec(dn))) / (2.0 * h);
        worst = std::max(worst, relative_gap(analytic[j], fd));
    }
    return worst;
}

inline ValidationCheck check_gradients(double x = 1.0) {
    auto c = make_check("centering_gradients_vs_finite_differences", "relative gap <= 1e-4 for every partial over 27 theta points");
    const TuningConfig t = centering_tuning();
    double worst = 0.0;
    for (const auto& th : gradient_grid()) {
        worst = std::max(worst, gradient_gap([&](const Theta& q) { return pn_f1(x, q, t); }, grad_pn_f1(x, th, t), th));
        for (KernelId k : {KernelId::F2_Trunc, KernelId::F3_TruncHalfScale})
            worst = std::max(worst, gradient_gap([&](const Theta& q) { return pn_trunc(k, x, q, t); },
                                                 grad_pn_trunc(k, x, th, t), th));
    }
    c.measured = worst;
    c.passed = worst <= 1e-4;
    return c;
}

inline ValidationCheck check_jacobian(std::uint64_t seed = 515) {
    auto c = make_check("estimating_jacobian_vs_finite_differences", "relative gap <= 1e-4 entrywise");
    ModelParams mp;
    const std::size_t n = 4096;
    const TuningConfig t = TuningConfig::from_rule(1.0 / n, n, 0.51);
    RandomStream rng(seed);
    const Increments inc = symmetrized_increments(simulate_path(mp, 1.0 / n, n, SimScheme{}, rng), t);
    const Theta th{0.9, 1.1, 1.45};
    const Eigen::Matrix3d j = jacobian(th, inc, t);
    double worst = 0.0;
    for (int col = 0; col < 3; ++col) {
        Eigen::Vector3d up = th.vec(), dn = th.vec();
        const double h = 1e-4 * th.vec()[col];
        up[col] += h;
        dn[col] -= h;
        const Eigen::Vector3d fd = (estimating_function(Theta::from_vec(up), inc, t) -
                                    estimating_function(Theta::from_vec(dn), inc, t)) / (2.0 * h);
        for (int row = 0; row < 3; ++row) worst = std::max(worst, relative_gap(j(row, col), fd[row]));
    }
    c.measured = worst;
    c.passed = worst <= 1e-4;
    return c;
}

// Limit matrix identities

inline ValidationCheck check_det_w() {
    auto c = make_check("w_determinant_identity", "relative gap <= 1e-10 between direct and closed-form determinant");
    double worst = 0.0;
    for (double alpha : {1.2, 1.5, 1.8})
        for (double delta : {0.5, 1.0, 2.0})
            for (double i : {0.7, 1.0, 1.6}) {
                const Theta th{1.0, delta, alpha};
                const double direct = w_matrix(th, i, -0.3 * i).determinant();
                worst = std::max(worst, relative_gap(direct, w_determinant_closed_form(th, i), 1e-300));
            }
    c.measured = worst;
    c.passed = worst <= 1e-10;
    return c;
}

inline ValidationCheck check_psi_identity() {
    auto c = make_check("psi_real_vs_fourier", "relative gap <= 1e-8 for psi and its alpha-derivative at alpha=1.5");
    const double a = 1.5;
    c.measured = std::max(relative_gap(psi(a), psi_fourier(a)), relative_gap(dpsi_dalpha(a), dpsi_dalpha_fourier(a)));
    c.passed = c.measured <= 1e-8;
    return c;
}

inline ValidationCheck check_kernel_shape() {
    auto c = make_check("kernel_shape", "K continuous at |x| in {1,2} within 1e-12 and Fourier transform at 0 equals 3 within 1e-9");
    const double eps = 1e-9;
    double gap = 0.0;
    for (double edge : {1.0, 2.0}) {
        gap = std::max(gap, std::abs(K(edge - eps) - K(edge + eps)));
        gap = std::max(gap, std::abs(K(-edge + eps) - K(-edge - eps)));
    }
    const double f0 = std::abs(fourier_K(0.0) - 3.0);
    c.measured = std::max(gap, f0);
    c.passed = gap <= 1e-12 && f0 <= 1e-9;
    c.detail = "continuity gap " + io::format_double(gap) + ", |FK(0) - 3| " + io::format_double(f0);
    return c;
}

// Ergodic preset

inline ModelParams ergodic_laplace_params() {
    ModelParams p;
    p.a = 1.0;
    p.b = 1.0;
    p.sigma_sq = 0.002;
    p.delta = 0.002;
    p.alpha = 1.5;
    p.x0 = 1.0;
    return p;
}

struct ErgodicComparison {
    std::array<double, 3> lambda{0.5, 1.0, 2.0};
    std::array<double, 3> empirical{}, analytic{}, relative{};
    double first_half_i = 0.0, second_half_i = 0.0, halves_relative = 0.0;
};

inline ErgodicComparison ergodic_comparison(std::uint64_t seed = 91, double horizon = 500.0, double delta_n = 0.01) {
    const ModelParams p = ergodic_laplace_params();
    const std::size_t n = static_cast<std::size_t>(std::llround(horizon / delta_n));
    SimScheme scheme;
    scheme.substeps = 8;
    RandomStream rng(seed);
    const PathSample path = simulate_path(p, delta_n, n, scheme, rng);
    ErgodicComparison out;
    for (std::size_t k = 0; k < 3; ++k) {
        double s = 0.0;
        for (std::size_t i = 1; i <= n; ++i) s += std::exp(-out.lambda[k] * path.observations[i]);
        out.empirical[k] = s / static_cast<double>(n);
        out.analytic[k] = stationary_laplace(out.lambda[k], p);
        out.relative[k] = out.empirical[k] / out.analytic[k] - 1.0;
    }
    const std::size_t h = n / 2;
    PathSample first = path, second = path;
    first.observations.assign(path.observations.begin(), path.observations.begin() + h + 1);
    first.n = h;
    second.observations.assign(path.observations.begin() + h, path.observations.end());
    second.n = n - h;
    const RegimeSpec erg{Regime::Ergodic};
    out.first_half_i = plugin_I(p.alpha, first, erg).i_hat;
    out.second_half_i = plugin_I(p.alpha, second, erg).i_hat;
    out.halves_relative = out.second_half_i / out.first_half_i - 1.0;
    return out;
}

inline std::array<ValidationCheck, 2> check_ergodic(std::uint64_t seed = 91) {
    const auto r = ergodic_comparison(seed);
    auto lap = make_check("stationary_laplace_vs_ergodic_path", "relative gap <= 0.02 at lambda in {0.5, 1, 2}");
    lap.measured = std::max({std::abs(r.relative[0]), std::abs(r.relative[1]), std::abs(r.relative[2])});
    lap.passed = lap.measured <= 0.02;
    auto halves = make_check("ergodic_plugin_I_halves", "relative gap <= 0.05 between disjoint halves");
    halves.measured = std::abs(r.halves_relative);
    halves.passed = halves.measured <= 0.05;
    return {lap, halves};
}


template <class F>
ValidationCheck timed(F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    ValidationCheck c = f();
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return c;
}

inline ValidationReport run_all(const std::function<void(const ValidationCheck&)>& on_check = {}) {
    ValidationReport rep;
    auto add = [&](ValidationCheck c) {
        if (on_check) on_check(c);
        rep.checks.push_back(std::move(c));
    };
    add(timed([] { return check_kernel_shape(); }));
    add(timed([] { return check_psi_identity(); }));
    add(timed([] { return check_stable_cf(); }));
    add(timed([] { return check_centering_mc(); }));
    add(timed([] { return check_expansion(); }));
    add(timed([] { return check_gradients(); }));
    add(timed([] { return check_jacobian(); }));
    add(timed([] { return check_det_w(); }));
    const auto t0 = std::chrono::steady_clock::now();
    auto erg = check_ergodic();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (auto& c : erg) {
        c.seconds = secs / 2.0;
        add(c);
    }
    return rep;
}

}  // namespace stablecir::validation
