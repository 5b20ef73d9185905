#pragma once

// Discretely observed trajectories of
//     dX = (a - b X) dt + sigma sqrt(X) dB + delta^{1/alpha} X_-^{1/alpha} dL,
// simulated by Euler-Maruyama on a fine grid of M substeps per observation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stablecir/common.hpp"
#include "stablecir/random.hpp"
#include "stablecir/stable_levy.hpp"

namespace stablecir {

struct ModelParams {
    double a = 2.0;
    double b = 1.0;
    double sigma_sq = 1.0;
    double delta = 1.0;
    double alpha = 1.5;
    double x0 = 1.0;

    /// Field-level checks. Zero sigma_sq or delta is allowed (degenerate limits).
    void validate() const {
        detail::require(std::isfinite(a) && a > 0.0, "ModelParams: a must be positive");
        detail::require(std::isfinite(b), "ModelParams: b must be finite");
        detail::require(std::isfinite(sigma_sq) && sigma_sq >= 0.0, "ModelParams: sigma_sq must be non-negative");
        detail::require(std::isfinite(delta) && delta >= 0.0, "ModelParams: delta must be non-negative");
        detail::require(std::isfinite(x0) && x0 > 0.0, "ModelParams: x0 must be positive");
        detail::require_alpha_guarded(alpha, "ModelParams");
    }
};

enum class AssumptionStatus { HoldsH, HoldsPositivityOnly, Fails };

/// fails: 2a < sigma^2; positivity only: 2a >= sigma^2 but a <= sigma^2; H: a > sigma^2.
inline AssumptionStatus check_assumption_H(const ModelParams& p) {
    if (2.0 * p.a < p.sigma_sq) return AssumptionStatus::Fails;
    if (p.a <= p.sigma_sq) return AssumptionStatus::HoldsPositivityOnly;
    return AssumptionStatus::HoldsH;
}

inline const char* to_string(AssumptionStatus s) {
    switch (s) {
        case AssumptionStatus::HoldsH: return "holds_H";
        case AssumptionStatus::HoldsPositivityOnly: return "holds_positivity_only";
        case AssumptionStatus::Fails: return "fails";
    }
    return "?";
}

enum class PositivityRule { FullTruncation, Reflection };

inline const char* to_string(PositivityRule r) {
    return r == PositivityRule::FullTruncation ? "full_truncation" : "reflection";
}

struct SimScheme {
    int substeps = 32;
    PositivityRule positivity_rule = PositivityRule::FullTruncation;
    double floor = 1e-12;

    void validate() const {
        detail::require(substeps >= 1, "SimScheme: substeps must be >= 1");
        detail::require(floor > 0.0, "SimScheme: floor must be positive");
    }
};

struct PathSample {
    std::vector<double> observations;  // X_{i delta_n}, i = 0..n
    double delta_n = 0.0;
    std::size_t n = 0;
    std::optional<ModelParams> params;
    std::optional<SimScheme> scheme;
    std::optional<std::uint64_t> seed;

    double time(std::size_t i) const { return static_cast<double>(i) * delta_n; }
    double horizon() const { return static_cast<double>(n) * delta_n; }

    void validate() const {
        detail::require(delta_n > 0.0 && std::isfinite(delta_n), "PathSample: delta_n must be positive");
        detail::require(observations.size() == n + 1, "PathSample: length must equal n+1");
        for (std::size_t i = 0; i < observations.size(); ++i)
            if (!(observations[i] > 0.0) || !std::isfinite(observations[i]))
                throw DomainError("PathSample: observation " + std::to_string(i) + " is not strictly positive and finite");
    }
};

inline PathSample simulate_path(const ModelParams& params, double delta_n, std::size_t n, const SimScheme& scheme,
                                RandomStream& rng) {
    params.validate();
    scheme.validate();
    if (check_assumption_H(params) == AssumptionStatus::Fails)
        throw DomainError("simulate_path: positivity condition 2a >= sigma^2 violated");
    detail::require(delta_n > 0.0 && std::isfinite(delta_n), "simulate_path: delta_n must be positive");
    detail::require(n >= 2, "simulate_path: n must be >= 2");

    const int m = scheme.substeps;
    const double h = delta_n / m;
    const double sqrt_h = std::sqrt(h);
    const double sigma = std::sqrt(params.sigma_sq);
    const double inv_alpha = 1.0 / params.alpha;
    // delta^{1/alpha} h^{1/alpha}; zero when delta = 0.
    const double jump_scale = std::pow(params.delta * h, inv_alpha);
    const StableSampler stable({params.alpha, Skew::SpectrallyPositive});

    PathSample path;
    path.delta_n = delta_n;
    path.n = n;
    path.params = params;
    path.scheme = scheme;
    path.observations.resize(n + 1);
    path.observations[0] = params.x0;

    double x = params.x0;
    for (std::size_t i = 1; i <= n; ++i) {
        for (int k = 0; k < m; ++k) {
            const double z = rng.normal();
            const double s = stable(rng);
            const double xe = std::max(x, scheme.floor);
            const double x_pow = std::exp(std::log(xe) * inv_alpha);
            double next = x + (params.a - params.b * xe) * h + sigma * std::sqrt(xe) * sqrt_h * z + jump_scale * x_pow * s;
            if (!std::isfinite(next))
                throw NonFiniteStateError("simulate_path: non-finite state at observation " + std::to_string(i));
            if (scheme.positivity_rule == PositivityRule::Reflection) next = std::abs(next);
            x = std::max(next, scheme.floor);
        }
        path.observations[i] = x;
    }
    return path;
}

/// (1/(n+1)) sum X_i^{-p}; a stability diagnostic for inverse moments.
inline double empirical_inverse_moment(const PathSample& path, double p) {
    detail::require(p >= 1.0, "empirical_inverse_moment: p must be >= 1");
    if (path.params && path.params->sigma_sq > 0.0)
        detail::require(p < 2.0 * path.params->a / path.params->sigma_sq,
                        "empirical_inverse_moment: p must be below 2a/sigma^2");
    double acc = 0.0;
    for (double x : path.observations) {
        if (!(x > 0.0)) throw DomainError("empirical_inverse_moment: non-positive observation");
        acc += std::pow(x, -p);
    }
    return acc / static_cast<double>(path.observations.size());
}

}  // namespace stablecir
