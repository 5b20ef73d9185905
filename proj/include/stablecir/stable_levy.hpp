#pragma once

// Strictly stable random inputs of the model.
//
// Convention: the spectrally positive driver L has
//     E exp(i z L_1) = exp(-|z|^a (1 - i tan(pi a / 2) sgn z)),   1 < a < 2,
// and the symmetric variable S has E exp(i z S) = exp(-|z|^a).
//
// Both are drawn with the Chambers-Mallows-Stuck transform in the
// S_a(scale, beta, shift) = S_a(1, beta, 0) parameterization, whose
// characteristic function is exp(-|z|^a (1 - i beta sgn(z) tan(pi a / 2))).
// The driver above is exactly beta = +1, unit scale, zero shift; the symmetric
// law is beta = 0. No rescaling is needed between the two conventions.
// For a > 1 both laws are centred.

#include <cmath>
#include <complex>

#include "stablecir/common.hpp"
#include "stablecir/random.hpp"

namespace stablecir {

enum class Skew { SpectrallyPositive, Symmetric };

/// Levy density constant of the driver: F(dz) = c_alpha z^{-alpha-1} dz on z > 0.
/// Valid on the open interval (1,2); tends to 0 as alpha -> 2 and to 2/pi as alpha -> 1.
inline double c_alpha(double alpha) {
    detail::require_alpha_open(alpha, "c_alpha");
    return -alpha * (alpha - 1.0) / (std::tgamma(2.0 - alpha) * std::cos(kPi * alpha / 2.0));
}

struct StableSpec {
    double alpha = 1.5;
    Skew skew = Skew::SpectrallyPositive;

    void validate() const { detail::require_alpha_guarded(alpha, "StableSpec"); }

    /// Analytic characteristic function of the unit-time variable.
    std::complex<double> characteristic_function(double z) const {
        const double mod = std::pow(std::abs(z), alpha);
        if (skew == Skew::Symmetric) return {std::exp(-mod), 0.0};
        const double sgn = (z > 0) - (z < 0);
        const std::complex<double> expo(-mod, mod * std::tan(kPi * alpha / 2.0) * sgn);
        return std::exp(expo);
    }
};

/// Chambers-Mallows-Stuck generator for S_alpha(1, beta, 0) with the
/// transform constants precomputed once per (alpha, skew).
class StableSampler {
public:
    explicit StableSampler(const StableSpec& spec) : alpha_(spec.alpha) {
        spec.validate();
        const double beta = spec.skew == Skew::Symmetric ? 0.0 : 1.0;
        const double t = beta * std::tan(kPi * alpha_ / 2.0);
        shift_ = std::atan(t) / alpha_;
        scale_ = std::pow(1.0 + t * t, 1.0 / (2.0 * alpha_));
        inv_alpha_ = 1.0 / alpha_;
        tail_expo_ = (1.0 - alpha_) / alpha_;
    }

    double operator()(RandomStream& rng) const {
        const double v = kPi * (rng.uniform_open() - 0.5);
        const double w = rng.exponential();
        const double av = alpha_ * (v + shift_);
        return scale_ * std::sin(av) / std::pow(std::cos(v), inv_alpha_) *
               std::pow(std::cos(v - av) / w, tail_expo_);
    }

    double alpha() const noexcept { return alpha_; }

private:
    double alpha_;
    double shift_ = 0, scale_ = 1, inv_alpha_ = 1, tail_expo_ = 0;
};

/// One draw of S_1 with E exp(izS) = exp(-|z|^alpha).
inline double sample_symmetric(double alpha, RandomStream& rng) {
    return StableSampler({alpha, Skew::Symmetric})(rng);
}

/// One draw of L_1 for the spectrally positive driver.
inline double sample_spectrally_positive(double alpha, RandomStream& rng) {
    return StableSampler({alpha, Skew::SpectrallyPositive})(rng);
}

/// One draw of L_dt; strict stability gives L_dt = dt^{1/alpha} L_1 in law.
inline double sample_spectrally_positive_increment(double alpha, double dt, RandomStream& rng) {
    detail::require(dt > 0.0, "sample_spectrally_positive_increment: dt must be positive");
    return std::pow(dt, 1.0 / alpha) * sample_spectrally_positive(alpha, rng);
}

inline double sample(const StableSpec& spec, RandomStream& rng) {
    return StableSampler(spec)(rng);
}

/// Leading tail term c_alpha / (2 y^{alpha+1}) of the symmetric stable density.
inline double symmetric_stable_tail_density(double y, double alpha) {
    detail::require(y > 0.0, "symmetric_stable_tail_density: y must be positive");
    return c_alpha(alpha) / (2.0 * std::pow(y, alpha + 1.0));
}

}  // namespace stablecir
