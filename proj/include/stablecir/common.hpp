#pragma once

#include <numbers>
#include <stdexcept>
#include <string>

namespace stablecir {

/// Parameter outside its admissible domain.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Adaptive quadrature failed to meet its tolerance within the panel budget.
class QuadratureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The simulation scheme produced a NaN or infinite state.
class NonFiniteStateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A matrix that must be invertible (Jacobian, W) is numerically singular.
class SingularMatrixError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed configuration or input file.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kPi = std::numbers::pi;

// Admissible stability indices for sampling and simulation.
inline constexpr double kAlphaMin = 1.01;
inline constexpr double kAlphaMax = 1.99;

namespace detail {

inline void require(bool ok, const std::string& what) {
    if (!ok) throw DomainError(what);
}

/// Open interval (1,2) check used by the analytic functions of alpha.
inline void require_alpha_open(double alpha, const char* where) {
    if (!(alpha > 1.0 && alpha < 2.0))
        throw DomainError(std::string(where) + ": alpha must lie in (1,2), got " + std::to_string(alpha));
}

/// Guarded range [1.01, 1.99] used wherever stable draws are produced.
inline void require_alpha_guarded(double alpha, const char* where) {
    if (!(alpha >= kAlphaMin && alpha <= kAlphaMax))
        throw DomainError(std::string(where) + ": alpha must lie in [1.01,1.99], got " + std::to_string(alpha));
}

}  // namespace detail
}  // namespace stablecir
