#pragma once

// Globally adaptive 21-point Gauss-Kronrod quadrature over finite intervals,
// for scalar or small fixed-size vector integrands. Vector integrands share
// one subdivision, which is what lets a single grid serve several moments.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <queue>
#include <string>
#include <type_traits>
#include <vector>

#include "stablecir/common.hpp"

namespace stablecir::quad {

template <std::size_t N>
using Values = std::array<double, N>;

struct Options {
    double abs_tol = 1e-10;
    double rel_tol = 0.0;
    std::size_t max_panels = 4000;
    /// Uniform pre-split of [a,b]; helps oscillatory integrands.
    std::size_t initial_panels = 1;
};

template <std::size_t N>
struct Result {
    Values<N> value{};
    Values<N> error{};
    std::size_t evaluations = 0;
    bool converged = false;
    /// Final partition, sorted by left endpoint.
    std::vector<std::pair<double, double>> partition;
};

namespace detail {

// Kronrod abscissae on [-1,1] (positive half, descending); even indices 1,3,..,9 are Gauss nodes.
inline constexpr std::array<double, 11> kXgk = {
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.0};
inline constexpr std::array<double, 11> kWgk = {
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077600525535240, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821};
inline constexpr std::array<double, 5> kWg = {
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651271};

template <std::size_t N>
struct Panel {
    double a = 0, b = 0;
    Values<N> value{};
    Values<N> error{};
    double worst = 0;
    bool operator<(const Panel& o) const { return worst < o.worst; }
};

template <std::size_t N, class F>
Panel<N> gk21(F& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    Values<N> kron{}, gauss{};
    const Values<N> fc = f(c);
    for (std::size_t k = 0; k < N; ++k) kron[k] = fc[k] * kWgk[10];
    for (std::size_t j = 0; j < 10; ++j) {
        const double dx = h * kXgk[j];
        const Values<N> f1 = f(c - dx);
        const Values<N> f2 = f(c + dx);
        for (std::size_t k = 0; k < N; ++k) {
            kron[k] += kWgk[j] * (f1[k] + f2[k]);
            if (j % 2 == 1) gauss[k] += kWg[j / 2] * (f1[k] + f2[k]);
        }
    }
    Panel<N> p;
    p.a = a;
    p.b = b;
    for (std::size_t k = 0; k < N; ++k) {
        p.value[k] = kron[k] * h;
        p.error[k] = std::abs((kron[k] - gauss[k]) * h);
        p.worst = std::max(p.worst, p.error[k]);
    }
    return p;
}

}  // namespace detail

/// Nodes and Kronrod weights of the 21-point rule on [a,b], appended to `nodes`/`weights`.
inline void append_kronrod_nodes(double a, double b, std::vector<double>& nodes, std::vector<double>& weights) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    for (std::size_t j = 0; j < 10; ++j) {
        nodes.push_back(c - h * detail::kXgk[j]);
        weights.push_back(h * detail::kWgk[j]);
        nodes.push_back(c + h * detail::kXgk[j]);
        weights.push_back(h * detail::kWgk[j]);
    }
    nodes.push_back(c);
    weights.push_back(h * detail::kWgk[10]);
}

/// Vector-valued adaptive integration. `f(x)` returns Values<N>.
template <std::size_t N, class F>
Result<N> integrate_vector(F&& f, double a, double b, const Options& opt = {}) {
    using P = detail::Panel<N>;
    Result<N> res;
    if (a == b) {
        res.converged = true;
        res.partition.emplace_back(a, b);
        return res;
    }
    std::priority_queue<P> heap;
    const std::size_t n0 = std::max<std::size_t>(1, opt.initial_panels);
    for (std::size_t i = 0; i < n0; ++i) {
        const double lo = a + (b - a) * static_cast<double>(i) / static_cast<double>(n0);
        const double hi = (i + 1 == n0) ? b : a + (b - a) * static_cast<double>(i + 1) / static_cast<double>(n0);
        heap.push(detail::gk21<N>(f, lo, hi));
    }
    res.evaluations = 21 * n0;

    auto totals = [&](Values<N>& v, Values<N>& e) {
        v.fill(0.0);
        e.fill(0.0);
        auto copy = heap;
        while (!copy.empty()) {
            const P& p = copy.top();
            for (std::size_t k = 0; k < N; ++k) {
                v[k] += p.value[k];
                e[k] += p.error[k];
            }
            copy.pop();
        }
    };
    // Running sums, refreshed from scratch occasionally to shed rounding drift.
    Values<N> val{}, err{};
    totals(val, err);
    auto done = [&] {
        for (std::size_t k = 0; k < N; ++k)
            if (!(err[k] <= std::max(opt.abs_tol, opt.rel_tol * std::abs(val[k])))) return false;
        return true;
    };
    std::size_t since_refresh = 0;
    while (!done() && heap.size() < opt.max_panels) {
        P worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b)) {  // interval exhausted in floating point
            heap.push(worst);
            break;
        }
        P left = detail::gk21<N>(f, worst.a, mid);
        P right = detail::gk21<N>(f, mid, worst.b);
        res.evaluations += 42;
        for (std::size_t k = 0; k < N; ++k) {
            val[k] += left.value[k] + right.value[k] - worst.value[k];
            err[k] += left.error[k] + right.error[k] - worst.error[k];
        }
        heap.push(left);
        heap.push(right);
        if (++since_refresh == 64) {
            totals(val, err);
            since_refresh = 0;
        }
    }
    totals(val, err);
    res.value = val;
    res.error = err;
    res.converged = done();
    res.partition.reserve(heap.size());
    while (!heap.empty()) {
        res.partition.emplace_back(heap.top().a, heap.top().b);
        heap.pop();
    }
    std::sort(res.partition.begin(), res.partition.end());
    return res;
}

struct ScalarResult {
    double value = 0;
    double error = 0;
    bool converged = false;
};

/// Scalar adaptive integration; throws QuadratureError when the tolerance is not met.
template <class F>
ScalarResult integrate(F&& f, double a, double b, const Options& opt = {}) {
    auto wrapped = [&f](double x) { return Values<1>{f(x)}; };
    const auto r = integrate_vector<1>(wrapped, a, b, opt);
    if (!r.converged)
        throw QuadratureError("adaptive quadrature on [" + std::to_string(a) + "," + std::to_string(b) +
                              "] stopped at error " + std::to_string(r.error[0]));
    return {r.value[0], r.error[0], true};
}

}  // namespace stablecir::quad
