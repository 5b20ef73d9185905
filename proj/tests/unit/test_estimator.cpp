#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "stablecir/estimator.hpp"

using namespace stablecir;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

PathSample constant_path(double value, std::size_t n, double delta_n) {
    PathSample p;
    p.observations.assign(n + 1, value);
    p.n = n;
    p.delta_n = delta_n;
    return p;
}

PathSample simulated(std::size_t n, std::uint64_t seed, ModelParams mp = {}) {
    RandomStream rng(seed);
    return simulate_path(mp, 1.0 / static_cast<double>(n), n, SimScheme{}, rng);
}

const Theta theta0{1.0, 1.0, 1.5};

}  // namespace

TEST_CASE("symmetrized increments", "[estimator]") {
    const auto t = TuningConfig::with_bandwidth(0.25, 4, 1.0);
    SECTION("constant path gives zero increments") {
        const auto inc = symmetrized_increments(constant_path(2.0, 4, 0.25), t);
        REQUIRE(inc.size() == 2);
        for (double r : inc.rho) CHECK(r == 0.0);
        CHECK_THAT(inc.f_sum[0], WithinAbs(2.0, 1e-15));
    }
    SECTION("second difference scaled by u / sqrt(delta x)") {
        PathSample p = constant_path(1.0, 2, 0.25);
        p.observations = {1.0, 2.0, 4.0};
        const auto inc = symmetrized_increments(p, t);
        REQUIRE(inc.size() == 1);
        CHECK_THAT(inc.rho[0], WithinAbs(1.0 / 0.5, 1e-15));
    }
    SECTION("linear path cancels") {
        PathSample p = constant_path(1.0, 4, 0.25);
        p.observations = {1.0, 1.5, 2.0, 2.5, 3.0};
        for (double r : symmetrized_increments(p, t).rho) CHECK_THAT(r, WithinAbs(0.0, 1e-14));
    }
    SECTION("non-positive base state is rejected") {
        PathSample p = constant_path(1.0, 4, 0.25);
        p.observations[2] = 0.0;
        CHECK_THROWS_AS(symmetrized_increments(p, t), DomainError);
    }
}

TEST_CASE("estimating function on empty increments is zero", "[estimator]") {
    Increments inc;
    const auto t = TuningConfig::from_rule(1e-3, 1000);
    CHECK(estimating_function(theta0, inc, t).isZero());
}

TEST_CASE("A_n F_n at the true parameter has mean zero", "[estimator]") {
    const std::size_t n = 1 << 12;
    const auto t = TuningConfig::from_rule(1.0 / n, n);
    const Eigen::Matrix3d a = rate_matrix_a(theta0, t);
    std::vector<std::vector<double>> comps(3);
    for (std::uint64_t r = 0; r < 100; ++r) {
        const auto inc = symmetrized_increments(simulated(n, derive_seed(303, 0, r)), t);
        const Eigen::Vector3d af = a * estimating_function(theta0, inc, t);
        for (int k = 0; k < 3; ++k) comps[k].push_back(af[k]);
    }
    for (int k = 0; k < 3; ++k) {
        const auto ms = oracle::mean_se(comps[k].begin(), comps[k].end());
        CHECK(std::abs(ms.mean) < 5.0 * ms.se);
    }
}

TEST_CASE("F_n decreases in sigma^2 in the first coordinate", "[estimator]") {
    const std::size_t n = 1 << 10;
    const auto t = TuningConfig::from_rule(1.0 / n, n);
    const auto inc = symmetrized_increments(simulated(n, 11), t);
    double prev = -1e300;
    for (double s : {0.5, 0.8, 1.0, 1.3, 2.0}) {
        const double f = estimating_function({s, 1.0, 1.5}, inc, t)[0];
        CHECK(f > prev);
        prev = f;
    }
}

TEST_CASE("Jacobian matches central differences of F_n", "[estimator]") {
    const std::size_t n = 1 << 10;
    const auto t = TuningConfig::from_rule(1.0 / n, n);
    const auto inc = symmetrized_increments(simulated(n, 12), t);
    for (const Theta th : {Theta{1.0, 1.0, 1.5}, Theta{0.7, 1.6, 1.3}, Theta{1.4, 0.6, 1.75}}) {
        const Eigen::Matrix3d j = jacobian(th, inc, t);
        const Eigen::Vector3d x = th.vec();
        for (int c = 0; c < 3; ++c) {
            const double h = 1e-4 * x[c];
            Eigen::Vector3d xp = x, xm = x;
            xp[c] += h;
            xm[c] -= h;
            const Eigen::Vector3d fd = (estimating_function(Theta::from_vec(xp), inc, t) -
                                        estimating_function(Theta::from_vec(xm), inc, t)) /
                                       (2.0 * h);
            for (int r = 0; r < 3; ++r) CHECK_THAT(j(r, c), WithinRel(fd[r], 1e-4));
        }
        CHECK(j(0, 0) > 0.0);
    }
}

TEST_CASE("normalized Jacobian stays bounded as n grows", "[estimator]") {
    for (std::size_t n : {std::size_t{1} << 10, std::size_t{1} << 12, std::size_t{1} << 14}) {
        const auto t = TuningConfig::from_rule(1.0 / n, n);
        const auto inc = symmetrized_increments(simulated(n, 40 + n), t);
        const Eigen::Matrix3d m = normalized_jacobian(theta0, inc, t);
        CHECK(m.allFinite());
        CHECK(m.cwiseAbs().maxCoeff() < 10.0);
    }
}

TEST_CASE("rate matrices", "[estimator]") {
    const auto t = TuningConfig::from_rule(1e-4, 10000);
    const Eigen::Matrix3d l = rate_matrix_lambda(theta0, t);
    CHECK(l(0, 0) == 1.0 / std::sqrt(10000.0));
    CHECK(l.allFinite());
    for (int k = 0; k < 3; ++k) CHECK(l(k, k) > 0.0);
    CHECK((l * l.inverse() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    const double v = 1.0 / (std::pow(t.u_n, 0.75) * std::pow(1e-4, 0.5 - 0.375));
    CHECK_THAT(l(1, 2), WithinRel(-std::log(t.u_n / 1e-2) * v / 100.0, 1e-12));
    CHECK(rate_matrix_lambda({1.0, 0.0, 1.5}, t)(1, 2) == 0.0);
    const Eigen::Matrix3d a = rate_matrix_a(theta0, t);
    CHECK_THAT(a(0, 0), WithinRel(100.0 / (t.u_n * t.u_n), 1e-15));
    CHECK_THAT(a(1, 1), WithinRel(100.0 * v, 1e-12));
    CHECK(a(0, 1) == 0.0);
}

TEST_CASE("plug-in path functional", "[estimator]") {
    const RegimeSpec fixed;
    const auto one = plugin_I(1.5, constant_path(1.0, 100, 0.01), fixed);
    CHECK_THAT(one.i_hat, WithinAbs(1.0, 1e-14));
    CHECK(one.di_hat == 0.0);
    const auto four = plugin_I(1.5, constant_path(4.0, 200, 0.01), fixed);
    CHECK_THAT(four.i_hat, WithinRel(2.0 * std::pow(4.0, 0.25), 1e-14));
    CHECK_THAT(four.di_hat, WithinRel(-2.0 * std::pow(4.0, 0.25) * std::log(2.0), 1e-14));
    CHECK_THAT(four.normalized_i(), WithinRel(std::sqrt(2.0), 1e-14));

    const auto path = simulated(1000, 19);
    const double h = 1e-6;
    const double fd = (plugin_I(1.4 + h, path, fixed).i_hat - plugin_I(1.4 - h, path, fixed).i_hat) / (2 * h);
    CHECK_THAT(plugin_I(1.4, path, fixed).di_hat, WithinRel(fd, 1e-6));
    CHECK_THROWS_AS(plugin_I(2.0, path, fixed), DomainError);
}

TEST_CASE("limit covariance and Jacobian", "[estimator]") {
    for (const Theta th : {Theta{1.0, 1.0, 1.5}, Theta{0.3, 2.0, 1.2}, Theta{2.0, 0.4, 1.85}}) {
        for (double i : {0.5, 1.0, 2.3}) {
            const Eigen::Matrix3d s = sigma_matrix(th, i);
            CHECK(s(0, 0) == th.sigma_sq * th.sigma_sq);
            CHECK((s - s.transpose()).cwiseAbs().maxCoeff() == 0.0);
            CHECK(Eigen::LLT<Eigen::Matrix3d>(s).info() == Eigen::Success);
            const Eigen::Matrix3d w = w_matrix(th, i, -0.2 * i);
            CHECK_THAT(w.determinant(), WithinRel(w_determinant_closed_form(th, i), 1e-10));
        }
    }
    CHECK_THROWS_AS(w_matrix({1.0, 0.0, 1.5}, 1.0, 0.0), SingularMatrixError);
    CHECK_THROWS_AS(sigma_matrix(theta0, 0.0), DomainError);
}

TEST_CASE("synthetically centered data: the root is recovered from a 30% box", "[estimator]") {
    const std::size_t n = 1 << 12;
    const auto t = TuningConfig::from_rule(1.0 / n, n);
    const auto path = simulated(n, 21);
    std::vector<double> base;
    for (std::size_t i = 0; i + 2 < path.observations.size(); i += 2) base.push_back(path.observations[i]);
    const Theta star{0.9, 1.2, 1.45};
    const auto inc = synthetic_centered_increments(base, n, 1.0 / n, star, t);
    CHECK(estimating_function(star, inc, t).cwiseAbs().maxCoeff() < 1e-13);
    for (double fs : {0.7, 1.3})
        for (double fd : {0.7, 1.3})
            for (double fa : {0.9, 1.1}) {
                const Theta start{fs * star.sigma_sq, fd * star.delta, std::min(fa * star.alpha, 1.95)};
                const auto res = solve(start, inc, t);
                CAPTURE(start.sigma_sq, start.delta, start.alpha, res.message);
                REQUIRE(res.converged);
                CHECK((res.theta_hat.vec() - star.vec()).cwiseAbs().maxCoeff() < 1e-8);
            }
}

TEST_CASE("tiny samples never report a bogus root", "[estimator]") {
    const std::size_t n = 8;
    const auto t = TuningConfig::from_rule(1.0 / n, n);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto inc = symmetrized_increments(simulated(n, seed), t);
        const auto res = estimate(inc, t);
        if (res.converged) {
            CHECK(res.residual_norm < SolveOptions{}.tol);
            CHECK(res.asy_cov.allFinite());
        } else {
            CHECK(!res.message.empty());
            CHECK(res.residual_norm >= SolveOptions{}.tol);
        }
    }
}

TEST_CASE("joint solve from a 20% perturbation of the truth at n = 2^14", "[estimator][slow]") {
    const std::size_t n = 1 << 14;
    const auto t = TuningConfig::from_rule(1.0 / n, n);
    const auto inc = symmetrized_increments(simulated(n, derive_seed(5, 0, 0)), t);
    const double band = 4.0 * std::sqrt(2.0) * std::sqrt(2.0) / std::sqrt(static_cast<double>(n));
    for (const Theta start : {Theta{1.2, 0.8, 1.8}, Theta{0.8, 1.2, 1.2}}) {
        const auto res = solve(start, inc, t);
        CAPTURE(start.sigma_sq, start.delta, start.alpha, res.message, res.theta_hat.sigma_sq, res.theta_hat.delta,
                res.theta_hat.alpha);
        CHECK(res.converged);
        CHECK(std::abs(res.theta_hat.sigma_sq - 1.0) <= band);
    }
}

TEST_CASE("known-alpha normalized Jacobian against its limit at n = 2^14", "[estimator]") {
    const std::size_t n = 1 << 14;
    const auto t = TuningConfig::from_rule(1.0 / n, n);
    const auto path = simulated(n, derive_seed(5, 0, 0));
    const auto inc = symmetrized_increments(path, t);
    const Eigen::Matrix2d j = normalized_jacobian_known_alpha(theta0, inc, t);
    const double i = plugin_I(1.5, path, RegimeSpec{}).normalized_i();
    const Eigen::Matrix3d w = w_matrix(theta0, i, 0.0);
    CAPTURE(j(0, 0), j(0, 1), j(1, 0), j(1, 1), w(1, 1));
    CHECK_THAT(j(0, 0), WithinRel(w(0, 0), 0.15));
    CHECK_THAT(j(1, 1), WithinRel(w(1, 1), 0.15));
    CHECK(std::abs(j(0, 1)) <= 0.15 * w(0, 0));
    CHECK(std::abs(j(1, 0)) <= 0.15 * w(0, 0));
}

TEST_CASE("known-alpha solve recovers the truth and is start independent", "[estimator]") {
    const std::size_t n = 1 << 14;
    const auto t = TuningConfig::from_rule(1.0 / n, n);
    const auto inc = symmetrized_increments(simulated(n, derive_seed(5, 0, 1)), t);
    const auto best = estimate_known_alpha(inc, t, 1.5);
    REQUIRE(best.converged);
    CHECK(best.known_alpha);
    CHECK(best.residual_norm < SolveOptions{}.tol);
    const Eigen::Vector3d se = best.standard_errors();
    CHECK(std::abs(best.theta_hat.sigma_sq - 1.0) < 4.0 * se[0]);
    CHECK(std::abs(best.theta_hat.delta - 1.0) < 4.0 * se[1]);
    CHECK(best.ci_95[0].first < best.theta_hat.sigma_sq);

    RandomStream rng(77);
    const auto runs = solve_known_alpha_multistart({0.5, 0.5}, {1.5, 1.5}, 20, 1.5, inc, t, rng);
    REQUIRE(runs.size() == 20);
    for (const auto& r : runs) {
        REQUIRE(r.converged);
        CHECK(std::abs(r.theta_hat.sigma_sq - best.theta_hat.sigma_sq) < 1e-6);
        CHECK(std::abs(r.theta_hat.delta - best.theta_hat.delta) < 1e-6);
    }
}

TEST_CASE("without jumps the known-alpha delta is of the order of its rate", "[estimator]") {
    const std::size_t n = 1 << 14;
    const auto t = TuningConfig::from_rule(1.0 / n, n);
    ModelParams mp;
    mp.delta = 0.0;
    const auto inc = symmetrized_increments(simulated(n, 808, mp), t);
    const auto res = estimate_known_alpha(inc, t, 1.5);
    const double rate = rate_matrix_lambda(theta0, t)(1, 1);
    CAPTURE(res.converged, res.message, res.residual_norm, res.theta_hat.sigma_sq, res.theta_hat.delta, rate);
    // The root has delta <= 0, so the iterate may stop on the margin of the parameter box.
    CHECK(res.theta_hat.delta >= SolveOptions{}.margin);
    CHECK(res.theta_hat.delta < 5.0 * rate);
}

TEST_CASE("known-alpha estimate moves continuously with the bandwidth exponent", "[estimator]") {
    const std::size_t n = 1 << 12;
    const auto path = simulated(n, 31);
    auto fit = [&](double p) {
        const auto t = TuningConfig::from_rule(1.0 / n, n, p);
        const auto r = estimate_known_alpha(symmetrized_increments(path, t), t, 1.5);
        REQUIRE(r.converged);
        return Eigen::Vector2d{r.theta_hat.sigma_sq, r.theta_hat.delta};
    };
    const Eigen::Vector2d base = fit(0.55);
    const double coarse = (fit(0.56) - base).cwiseAbs().maxCoeff();
    const double fine = (fit(0.551) - base).cwiseAbs().maxCoeff();
    CAPTURE(coarse, fine);
    CHECK(coarse < 0.1);
    CHECK(fine < 0.25 * coarse);
}

TEST_CASE("stationary Laplace transform", "[estimator]") {
    ModelParams p;
    p.b = 1.0;
    CHECK(stationary_laplace(0.0, p) == 1.0);
    std::vector<double> logs;
    for (double l = 0.25; l <= 4.0; l += 0.25) {
        const double v = stationary_laplace(l, p);
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        logs.push_back(std::log(v));
    }
    for (std::size_t k = 1; k < logs.size(); ++k) CHECK(logs[k] < logs[k - 1]);
    for (std::size_t k = 1; k + 1 < logs.size(); ++k) CHECK(logs[k + 1] - 2.0 * logs[k] + logs[k - 1] >= -1e-12);
    // Without noise the law is the point mass a/b.
    ModelParams q = p;
    q.sigma_sq = 0.0;
    q.delta = 0.0;
    CHECK_THAT(stationary_laplace(1.3, q), WithinRel(std::exp(-1.3 * q.a / q.b), 1e-12));
    ModelParams r = p;
    r.b = 0.0;
    CHECK_THROWS_AS(stationary_laplace(1.0, r), DomainError);
}
