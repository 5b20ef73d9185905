#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "stablecir/stable_levy.hpp"

using namespace stablecir;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("c_alpha agrees with an independent Gamma evaluation", "[stable_levy]") {
    CHECK_THAT(c_alpha(1.5), WithinAbs(0.598413, 1e-5));
    for (double a : {1.05, 1.2, 1.5, 1.7, 1.95}) CHECK_THAT(c_alpha(a), WithinRel(oracle::c_alpha(a), 1e-12));
    // cos(3 pi / 4) = -sqrt(2)/2 and Gamma(1/2) = sqrt(pi)
    CHECK_THAT(c_alpha(1.5), WithinRel(0.75 / (std::sqrt(oracle::pi) * std::sqrt(2.0) / 2.0), 1e-12));
}

TEST_CASE("c_alpha limits at the ends of the open interval", "[stable_levy]") {
    CHECK(c_alpha(1.999) < 0.01);
    // alpha - 1 cancels the zero of cos(pi alpha / 2), leaving alpha / (Gamma(1) pi / 2) -> 2 / pi.
    CHECK_THAT(c_alpha(1.0 + 1e-6), WithinAbs(2.0 / oracle::pi, 1e-5));
    CHECK_THAT(c_alpha(1.001), WithinRel(oracle::c_alpha(1.001), 1e-10));
    CHECK(c_alpha(1.999) > 0.0);
    CHECK_THROWS_AS(c_alpha(2.0), DomainError);
    CHECK_THROWS_AS(c_alpha(1.0), DomainError);
}

TEST_CASE("symmetric draws reproduce exp(-|z|^alpha)", "[stable_levy]") {
    RandomStream rng(101);
    const std::size_t m = 1000000;
    std::vector<double> c(m), s(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double v = sample_symmetric(1.5, rng);
        c[i] = std::cos(v);
        s[i] = std::sin(v);
    }
    const auto mc = oracle::mean_se(c.begin(), c.end());
    const auto ms = oracle::mean_se(s.begin(), s.end());
    CHECK(std::abs(mc.mean - 0.367879441171) < 3.0 * mc.se);
    CHECK(std::abs(ms.mean) < 3.0 * ms.se);
}

TEST_CASE("symmetric draws scale by t^{1/alpha}", "[stable_levy]") {
    const double alpha = 1.5, t = 3.0, scale = std::pow(t, 1.0 / alpha);
    RandomStream r1(7), r2(8);
    std::vector<double> a(100000), b(100000);
    for (auto& v : a) v = scale * sample_symmetric(alpha, r1);
    // S_t through its characteristic function exp(-t|z|^alpha): a sum of three unit draws.
    for (auto& v : b) v = sample_symmetric(alpha, r2) + sample_symmetric(alpha, r2) + sample_symmetric(alpha, r2);
    CHECK(oracle::ks_statistic(a, b) < 0.01);
}

TEST_CASE("spectrally positive characteristic function at z = +-1, alpha = 1.3", "[stable_levy]") {
    const double alpha = 1.3;
    RandomStream rng(202);
    const std::size_t m = 1000000;
    std::vector<double> draws(m);
    for (auto& v : draws) v = sample_spectrally_positive(alpha, rng);
    for (double z : {-1.0, 1.0}) {
        std::vector<double> re(m), im(m);
        for (std::size_t i = 0; i < m; ++i) re[i] = std::cos(z * draws[i]), im[i] = std::sin(z * draws[i]);
        const auto r = oracle::mean_se(re.begin(), re.end());
        const auto s = oracle::mean_se(im.begin(), im.end());
        const double mod = std::pow(std::abs(z), alpha);
        const double sgn = z > 0 ? 1.0 : -1.0;
        const double expect_re = std::exp(-mod) * std::cos(mod * std::tan(oracle::pi * alpha / 2.0) * sgn);
        const double expect_im = std::exp(-mod) * std::sin(mod * std::tan(oracle::pi * alpha / 2.0) * sgn);
        CHECK(std::abs(r.mean - expect_re) < 3.0 * r.se);
        CHECK(std::abs(s.mean - expect_im) < 3.0 * s.se);
        const auto analytic = StableSpec{alpha, Skew::SpectrallyPositive}.characteristic_function(z);
        CHECK_THAT(analytic.real(), WithinAbs(expect_re, 1e-14));
        CHECK_THAT(analytic.imag(), WithinAbs(expect_im, 1e-14));
    }
    const auto mean = oracle::mean_se(draws.begin(), draws.end());
    CHECK(std::abs(mean.mean) < 3.0 * mean.se);
}

TEST_CASE("increment draws satisfy dt-scaling in law", "[stable_levy]") {
    const double alpha = 1.5;
    RandomStream r1(31), r2(32);
    std::vector<double> a(100000), b(100000);
    for (auto& v : a) v = sample_spectrally_positive_increment(alpha, 2.0, r1);
    for (auto& v : b) v = std::pow(2.0, 1.0 / alpha) * sample_spectrally_positive_increment(alpha, 1.0, r2);
    CHECK(oracle::ks_statistic(a, b) < 0.01);
    CHECK_THROWS_AS(sample_spectrally_positive_increment(alpha, 0.0, r1), DomainError);
}

TEST_CASE("same seed gives the same draws", "[stable_levy]") {
    RandomStream a(99), b(99);
    for (int i = 0; i < 1000; ++i) REQUIRE(sample_spectrally_positive(1.7, a) == sample_spectrally_positive(1.7, b));
}

TEST_CASE("alpha outside the guarded range is rejected by the sampler", "[stable_levy]") {
    RandomStream rng(1);
    CHECK_THROWS_AS(sample_symmetric(1.0, rng), DomainError);
    CHECK_THROWS_AS(sample_symmetric(2.0, rng), DomainError);
    CHECK_THROWS_AS(sample_spectrally_positive(0.5, rng), DomainError);
}

TEST_CASE("symmetric tail density", "[stable_levy]") {
    CHECK_THAT(symmetric_stable_tail_density(10.0, 1.5), WithinRel(0.598413421 / (2.0 * std::pow(10.0, 2.5)), 1e-8));
    CHECK_THAT(symmetric_stable_tail_density(10.0, 1.5), WithinAbs(9.4625e-4, 1e-7));
    double prev = symmetric_stable_tail_density(1.0, 1.5);
    for (double y = 1.5; y < 100.0; y *= 1.5) {
        const double v = symmetric_stable_tail_density(y, 1.5);
        CHECK(v < prev);
        prev = v;
    }
    CHECK_THROWS_AS(symmetric_stable_tail_density(0.0, 1.5), DomainError);
}

TEST_CASE("histogram of |S| on [10, 50] follows the tail density", "[stable_levy]") {
    const double alpha = 1.5, c = oracle::c_alpha(alpha);
    const std::array<double, 4> edges{10.0, 15.0, 25.0, 50.0};
    std::array<double, 3> counts{};
    RandomStream rng(4040);
    const std::size_t m = 10000000;
    StableSampler sampler({alpha, Skew::Symmetric});
    for (std::size_t i = 0; i < m; ++i) {
        const double v = std::abs(sampler(rng));
        for (std::size_t k = 0; k < 3; ++k)
            if (v >= edges[k] && v < edges[k + 1]) counts[k] += 1.0;
    }
    for (std::size_t k = 0; k < 3; ++k) {
        const double expected = c / alpha * (std::pow(edges[k], -alpha) - std::pow(edges[k + 1], -alpha));
        CHECK_THAT(counts[k] / m, WithinRel(expected, 0.15));
    }
}
