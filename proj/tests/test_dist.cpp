#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>

#include "ctrw/dist.hpp"
#include "ctrw/error.hpp"
#include "oracles.hpp"
#include "reference_values.hpp"

using namespace ctrw;

TEST_SUITE("dist") {

TEST_CASE("hurwitz zeta matches high-precision references") {
    for (const auto& r : ref::hurwitz) {
        CAPTURE(r.s);
        CAPTURE(r.q);
        CHECK(hurwitz_zeta(r.s, r.q) == doctest::Approx(r.value).epsilon(2e-14));
    }
}

TEST_CASE("hurwitz zeta matches direct summation") {
    CHECK(hurwitz_zeta(2.5, 1.0) == doctest::Approx(oracle::hurwitz_direct(2.5, 1.0)).epsilon(1e-13));
    CHECK(hurwitz_zeta(3.3, 17.25) == doctest::Approx(oracle::hurwitz_direct(3.3, 17.25)).epsilon(1e-13));
}

TEST_CASE("riemann zeta agrees with boost and rejects s <= 1") {
    for (double s : {1.05, 1.5, 2.0, 2.5, 3.5, 7.0, 30.0}) {
        CAPTURE(s);
        CHECK(riemann_zeta(s) == doctest::Approx(oracle::zeta(s)).epsilon(1e-13));
    }
    CHECK(riemann_zeta(2.0) == doctest::Approx(std::numbers::pi * std::numbers::pi / 6).epsilon(1e-15));
    CHECK_THROWS_AS(riemann_zeta(1.0), DomainError);
    CHECK_THROWS_AS(hurwitz_zeta(2.0, 0.0), DomainError);
}

TEST_CASE("generalized harmonic numbers") {
    for (std::uint64_t n : {0ull, 1ull, 5ull, 256ull, 257ull, 10000ull}) {
        long double direct = 0;
        for (std::uint64_t i = 1; i <= n; ++i) direct += std::pow(static_cast<long double>(i), -1.7L);
        CAPTURE(n);
        CHECK(harmonic(n, 1.7) == doctest::Approx(static_cast<double>(direct)).epsilon(1e-13));
    }
}

TEST_CASE("zeta pmf and survival are consistent") {
    const auto d = RepetitionDistribution::zeta(2.5);
    long double total = 0;
    for (std::uint64_t k = 1; k <= 100000; ++k) total += d.pmf(k);
    total += d.survival(100001);
    CHECK(static_cast<double>(total) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d.survival(1) == 1.0);
    for (std::uint64_t k : {1ull, 2ull, 10ull, 1000ull}) {
        CHECK(d.survival(k) - d.survival(k + 1) == doctest::Approx(d.pmf(k)).epsilon(1e-9));
        CHECK(d.exceedance(static_cast<double>(k)) == doctest::Approx(d.survival(k + 1)).epsilon(1e-14));
    }
    CHECK(zeta_pmf(d, 1) == doctest::Approx(1.0 / oracle::zeta(2.5)).epsilon(1e-14));
    CHECK_THROWS_AS(zeta_pmf(d, 0), DomainError);
    CHECK_THROWS_AS(zeta_survival(d, -1), DomainError);
    CHECK(d.mean() == doctest::Approx(oracle::zeta(1.5) / oracle::zeta(2.5)).epsilon(1e-13));
    CHECK_THROWS_AS(RepetitionDistribution::zeta(1.0), DomainError);
    CHECK_THROWS_AS(RepetitionDistribution::zeta(1.8).mean(), DomainError);
}

TEST_CASE("omega1 matches references and the literal double sum") {
    for (const auto& r : ref::omega1) {
        CAPTURE(r.rho);
        CAPTURE(r.n);
        const auto d = RepetitionDistribution::zeta(r.rho);
        CHECK(omega1_sojourn(d, r.n) == doctest::Approx(r.value).epsilon(1e-11));
    }
    const auto d = RepetitionDistribution::zeta(2.7);
    const oracle::Omega1DoubleSum sum(2.7, 200000);
    for (std::uint64_t n : {0ull, 1ull, 2ull, 13ull, 99ull}) {
        CAPTURE(n);
        CHECK(d.omega1(n) == doctest::Approx(sum(n)).epsilon(1e-11));
    }
}

TEST_CASE("omega1 properties") {
    for (double rho : {2.05, 2.5, 3.0, 6.0}) {
        const auto d = RepetitionDistribution::zeta(rho);
        CHECK(d.omega1(0) == 1.0);
        double prev = 1.0;
        for (std::uint64_t n = 1; n < 5000; n = n * 3 / 2 + 1) {
            const double v = d.omega1(n);
            CHECK(v > 0.0);
            CHECK(v < prev);
            prev = v;
        }
        // Omega_1(n) - Omega_1(n+1) = P(nu > n) / <omega>
        for (std::uint64_t n : {0ull, 4ull, 40ull}) {
            CHECK(d.omega1(n) - d.omega1(n + 1) == doctest::Approx(d.survival(n + 1) / d.mean()).epsilon(1e-10));
        }
    }
    CHECK_THROWS_AS(RepetitionDistribution::zeta(2.0).omega1(3), DomainError);
    CHECK_THROWS_AS(omega1_sojourn(RepetitionDistribution::zeta(2.5), -2), DomainError);
    CHECK(RepetitionDistribution::unit().omega1(0) == 1.0);
    CHECK(RepetitionDistribution::unit().omega1(1) == 0.0);
}

namespace {

// Largest |observed - expected| / sd over the first `kmax` values of a
// discrete law.
template <class Draw, class Prob>
double worst_z(Draw draw, Prob prob, std::uint64_t kmax, int samples) {
    std::map<std::uint64_t, int> counts;
    for (int i = 0; i < samples; ++i) ++counts[draw()];
    double worst = 0.0;
    for (std::uint64_t k = 1; k <= kmax; ++k) {
        const double p = prob(k);
        const double sd = std::sqrt(samples * p * (1 - p));
        worst = std::max(worst, std::fabs(counts[k] - samples * p) / sd);
    }
    return worst;
}

}  // namespace

TEST_CASE("zeta sampler reproduces the law, including the tail") {
    for (double a : {1.5, 2.5, 4.0}) {
        CAPTURE(a);
        const ZetaSampler sampler(a, 64);
        Rng rng = make_stream(7, 0);
        const double z = oracle::zeta(a);
        CHECK(worst_z([&] { return sampler(rng); }, [&](std::uint64_t k) { return std::pow(k, -a) / z; }, 10,
                      200000) < 5.0);
        // mass beyond the table is sampled by rejection
        const std::uint64_t k0 = sampler.tail_start();
        int beyond = 0, far = 0;
        const int n = 200000;
        for (int i = 0; i < n; ++i) {
            const auto k = sampler(rng);
            if (k >= k0) ++beyond;
            if (k >= 4 * k0) ++far;
        }
        const double p = sampler.tail_mass();
        CHECK(std::fabs(beyond - n * p) < 5 * std::sqrt(n * p) + 1);
        const double p_far = hurwitz_zeta(a, 4.0 * k0) / z;
        CHECK(std::fabs(far - n * p_far) < 5 * std::sqrt(n * p_far) + 1);
    }
}

TEST_CASE("stationary residual law is Omega(r) / <omega>") {
    const auto d = RepetitionDistribution::zeta(2.5);
    Rng rng = make_stream(11, 0);
    CHECK(worst_z([&] { return d.sample_stationary_residual(rng); },
                  [&](std::uint64_t r) { return d.survival(r) / d.mean(); }, 8, 200000) < 5.0);
}

TEST_CASE("repetition sampling is deterministic per stream") {
    const auto d = RepetitionDistribution::zeta(2.2);
    Rng a = make_stream(3, 9), b = make_stream(3, 9), c = make_stream(3, 10);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = sample_repetition(d, a);
        CHECK(x == sample_repetition(d, b));
        differs = differs || x != sample_repetition(d, c);
    }
    CHECK(differs);
    Rng r = make_stream(1, 1);
    CHECK(RepetitionDistribution::unit().sample(r) == 1);
}

TEST_CASE("waiting-time models") {
    const auto e = WaitingTimeModel::exponential(2.0);
    CHECK(e.mean() == doctest::Approx(0.5));
    CHECK(e.laplace(3.0) == doctest::Approx(2.0 / 5.0).epsilon(1e-15));
    CHECK(laplace_psi(e, 0.5) == doctest::Approx(0.8));
    CHECK(e.sojourn(1.0) == doctest::Approx(std::exp(-2.0)));
    CHECK(e.pdf(0.25) == doctest::Approx(2 * std::exp(-0.5)));
    CHECK_THROWS_AS(laplace_psi(e, -1.0), DomainError);
    CHECK_THROWS_AS(WaitingTimeModel::exponential(0.0), DomainError);

    for (const auto& r : ref::lognormal_laplace) {
        CAPTURE(r.s);
        const auto ln = WaitingTimeModel::lognormal(r.mu, r.sigma);
        CHECK(ln.laplace(r.s) == doctest::Approx(r.value).epsilon(1e-11));
    }
    const auto ln = WaitingTimeModel::lognormal(0.3, 0.8);
    CHECK(ln.mean() == doctest::Approx(std::exp(0.3 + 0.32)));
    CHECK(ln.cdf(std::exp(0.3)) == doctest::Approx(0.5));

    Rng rng = make_stream(5, 0);
    double sum = 0, sum2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = sample_waiting_time(ln, rng);
        sum += x;
        sum2 += x * x;
    }
    const double se = std::sqrt(ln.variance() / n);
    CHECK(std::fabs(sum / n - ln.mean()) < 5 * se);

    const auto emp = WaitingTimeModel::empirical({3.0, 1.0, 2.0, 2.0});
    CHECK(emp.mean() == doctest::Approx(2.0));
    CHECK(emp.cdf(2.0) == doctest::Approx(0.75));
    CHECK(emp.laplace(1.0) == doctest::Approx((std::exp(-1.0) + 2 * std::exp(-2.0) + std::exp(-3.0)) / 4));
    CHECK_THROWS_AS(WaitingTimeModel::empirical({1.0, -1.0}), DomainError);
    CHECK_THROWS_AS(WaitingTimeModel::empirical({}), DomainError);
}

TEST_CASE("increment models") {
    const auto g = IncrementModel::gaussian(0.5, 2.0);
    CHECK(g.mu1() == 0.5);
    CHECK(g.mu2() == doctest::Approx(4.25));
    const auto h = IncrementModel::gaussian(0.0, 1.0).rectified();
    CHECK(h.half_rectified());
    CHECK(h.mu1() == doctest::Approx(std::sqrt(2.0 / std::numbers::pi)));
    CHECK(h.mu2() == doctest::Approx(1.0));
    CHECK(h.describe() == "halfgauss:0:1");
    const auto t = IncrementModel::two_point(1.5);
    CHECK(t.mu1() == 0.0);
    CHECK(t.mu2() == doctest::Approx(2.25));
    CHECK(t.rectified().mu1() == doctest::Approx(1.5));

    Rng rng = make_stream(2, 0);
    double sum = 0;
    bool negative = false;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double x = h.sample(rng);
        negative = negative || x < 0;
        sum += x;
    }
    CHECK_FALSE(negative);
    CHECK(std::fabs(sum / n - h.mu1()) < 5 * std::sqrt(h.variance() / n));
    CHECK_THROWS_AS(IncrementModel::gaussian(0.0, -1.0), DomainError);
    const auto e = IncrementModel::empirical({-1.0, 1.0, 3.0});
    CHECK(e.mu1() == doctest::Approx(1.0));
    CHECK(e.rectified().mu1() == doctest::Approx(5.0 / 3.0));
}

}  // TEST_SUITE
