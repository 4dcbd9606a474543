#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ctrw/random.hpp"

namespace ctrw {

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

// Hurwitz zeta  sum_{k>=0} (k + q)^{-s}  for s > 1, q > 0.
// Euler-Maclaurin with Bernoulli corrections after shifting q to >= 12;
// relative accuracy is close to machine precision.
double hurwitz_zeta(double s, double q);

// Riemann zeta for s > 1; +inf for s <= 1 is *not* returned, it throws.
double riemann_zeta(double s);

// Generalized harmonic number H_{n,s} = sum_{i=1}^{n} i^{-s}, H_{0,s} = 0.
double harmonic(std::uint64_t n, double s);

// ---------------------------------------------------------------------------
// Exact sampler of the zeta law P(k) = k^{-a} / zeta(a), k >= 1, a > 1.
//
// Inversion by binary search over a CDF table covering k < tail_start(),
// where tail_start() is the first k with P(K >= k) < 1e-8 (capped at
// max_table entries). Draws beyond the table use a Pareto envelope with an
// exact accept/reject correction, so the law is not truncated. Draws larger
// than kSampleCap are reported as kSampleCap.
// ---------------------------------------------------------------------------
class ZetaSampler {
public:
    static constexpr std::uint64_t kSampleCap = std::uint64_t{1} << 62;

    explicit ZetaSampler(double a, std::size_t max_table = std::size_t{1} << 20);

    std::uint64_t operator()(Rng& rng) const;

    double exponent() const noexcept { return a_; }
    std::uint64_t tail_start() const noexcept { return cdf_.size() + 1; }
    double tail_mass() const noexcept { return tail_mass_; }

private:
    std::uint64_t sample_tail(Rng& rng) const;

    double a_;
    std::vector<double> cdf_;  // cdf_[k-1] = P(K <= k)
    double tail_mass_ = 0.0;   // P(K >= tail_start())
    double envelope_ = 1.0;    // rejection constant of the tail sampler
};

// ---------------------------------------------------------------------------
// Repetition law omega(nu) of the waiting-time process.
// ---------------------------------------------------------------------------
enum class RepetitionKind {
    zeta,  // omega_rho(k) = k^{-rho} / zeta(rho)
    unit,  // nu == 1 always: no memory, i.i.d. waiting times
};

class RepetitionDistribution {
public:
    // rho > 1. Stationary quantities (mean, omega1) additionally need rho > 2.
    static RepetitionDistribution zeta(double rho);
    static RepetitionDistribution unit();

    RepetitionKind kind() const noexcept { return kind_; }
    double rho() const noexcept { return rho_; }
    double zeta_rho() const noexcept { return zeta_rho_; }
    // zeta(rho - 1); +inf when rho <= 2.
    double zeta_rho_m1() const noexcept { return zeta_rho_m1_; }
    bool ergodic() const noexcept;

    double pmf(std::uint64_t k) const;
    // Omega(k) = P(nu >= k).
    double survival(std::uint64_t k) const;
    // P(nu > x) extended to real x >= 0 (zeta: zeta(rho, x+1)/zeta(rho)).
    double exceedance(double x) const;
    // <omega> = zeta(rho-1)/zeta(rho); throws DomainError when rho <= 2.
    double mean() const;
    // Stationarized sojourn Omega_1(n): probability that the waiting time at
    // step i is still the same value at step i+n. Throws when rho <= 2.
    double omega1(std::uint64_t n) const;

    std::uint64_t sample(Rng& rng) const;
    // Remaining length (>= 1, counting the current step) of the block that
    // covers step 0 of a stationary sequence: P(R = r) = Omega(r) / <omega>.
    std::uint64_t sample_stationary_residual(Rng& rng) const;

    std::string describe() const;

private:
    RepetitionDistribution() = default;

    RepetitionKind kind_ = RepetitionKind::unit;
    double rho_ = 0.0;
    double zeta_rho_ = 1.0;
    double zeta_rho_m1_ = 1.0;
    std::shared_ptr<const ZetaSampler> sampler_;
    std::shared_ptr<const ZetaSampler> size_biased_;  // zeta(rho - 1) law
};

double zeta_pmf(const RepetitionDistribution& d, std::int64_t k);
double zeta_survival(const RepetitionDistribution& d, std::int64_t k);
double omega1_sojourn(const RepetitionDistribution& d, std::int64_t n);
std::uint64_t sample_repetition(const RepetitionDistribution& d, Rng& rng);

// ---------------------------------------------------------------------------
// Waiting-time law psi(dt)
// ---------------------------------------------------------------------------
enum class WaitingKind { exponential, lognormal, empirical };

class WaitingTimeModel {
public:
    static WaitingTimeModel exponential(double rate);
    static WaitingTimeModel lognormal(double mu, double sigma);
    static WaitingTimeModel empirical(std::vector<double> sample);
    // One column of positive durations in seconds; an optional non-numeric
    // header line and '#' comments are skipped.
    static WaitingTimeModel load_empirical_csv(const std::filesystem::path& path);

    WaitingKind kind() const noexcept { return kind_; }
    double mean() const noexcept { return mean_; }
    double variance() const noexcept { return variance_; }

    double pdf(double x) const;  // not defined for the empirical kind
    double cdf(double x) const;  // P(dt <= x)
    // Sojourn Psi(t) = P(dt > t).
    double sojourn(double t) const { return 1.0 - cdf(t); }
    // E[exp(-s dt)], s >= 0.
    double laplace(double s) const;
    // 1 - E[exp(-s dt)] without cancellation at small s.
    double laplace_complement(double s) const;
    double sample(Rng& rng) const;

    std::span<const double> empirical_sample() const;
    std::string describe() const;

private:
    WaitingTimeModel() = default;

    WaitingKind kind_ = WaitingKind::exponential;
    double p1_ = 1.0;  // rate | mu
    double p2_ = 0.0;  // -    | sigma
    double mean_ = 1.0;
    double variance_ = 1.0;
    std::shared_ptr<const std::vector<double>> sample_;  // sorted
};

double sample_waiting_time(const WaitingTimeModel& w, Rng& rng);
double laplace_psi(const WaitingTimeModel& w, double s);

// ---------------------------------------------------------------------------
// Increment law h(dx)
// ---------------------------------------------------------------------------
enum class IncrementKind { gaussian, two_point, empirical };

class IncrementModel {
public:
    static IncrementModel gaussian(double mu, double sigma);
    static IncrementModel two_point(double a);
    static IncrementModel empirical(std::vector<double> sample);

    // Same law folded onto |dx|: for a symmetric law this is the positive
    // half doubled.
    IncrementModel rectified() const;

    IncrementKind kind() const noexcept { return kind_; }
    bool half_rectified() const noexcept { return half_rectified_; }
    double mu1() const noexcept { return mu1_; }
    double mu2() const noexcept { return mu2_; }
    double variance() const noexcept { return mu2_ - mu1_ * mu1_; }

    double sample(Rng& rng) const;
    std::string describe() const;

private:
    IncrementModel() = default;
    void update_moments();

    IncrementKind kind_ = IncrementKind::gaussian;
    bool half_rectified_ = false;
    double p1_ = 0.0;  // mu | a
    double p2_ = 1.0;  // sigma
    double mu1_ = 0.0;
    double mu2_ = 1.0;
    std::shared_ptr<const std::vector<double>> sample_;
};

}  // namespace ctrw
