#include "ctrw/dist.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "ctrw/error.hpp"
#include "ctrw/format.hpp"

namespace ctrw {

namespace {

// B_{2j} / (2j)!, j = 1..8
constexpr std::array<long double, 8> kBernoulliOverFactorial = {
    1.0L / 6.0L / 2.0L,
    -1.0L / 30.0L / 24.0L,
    1.0L / 42.0L / 720.0L,
    -1.0L / 30.0L / 40320.0L,
    5.0L / 66.0L / 3628800.0L,
    -691.0L / 2730.0L / 479001600.0L,
    7.0L / 6.0L / 87178291200.0L,
    -3617.0L / 510.0L / 20922789888000.0L,
};

constexpr double kTableTailMass = 1e-8;

}  // namespace

double hurwitz_zeta(double s, double q) {
    if (!(s > 1.0)) throw DomainError("hurwitz_zeta: s must exceed 1, got " + format_double(s));
    if (!(q > 0.0)) throw DomainError("hurwitz_zeta: q must be positive, got " + format_double(q));

    const long double ls = s;
    long double direct = 0.0L;
    long double a = q;
    while (a < 12.0L) {
        direct += std::pow(a, -ls);
        a += 1.0L;
    }
    const long double a_pow = std::pow(a, -ls);
    long double tail = a * a_pow / (ls - 1.0L) + 0.5L * a_pow;
    // term_j = B_{2j}/(2j)! * s (s+1) ... (s+2j-2) * a^{-s-2j+1}
    long double rising = ls;
    long double power = a_pow / a;
    for (std::size_t j = 0; j < kBernoulliOverFactorial.size(); ++j) {
        const long double term = kBernoulliOverFactorial[j] * rising * power;
        tail += term;
        if (std::fabs(term) < 1e-21L * std::fabs(tail)) break;
        rising *= (ls + 2.0L * j + 1.0L) * (ls + 2.0L * j + 2.0L);
        power /= a * a;
    }
    return static_cast<double>(direct + tail);
}

double riemann_zeta(double s) { return hurwitz_zeta(s, 1.0); }

double harmonic(std::uint64_t n, double s) {
    if (n == 0) return 0.0;
    if (n <= 256) {
        long double sum = 0.0L;
        for (std::uint64_t i = n; i >= 1; --i) sum += std::pow(static_cast<long double>(i), -static_cast<long double>(s));
        return static_cast<double>(sum);
    }
    return riemann_zeta(s) - hurwitz_zeta(s, static_cast<double>(n) + 1.0);
}

// ---------------------------------------------------------------------------
// ZetaSampler
// ---------------------------------------------------------------------------

ZetaSampler::ZetaSampler(double a, std::size_t max_table) : a_(a) {
    if (!(a > 1.0)) throw DomainError("zeta law needs exponent > 1, got " + format_double(a));
    if (max_table < 1) max_table = 1;
    const double z = riemann_zeta(a);

    // P(K >= k) ~ k^{1-a} / ((a-1) zeta(a)); size the table from that and
    // then walk forward until the exact tail mass is small enough.
    const double estimate = std::pow((a - 1.0) * z * kTableTailMass, 1.0 / (1.0 - a));
    std::size_t size = static_cast<std::size_t>(std::min<double>(std::max(estimate, 1.0), static_cast<double>(max_table)));
    while (size < max_table && hurwitz_zeta(a, static_cast<double>(size) + 1.0) / z >= kTableTailMass) {
        size = std::min(max_table, size * 2);
    }

    cdf_.resize(size);
    long double acc = 0.0L;
    for (std::size_t k = 1; k <= size; ++k) {
        acc += std::pow(static_cast<long double>(k), -static_cast<long double>(a));
        cdf_[k - 1] = static_cast<double>(acc / z);
    }
    tail_mass_ = hurwitz_zeta(a, static_cast<double>(size) + 1.0) / z;
    const double k0 = static_cast<double>(size) + 1.0;
    envelope_ = std::pow(1.0 + 1.0 / k0, a);
}

std::uint64_t ZetaSampler::operator()(Rng& rng) const {
    const double u = uniform_open(rng);
    if (u >= 1.0 - tail_mass_) return sample_tail(rng);
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) return cdf_.size();
    return static_cast<std::uint64_t>(it - cdf_.begin()) + 1;
}

// Proposal: k = floor(X), X Pareto on [k0, inf) with density ~ x^{-a}, so
// q(k) ~ int_k^{k+1} x^{-a} dx. Target p(k) ~ k^{-a}; the ratio p/q is at
// most (1 + 1/k)^a <= envelope_.
std::uint64_t ZetaSampler::sample_tail(Rng& rng) const {
    const double k0 = static_cast<double>(tail_start());
    const double am1 = a_ - 1.0;
    for (;;) {
        const double x = k0 * std::pow(uniform_open(rng), -1.0 / am1);
        if (!(x < static_cast<double>(kSampleCap))) return kSampleCap;
        const double k = std::floor(x);
        // int_k^{k+1} x^{-a} dx * (a-1) = k^{1-a} (1 - (1+1/k)^{1-a})
        const double cell = -std::pow(k, -am1) * std::expm1(-am1 * std::log1p(1.0 / k));
        const double ratio = am1 * std::pow(k, -a_) / cell;
        if (uniform_open(rng) * envelope_ <= ratio) return static_cast<std::uint64_t>(k);
    }
}

// ---------------------------------------------------------------------------
// RepetitionDistribution
// ---------------------------------------------------------------------------

RepetitionDistribution RepetitionDistribution::zeta(double rho) {
    if (!(rho > 1.0) || !std::isfinite(rho)) {
        throw DomainError("repetition exponent rho must be finite and > 1, got " + format_double(rho));
    }
    RepetitionDistribution d;
    d.kind_ = RepetitionKind::zeta;
    d.rho_ = rho;
    d.zeta_rho_ = riemann_zeta(rho);
    d.zeta_rho_m1_ = rho > 2.0 ? riemann_zeta(rho - 1.0) : std::numeric_limits<double>::infinity();
    d.sampler_ = std::make_shared<const ZetaSampler>(rho);
    if (rho > 2.0) d.size_biased_ = std::make_shared<const ZetaSampler>(rho - 1.0);
    return d;
}

RepetitionDistribution RepetitionDistribution::unit() {
    RepetitionDistribution d;
    d.kind_ = RepetitionKind::unit;
    d.rho_ = std::numeric_limits<double>::infinity();
    return d;
}

bool RepetitionDistribution::ergodic() const noexcept {
    return kind_ == RepetitionKind::unit || rho_ > 2.0;
}

double RepetitionDistribution::pmf(std::uint64_t k) const {
    if (k < 1) throw DomainError("repetition pmf: k must be >= 1");
    if (kind_ == RepetitionKind::unit) return k == 1 ? 1.0 : 0.0;
    return std::pow(static_cast<double>(k), -rho_) / zeta_rho_;
}

double RepetitionDistribution::survival(std::uint64_t k) const {
    if (k < 1) throw DomainError("repetition survival: k must be >= 1");
    if (kind_ == RepetitionKind::unit) return k == 1 ? 1.0 : 0.0;
    if (k == 1) return 1.0;
    return hurwitz_zeta(rho_, static_cast<double>(k)) / zeta_rho_;
}

double RepetitionDistribution::exceedance(double x) const {
    if (!(x >= 0.0)) throw DomainError("repetition exceedance: x must be >= 0");
    if (kind_ == RepetitionKind::unit) return x < 1.0 ? 1.0 : 0.0;
    return hurwitz_zeta(rho_, x + 1.0) / zeta_rho_;
}

double RepetitionDistribution::mean() const {
    if (kind_ == RepetitionKind::unit) return 1.0;
    if (rho_ <= 2.0) throw DomainError("non-ergodic regime: mean repetition count is infinite for rho <= 2");
    return zeta_rho_m1_ / zeta_rho_;
}

double RepetitionDistribution::omega1(std::uint64_t n) const {
    if (kind_ == RepetitionKind::unit) return n == 0 ? 1.0 : 0.0;
    if (rho_ <= 2.0) throw DomainError("non-ergodic regime: Omega_1 requires rho > 2, got " + format_double(rho_));
    if (n == 0) return 1.0;
    // sum_{m>n} (m - n) omega(m) / <omega>
    //   = [zeta(rho-1, n+1) - n zeta(rho, n+1)] / zeta(rho-1)
    // which equals 1 - n/<omega> + n H_{n,rho}/zeta(rho-1) - H_{n,rho-1}/zeta(rho-1)
    // but avoids cancelling O(n) terms at large n.
    const double q = static_cast<double>(n) + 1.0;
    const double value = (hurwitz_zeta(rho_ - 1.0, q) - static_cast<double>(n) * hurwitz_zeta(rho_, q)) / zeta_rho_m1_;
    return std::clamp(value, 0.0, 1.0);
}

std::uint64_t RepetitionDistribution::sample(Rng& rng) const {
    if (kind_ == RepetitionKind::unit) return 1;
    return (*sampler_)(rng);
}

// A stationary observer lands in a block with the size-biased law
// m omega(m)/<omega> (the zeta(rho-1) law) at a uniform position within it.
std::uint64_t RepetitionDistribution::sample_stationary_residual(Rng& rng) const {
    if (kind_ == RepetitionKind::unit) return 1;
    if (!size_biased_) throw DomainError("non-ergodic regime: no stationary start for rho <= 2");
    const std::uint64_t block = (*size_biased_)(rng);
    std::uniform_int_distribution<std::uint64_t> pos(1, block);
    return pos(rng);
}

std::string RepetitionDistribution::describe() const {
    if (kind_ == RepetitionKind::unit) return "unit";
    return "zeta:" + format_double(rho_);
}

double zeta_pmf(const RepetitionDistribution& d, std::int64_t k) {
    if (k < 1) throw DomainError("zeta_pmf: k must be >= 1, got " + std::to_string(k));
    return d.pmf(static_cast<std::uint64_t>(k));
}

double zeta_survival(const RepetitionDistribution& d, std::int64_t k) {
    if (k < 1) throw DomainError("zeta_survival: k must be >= 1, got " + std::to_string(k));
    return d.survival(static_cast<std::uint64_t>(k));
}

double omega1_sojourn(const RepetitionDistribution& d, std::int64_t n) {
    if (n < 0) throw DomainError("omega1_sojourn: n must be >= 0, got " + std::to_string(n));
    return d.omega1(static_cast<std::uint64_t>(n));
}

std::uint64_t sample_repetition(const RepetitionDistribution& d, Rng& rng) { return d.sample(rng); }

// ---------------------------------------------------------------------------
// WaitingTimeModel
// ---------------------------------------------------------------------------

WaitingTimeModel WaitingTimeModel::exponential(double rate) {
    if (!(rate > 0.0) || !std::isfinite(rate)) throw DomainError("exponential waiting times need rate > 0");
    WaitingTimeModel w;
    w.kind_ = WaitingKind::exponential;
    w.p1_ = rate;
    w.mean_ = 1.0 / rate;
    w.variance_ = 1.0 / (rate * rate);
    return w;
}

WaitingTimeModel WaitingTimeModel::lognormal(double mu, double sigma) {
    if (!std::isfinite(mu) || !(sigma > 0.0) || !std::isfinite(sigma)) {
        throw DomainError("lognormal waiting times need finite mu and sigma > 0");
    }
    WaitingTimeModel w;
    w.kind_ = WaitingKind::lognormal;
    w.p1_ = mu;
    w.p2_ = sigma;
    w.mean_ = std::exp(mu + 0.5 * sigma * sigma);
    w.variance_ = std::expm1(sigma * sigma) * w.mean_ * w.mean_;
    return w;
}

WaitingTimeModel WaitingTimeModel::empirical(std::vector<double> sample) {
    if (sample.empty()) throw DomainError("empirical waiting-time sample is empty");
    for (double x : sample) {
        if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("empirical waiting times must be positive and finite");
    }
    std::sort(sample.begin(), sample.end());
    WaitingTimeModel w;
    w.kind_ = WaitingKind::empirical;
    long double s1 = 0.0L, s2 = 0.0L;
    for (double x : sample) {
        s1 += x;
        s2 += static_cast<long double>(x) * x;
    }
    const long double n = static_cast<long double>(sample.size());
    w.mean_ = static_cast<double>(s1 / n);
    w.variance_ = std::max(0.0, static_cast<double>(s2 / n - (s1 / n) * (s1 / n)));
    w.sample_ = std::make_shared<const std::vector<double>>(std::move(sample));
    return w;
}

WaitingTimeModel WaitingTimeModel::load_empirical_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open waiting-time sample " + path.string());
    std::vector<double> values;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto field = line.substr(0, line.find(','));
        double v = 0.0;
        if (!parse_double(field, v)) {
            if (values.empty() && line_no == 1) continue;  // header
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": not a number: " + field);
        }
        values.push_back(v);
    }
    return empirical(std::move(values));
}

double WaitingTimeModel::pdf(double x) const {
    if (x <= 0.0) return 0.0;
    switch (kind_) {
        case WaitingKind::exponential:
            return p1_ * std::exp(-p1_ * x);
        case WaitingKind::lognormal: {
            const double z = (std::log(x) - p1_) / p2_;
            return std::exp(-0.5 * z * z) / (x * p2_ * std::sqrt(2.0 * std::numbers::pi));
        }
        case WaitingKind::empirical:
            break;
    }
    throw DomainError("empirical waiting-time law has no density");
}

double WaitingTimeModel::cdf(double x) const {
    if (x <= 0.0) return 0.0;
    switch (kind_) {
        case WaitingKind::exponential:
            return -std::expm1(-p1_ * x);
        case WaitingKind::lognormal:
            return 0.5 * std::erfc(-(std::log(x) - p1_) / (p2_ * std::numbers::sqrt2));
        case WaitingKind::empirical: {
            const auto& v = *sample_;
            const auto it = std::upper_bound(v.begin(), v.end(), x);
            return static_cast<double>(it - v.begin()) / static_cast<double>(v.size());
        }
    }
    return 0.0;
}

double WaitingTimeModel::laplace(double s) const {
    if (!(s >= 0.0)) throw DomainError("laplace transform needs s >= 0");
    if (s == 0.0) return 1.0;
    switch (kind_) {
        case WaitingKind::exponential:
            return p1_ / (p1_ + s);
        case WaitingKind::lognormal: {
            // E exp(-s e^{mu + sigma z}), z standard normal
            const double mu = p1_, sigma = p2_;
            auto f = [&](double z) {
                return std::exp(-s * std::exp(mu + sigma * z) - 0.5 * z * z);
            };
            double error = 0.0;
            const double value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                                     f, -40.0, 40.0, 20, 1e-14, &error) /
                                 std::sqrt(2.0 * std::numbers::pi);
            if (!(error <= 1e-10) || !std::isfinite(value)) {
                throw NumericError("lognormal Laplace transform did not converge at s=" + format_double(s) +
                                   " (mu=" + format_double(mu) + ", sigma=" + format_double(sigma) +
                                   ", error estimate " + format_double(error) + ")");
            }
            return std::clamp(value, 0.0, 1.0);
        }
        case WaitingKind::empirical: {
            long double acc = 0.0L;
            for (double x : *sample_) acc += std::exp(-s * x);
            return static_cast<double>(acc / static_cast<long double>(sample_->size()));
        }
    }
    return 0.0;
}

double WaitingTimeModel::laplace_complement(double s) const {
    if (!(s >= 0.0)) throw DomainError("laplace transform needs s >= 0");
    if (s == 0.0) return 0.0;
    switch (kind_) {
        case WaitingKind::exponential:
            return s / (p1_ + s);
        case WaitingKind::lognormal: {
            const double mu = p1_, sigma = p2_;
            auto f = [&](double z) {
                return -std::expm1(-s * std::exp(mu + sigma * z)) * std::exp(-0.5 * z * z);
            };
            double error = 0.0;
            const double value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                                     f, -40.0, 40.0, 20, 1e-14, &error) /
                                 std::sqrt(2.0 * std::numbers::pi);
            if (!(error <= 1e-12 + 1e-9 * value) || !std::isfinite(value)) {
                throw NumericError("lognormal Laplace transform did not converge at s=" + format_double(s) +
                                   " (mu=" + format_double(mu) + ", sigma=" + format_double(sigma) +
                                   ", error estimate " + format_double(error) + ")");
            }
            return std::clamp(value, 0.0, 1.0);
        }
        case WaitingKind::empirical: {
            long double acc = 0.0L;
            for (double x : *sample_) acc -= std::expm1(-s * x);
            return static_cast<double>(acc / static_cast<long double>(sample_->size()));
        }
    }
    return 0.0;
}

double WaitingTimeModel::sample(Rng& rng) const {
    switch (kind_) {
        case WaitingKind::exponential:
            return -std::log(uniform_open(rng)) / p1_;
        case WaitingKind::lognormal: {
            std::normal_distribution<double> n(p1_, p2_);
            return std::exp(n(rng));
        }
        case WaitingKind::empirical: {
            std::uniform_int_distribution<std::size_t> pick(0, sample_->size() - 1);
            return (*sample_)[pick(rng)];
        }
    }
    return 0.0;
}

std::span<const double> WaitingTimeModel::empirical_sample() const {
    if (!sample_) return {};
    return *sample_;
}

std::string WaitingTimeModel::describe() const {
    switch (kind_) {
        case WaitingKind::exponential:
            return "exp:" + format_double(p1_);
        case WaitingKind::lognormal:
            return "lognormal:" + format_double(p1_) + ":" + format_double(p2_);
        case WaitingKind::empirical:
            return "empirical(n=" + std::to_string(sample_->size()) + ")";
    }
    return {};
}

double sample_waiting_time(const WaitingTimeModel& w, Rng& rng) { return w.sample(rng); }
double laplace_psi(const WaitingTimeModel& w, double s) {
    if (!(s > 0.0)) throw DomainError("laplace_psi: s must be positive");
    return w.laplace(s);
}

// ---------------------------------------------------------------------------
// IncrementModel
// ---------------------------------------------------------------------------

IncrementModel IncrementModel::gaussian(double mu, double sigma) {
    if (!std::isfinite(mu) || !(sigma >= 0.0) || !std::isfinite(sigma)) {
        throw DomainError("gaussian increments need finite mu and sigma >= 0");
    }
    IncrementModel h;
    h.kind_ = IncrementKind::gaussian;
    h.p1_ = mu;
    h.p2_ = sigma;
    h.update_moments();
    return h;
}

IncrementModel IncrementModel::two_point(double a) {
    if (!std::isfinite(a)) throw DomainError("two-point increments need finite amplitude");
    IncrementModel h;
    h.kind_ = IncrementKind::two_point;
    h.p1_ = std::fabs(a);
    h.update_moments();
    return h;
}

IncrementModel IncrementModel::empirical(std::vector<double> sample) {
    if (sample.empty()) throw DomainError("empirical increment sample is empty");
    for (double x : sample) {
        if (!std::isfinite(x)) throw DomainError("empirical increments must be finite");
    }
    IncrementModel h;
    h.kind_ = IncrementKind::empirical;
    h.sample_ = std::make_shared<const std::vector<double>>(std::move(sample));
    h.update_moments();
    return h;
}

IncrementModel IncrementModel::rectified() const {
    IncrementModel h = *this;
    h.half_rectified_ = true;
    h.update_moments();
    return h;
}

void IncrementModel::update_moments() {
    switch (kind_) {
        case IncrementKind::gaussian: {
            const double mu = p1_, sigma = p2_;
            mu2_ = mu * mu + sigma * sigma;
            if (!half_rectified_) {
                mu1_ = mu;
            } else if (sigma == 0.0) {
                mu1_ = std::fabs(mu);
            } else {
                // folded normal
                const double r = mu / sigma;
                mu1_ = sigma * std::sqrt(2.0 / std::numbers::pi) * std::exp(-0.5 * r * r) +
                       mu * std::erf(r / std::numbers::sqrt2);
            }
            break;
        }
        case IncrementKind::two_point:
            mu1_ = half_rectified_ ? p1_ : 0.0;
            mu2_ = p1_ * p1_;
            break;
        case IncrementKind::empirical: {
            long double s1 = 0.0L, s2 = 0.0L;
            for (double x : *sample_) {
                s1 += half_rectified_ ? std::fabs(x) : x;
                s2 += static_cast<long double>(x) * x;
            }
            const long double n = static_cast<long double>(sample_->size());
            mu1_ = static_cast<double>(s1 / n);
            mu2_ = static_cast<double>(s2 / n);
            break;
        }
    }
}

double IncrementModel::sample(Rng& rng) const {
    double x = 0.0;
    switch (kind_) {
        case IncrementKind::gaussian:
            if (p2_ == 0.0) {
                x = p1_;
            } else {
                std::normal_distribution<double> n(p1_, p2_);
                x = n(rng);
            }
            break;
        case IncrementKind::two_point:
            x = (rng() >> 63) ? p1_ : -p1_;
            break;
        case IncrementKind::empirical: {
            std::uniform_int_distribution<std::size_t> pick(0, sample_->size() - 1);
            x = (*sample_)[pick(rng)];
            break;
        }
    }
    return half_rectified_ ? std::fabs(x) : x;
}

std::string IncrementModel::describe() const {
    std::string base;
    switch (kind_) {
        case IncrementKind::gaussian:
            base = (half_rectified_ ? "halfgauss:" : "gauss:") + format_double(p1_) + ":" + format_double(p2_);
            return base;
        case IncrementKind::two_point:
            base = "twopoint:" + format_double(p1_);
            break;
        case IncrementKind::empirical:
            base = "empirical(n=" + std::to_string(sample_->size()) + ")";
            break;
    }
    return half_rectified_ ? "abs(" + base + ")" : base;
}

}  // namespace ctrw
