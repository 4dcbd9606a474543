#include "ctrw/analytic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>

#include <boost/math/quadrature/exp_sinh.hpp>

#include "ctrw/error.hpp"
#include "ctrw/format.hpp"
#include "ctrw/parallel.hpp"

namespace ctrw {

namespace {

void require_ergodic(const RepetitionDistribution& rep, const char* what) {
    if (!rep.ergodic()) {
        throw DomainError(std::string("non-ergodic regime: ") + what + " requires rho > 2, got " +
                          format_double(rep.rho()));
    }
}

constexpr std::uint64_t kInitialNuMax = 1024;
constexpr std::uint64_t kLargestNuMax = std::uint64_t{1} << 24;

// All four sums j0, j1, J0, J1 at one s. Index 0..1 = j_n, 2..3 = J_n.
struct SumSet {
    std::array<long double, 4> value{};
    std::array<double, 4> error{};
    std::uint64_t nu_max = 0;
};

// Continuous extension of the nu-th summand of sum `which`.
double summand(int which, double x, double s, const WaitingTimeModel& w, const RepetitionDistribution& rep) {
    const double psi = w.laplace(s * x);
    const double power = which % 2 == 0 ? 1.0 : x;
    if (which < 2) return power * std::pow(x, -rep.rho()) / rep.zeta_rho() * psi;
    return power * rep.exceedance(x) * psi;
}

double remainder_bound(int which, std::uint64_t nu_max, double s, const WaitingTimeModel& w,
                       const RepetitionDistribution& rep, double* derivative = nullptr) {
    const double a = static_cast<double>(nu_max) + 1.0;
    const double h = 1e-3 * a;
    const double d = (summand(which, a + h, s, w, rep) - summand(which, a - h, s, w, rep)) / (2.0 * h);
    if (derivative) *derivative = d;
    // Next Euler-Maclaurin term |f'''(a)|/720 with f''' ~ f' (p+1)(p+2)/a^2,
    // local decay exponent p <= rho + 2.
    const double rho = rep.rho();
    return std::fabs(d) * (rho + 3.0) * (rho + 4.0) / (720.0 * a * a) + 1e-6 * std::fabs(d) / 12.0;
}

double worst_bound(std::uint64_t nu_max, double s, const WaitingTimeModel& w, const RepetitionDistribution& rep,
                   std::span<const int> which) {
    double b = 0.0;
    for (int k : which) b = std::max(b, remainder_bound(k, nu_max, s, w, rep));
    return b;
}

std::uint64_t sufficient_nu_max(std::uint64_t start, double s, const WaitingTimeModel& w,
                                const RepetitionDistribution& rep, std::span<const int> which, double tolerance) {
    std::uint64_t v = std::max<std::uint64_t>(start, 16);
    while (worst_bound(v, s, w, rep, which) > tolerance) {
        if (v >= (std::uint64_t{1} << 40)) return 0;
        v *= 2;
    }
    return v;
}

SumSet evaluate_sums(double s, const WaitingTimeModel& w, const RepetitionDistribution& rep, std::uint64_t nu_max) {
    SumSet out;
    out.nu_max = nu_max;
    if (rep.kind() == RepetitionKind::unit) {
        const double psi = w.laplace(s);
        out.value = {psi, psi, 0.0L, 0.0L};
        return out;
    }
    const double rho = rep.rho();
    const long double z = rep.zeta_rho();
    // Direct part, summed from the small end. exceed = P(nu' > nu).
    long double exceed = rep.exceedance(static_cast<double>(nu_max));
    std::array<long double, 4> acc{};
    for (std::uint64_t nu = nu_max; nu >= 1; --nu) {
        const long double x = static_cast<long double>(nu);
        const long double omega = std::pow(x, -static_cast<long double>(rho)) / z;
        const long double psi = w.laplace(s * static_cast<double>(nu));
        acc[0] += psi * omega;
        acc[1] += x * psi * omega;
        acc[2] += psi * exceed;
        acc[3] += x * psi * exceed;
        exceed += omega;
    }
    // Remainder sum_{nu > nu_max} f(nu) = int_a^inf f + f(a)/2 - f'(a)/12 + ...
    const double a = static_cast<double>(nu_max) + 1.0;
    boost::math::quadrature::exp_sinh<double> integrator;
    for (int k = 0; k < 4; ++k) {
        auto f = [&](double x) { return summand(k, x, s, w, rep); };
        double quad_error = 0.0;
        const double integral =
            integrator.integrate(f, a, std::numeric_limits<double>::infinity(), 1e-14, &quad_error);
        if (!std::isfinite(integral)) {
            throw NumericError("j/J remainder integral diverged at s=" + format_double(s));
        }
        double derivative = 0.0;
        const double bound = remainder_bound(k, nu_max, s, w, rep, &derivative);
        acc[k] += integral + 0.5 * f(a) - derivative / 12.0;
        out.error[k] = bound + std::fabs(quad_error) * std::fabs(integral);
    }
    out.value = acc;
    return out;
}

SumSet adaptive_sums(double s, const WaitingTimeModel& w, const RepetitionDistribution& rep, double tolerance) {
    if (rep.kind() == RepetitionKind::unit) return evaluate_sums(s, w, rep, 1);
    static constexpr std::array<int, 4> all = {0, 1, 2, 3};
    const std::uint64_t v = sufficient_nu_max(kInitialNuMax, s, w, rep, all, tolerance);
    if (v == 0 || v > kLargestNuMax) {
        throw NumericError("j/J sums at s=" + format_double(s) + " need nu_max beyond " +
                           std::to_string(kLargestNuMax) + " for tolerance " + format_double(tolerance));
    }
    return evaluate_sums(s, w, rep, v);
}

LaplaceSum single_sum(int which, double s, const WaitingTimeModel& w, const RepetitionDistribution& rep,
                      std::uint64_t nu_max, double tolerance, const char* name) {
    if (!(s > 0.0)) throw DomainError(std::string(name) + ": s must be positive");
    if (nu_max < 1) throw DomainError(std::string(name) + ": nu_max must be >= 1");
    if (rep.kind() == RepetitionKind::zeta) {
        require_ergodic(rep, name);
        const int k[] = {which};
        const double bound = worst_bound(nu_max, s, w, rep, k);
        if (bound > tolerance) {
            const std::uint64_t suggestion = sufficient_nu_max(nu_max, s, w, rep, k, tolerance);
            throw NumericError(std::string(name) + ": remainder bound " + format_double(bound) + " exceeds tolerance " +
                               format_double(tolerance) + " at nu_max=" + std::to_string(nu_max) +
                               (suggestion ? "; use nu_max >= " + std::to_string(suggestion) : std::string()));
        }
    }
    const SumSet sums = evaluate_sums(s, w, rep, nu_max);
    return {static_cast<double>(sums.value[which]), sums.error[which], nu_max};
}

}  // namespace

// ---------------------------------------------------------------------------

double step_acf_exact(const RepetitionDistribution& rep, std::int64_t n) {
    require_ergodic(rep, "step ACF");
    return omega1_sojourn(rep, n);
}

double step_acf_asymptote(const RepetitionDistribution& rep, double n) {
    require_ergodic(rep, "step ACF asymptote");
    const double rho = rep.rho();
    return std::pow(n, -(rho - 2.0)) / (rep.zeta_rho_m1() * (rho - 2.0) * (rho - 1.0));
}

double step_acf_asymptotic_slope(const RepetitionDistribution& rep) {
    require_ergodic(rep, "step ACF slope");
    return -(rep.rho() - 2.0);
}

double time_propagator(const TimePropagatorQuery& q, double dt, double bin) {
    if (!(bin > 0.0)) throw DomainError("time_propagator: bin must be positive");
    const double stay = q.repetition.omega1(q.n);
    const double hi = dt + bin;
    double mass = 0.0;
    if (q.dt0 >= dt && q.dt0 < hi) mass += stay;
    if (stay < 1.0) mass += (1.0 - stay) * (q.waiting.cdf(hi) - q.waiting.cdf(dt));
    return mass;
}

MomentExponents asymptotic_moment_exponents(double rho, bool mu1_zero) {
    if (!(rho > 2.0)) throw DomainError("non-ergodic regime: exponents require rho > 2");
    MomentExponents e;
    e.m1_powerlaw_exp = 3.0 - rho;
    e.variance_powerlaw_exp = 4.0 - rho;
    e.acf_exp = mu1_zero ? -(rho - 1.0) : -(rho - 2.0);
    e.diffusion_exp = mu1_zero ? 1.0 : std::max(1.0, 4.0 - rho);
    return e;
}

LaplaceSum laplace_j(int order, double s, const WaitingTimeModel& waiting, const RepetitionDistribution& rep,
                     std::uint64_t nu_max, double tolerance) {
    if (order != 0 && order != 1) throw DomainError("laplace_j: order must be 0 or 1");
    return single_sum(order, s, waiting, rep, nu_max, tolerance, "laplace_j");
}

LaplaceSum laplace_big_j(int order, double s, const WaitingTimeModel& waiting, const RepetitionDistribution& rep,
                         std::uint64_t nu_max, double tolerance) {
    if (order != 0 && order != 1) throw DomainError("laplace_big_j: order must be 0 or 1");
    return single_sum(2 + order, s, waiting, rep, nu_max, tolerance, "laplace_big_j");
}

LaplaceMoment laplace_moments(std::span<const double> s_grid, const WaitingTimeModel& waiting,
                              const IncrementModel& increment, const RepetitionDistribution& rep, double tolerance,
                              std::size_t workers) {
    require_ergodic(rep, "Laplace moments");
    for (double s : s_grid) {
        if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("laplace_moments: s grid must be positive");
    }
    const std::size_t n = s_grid.size();
    LaplaceMoment lm;
    lm.s_grid.assign(s_grid.begin(), s_grid.end());
    lm.m1_tilde.resize(n);
    lm.m2_tilde.resize(n);
    lm.m1_error.resize(n);
    lm.m2_error.resize(n);
    std::vector<std::uint64_t> used(n);

    const long double mu1 = increment.mu1(), mu2 = increment.mu2();
    const double floor = 1e-12;
    parallel_for(n, workers, [&](std::size_t i) {
        const double s = s_grid[i];
        const SumSet sums = adaptive_sums(s, waiting, rep, tolerance);
        const long double j0 = sums.value[0], j1 = sums.value[1], J0 = sums.value[2], J1 = sums.value[3];
        const long double denom = 1.0L - j0;
        if (denom < floor) {
            const double usable = floor / (waiting.mean() * (rep.kind() == RepetitionKind::unit ? 1.0 : rep.mean()));
            throw NumericError("laplace_moments: 1 - j0 = " + format_double(static_cast<double>(denom)) +
                               " below 1e-12 at s=" + format_double(s) + "; usable range is s > ~" +
                               format_double(usable));
        }
        const long double ls = s;
        const long double renewal = (J0 + j0) / denom;
        lm.m1_tilde[i] = static_cast<double>(mu1 / ls * renewal);
        const long double bracket = j1 * (J0 + j0) + denom * (J1 + j1 - J0 - j0);
        lm.m2_tilde[i] = static_cast<double>(2.0L * mu1 * mu1 / ls * bracket / (denom * denom) + mu2 / ls * renewal);

        const double e_j0 = sums.error[0], e_j1 = sums.error[1], e_J0 = sums.error[2], e_J1 = sums.error[3];
        const double rel_renewal = e_j0 / static_cast<double>(denom) +
                                   (e_J0 + e_j0) / std::max(1e-300, static_cast<double>(J0 + j0));
        lm.m1_error[i] = std::fabs(lm.m1_tilde[i]) * rel_renewal;
        const double rel_bracket =
            (e_j1 + e_J1 + e_J0 + 2 * e_j0) / std::max(1e-300, std::fabs(static_cast<double>(bracket))) +
            2.0 * e_j0 / static_cast<double>(denom);
        lm.m2_error[i] = std::fabs(static_cast<double>(2.0L * mu1 * mu1 / ls * bracket / (denom * denom))) * rel_bracket +
                         std::fabs(static_cast<double>(mu2 / ls * renewal)) * rel_renewal;
        used[i] = sums.nu_max;
    });
    lm.truncation_nu_max = used.empty() ? 0 : *std::max_element(used.begin(), used.end());
    return lm;
}

// ---------------------------------------------------------------------------
// Gaver-Stehfest
// ---------------------------------------------------------------------------

std::vector<long double> stehfest_weights(int order) {
    if (order < 2 || order % 2 != 0 || order > 30) throw DomainError("Stehfest order must be even, 2..30");
    const int half = order / 2;
    std::vector<long double> fact(2 * order + 1, 1.0L);
    for (int i = 1; i <= 2 * order; ++i) fact[i] = fact[i - 1] * i;
    std::vector<long double> v(order);
    for (int k = 1; k <= order; ++k) {
        long double sum = 0.0L;
        for (int j = (k + 1) / 2; j <= std::min(k, half); ++j) {
            sum += std::pow(static_cast<long double>(j), half) * fact[2 * j] /
                   (fact[half - j] * fact[j] * fact[j - 1] * fact[k - j] * fact[2 * j - k]);
        }
        v[k - 1] = ((k + half) % 2 == 0 ? 1.0L : -1.0L) * sum;
    }
    return v;
}

double gaver_stehfest(const std::function<double(double)>& transform, double t, int order) {
    if (!(t > 0.0)) throw DomainError("gaver_stehfest: t must be positive");
    const auto v = stehfest_weights(order);
    const long double a = std::numbers::ln2_v<long double> / t;
    long double acc = 0.0L;
    for (int k = 1; k <= order; ++k) acc += v[k - 1] * transform(static_cast<double>(a * k));
    return static_cast<double>(a * acc);
}

std::vector<double> stehfest_abscissae(std::span<const double> t_grid, int order) {
    std::vector<double> s;
    for (double t : t_grid) {
        if (!(t > 0.0)) throw DomainError("stehfest_abscissae: times must be positive");
        const long double a = std::numbers::ln2_v<long double> / t;
        for (int k = 1; k <= order; ++k) s.push_back(static_cast<double>(a * k));
    }
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
}

std::vector<InvertedMoment> invert_laplace(const LaplaceMoment& lm, std::span<const double> t_grid, int order,
                                           int check_order) {
    std::map<double, std::size_t> index;
    for (std::size_t i = 0; i < lm.s_grid.size(); ++i) index.emplace(lm.s_grid[i], i);
    auto lookup = [&](double s) -> std::size_t {
        auto it = index.lower_bound(s * (1.0 - 1e-12));
        if (it == index.end() || std::fabs(it->first - s) > 1e-12 * s) {
            throw DomainError("invert_laplace: s grid lacks s=" + format_double(s) +
                              " (build it with stehfest_abscissae)");
        }
        return it->second;
    };
    auto invert = [&](double t, int n, const std::vector<double>& values) {
        const auto v = stehfest_weights(n);
        const long double a = std::numbers::ln2_v<long double> / t;
        long double acc = 0.0L;
        for (int k = 1; k <= n; ++k) acc += v[k - 1] * values[lookup(static_cast<double>(a * k))];
        return static_cast<double>(a * acc);
    };

    std::vector<InvertedMoment> out;
    out.reserve(t_grid.size());
    for (double t : t_grid) {
        if (!(t > 0.0)) throw DomainError("invert_laplace: times must be positive");
        InvertedMoment r;
        r.t = t;
        r.m1 = invert(t, order, lm.m1_tilde);
        r.m2 = invert(t, order, lm.m2_tilde);
        r.variance = r.m2 - r.m1 * r.m1;
        r.m1_sensitivity = std::fabs(r.m1 - invert(t, check_order, lm.m1_tilde));
        r.m2_sensitivity = std::fabs(r.m2 - invert(t, check_order, lm.m2_tilde));
        auto relative = [](double diff, double value) {
            return diff <= 1e-12 ? 0.0 : diff / std::max(std::fabs(value), 1e-300);
        };
        r.reliable = relative(r.m1_sensitivity, r.m1) <= 0.05 && relative(r.m2_sensitivity, r.m2) <= 0.05;
        out.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Expansion coefficients
// ---------------------------------------------------------------------------

double AppendixCoefficients::C0_of_n(int n) const {
    if (rho - n <= 1.0) return std::numeric_limits<double>::infinity();
    return riemann_zeta(rho - n) / riemann_zeta(rho);
}

std::vector<CurvePoint> renewal_excess_density(const WaitingTimeModel& waiting, std::span<const double> edges,
                                               std::size_t workers, int order, int check_order) {
    if (edges.size() < 2) throw DomainError("renewal_excess_density: need at least two bin edges");
    for (std::size_t i = 0; i < edges.size(); ++i) {
        if (!(edges[i] > 0.0) || (i > 0 && !(edges[i] > edges[i - 1]))) {
            throw DomainError("renewal_excess_density: bin edges must be positive and increasing");
        }
    }
    const double lambda = 1.0 / waiting.mean();
    const auto s_grid = stehfest_abscissae(edges, std::max(order, check_order));
    std::vector<double> k_tilde(s_grid.size());
    parallel_for(s_grid.size(), workers, [&](std::size_t i) {
        const double s = s_grid[i];
        const double c = waiting.laplace_complement(s);
        if (!(c > 0.0)) throw NumericError("renewal_excess_density: psi~(s) = 1 at s=" + format_double(s));
        k_tilde[i] = (1.0 - c) / (s * c) - lambda / (s * s);
    });
    std::map<double, double> table;
    for (std::size_t i = 0; i < s_grid.size(); ++i) table.emplace(s_grid[i], k_tilde[i]);
    auto lookup = [&](double s) {
        auto it = table.lower_bound(s * (1.0 - 1e-12));
        if (it == table.end() || std::fabs(it->first - s) > 1e-12 * s) {
            throw NumericError("renewal_excess_density: missing abscissa s=" + format_double(s));
        }
        return it->second;
    };
    auto k_of = [&](double t, int n) {
        const auto v = stehfest_weights(n);
        const long double a = std::numbers::ln2_v<long double> / t;
        long double acc = 0.0L;
        for (int k = 1; k <= n; ++k) acc += v[k - 1] * lookup(static_cast<double>(a * k));
        return static_cast<double>(a * acc);
    };
    std::vector<double> k_main(edges.size()), k_check(edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i) {
        k_main[i] = k_of(edges[i], order);
        k_check[i] = k_of(edges[i], check_order);
    }
    std::vector<CurvePoint> out(edges.size() - 1);
    for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
        const double width = edges[b + 1] - edges[b];
        out[b].x = std::sqrt(edges[b] * edges[b + 1]);
        out[b].value = (k_main[b + 1] - k_main[b]) / width;
        out[b].error = (std::fabs(k_main[b + 1] - k_check[b + 1]) + std::fabs(k_main[b] - k_check[b])) / width;
    }
    return out;
}

std::vector<CurvePoint> renewal_time_acf(const WaitingTimeModel& waiting, std::span<const double> edges,
                                         double mark_mean, double mark_variance, std::size_t workers, int order,
                                         int check_order) {
    if (!(mark_variance > 0.0)) throw DomainError("renewal_time_acf: mark variance must be positive");
    auto out = renewal_excess_density(waiting, edges, workers, order, check_order);
    const double scale = mark_mean * mark_mean * waiting.mean() / mark_variance;
    for (auto& p : out) {
        p.value *= scale;
        p.error *= scale;
    }
    return out;
}

AppendixCoefficients appendix_coefficients(const RepetitionDistribution& rep, const WaitingTimeModel& waiting) {
    if (rep.kind() != RepetitionKind::zeta) throw DomainError("appendix coefficients need the zeta repetition law");
    require_ergodic(rep, "expansion coefficients");
    AppendixCoefficients c;
    c.rho = rep.rho();
    c.mean_dt = waiting.mean();
    const double z = rep.zeta_rho();
    c.D0_0 = rep.zeta_rho_m1() / z - 1.0;
    c.D1_0 = c.rho > 3.0 ? (riemann_zeta(c.rho - 2.0) - rep.zeta_rho_m1()) / (2.0 * z)
                         : std::numeric_limits<double>::infinity();
    c.ratio_C10_over_C01 = -1.0 / c.mean_dt;
    return c;
}

MeasuredCoefficients measure_appendix_coefficients(const RepetitionDistribution& rep, const WaitingTimeModel& waiting,
                                                   double s_small) {
    require_ergodic(rep, "expansion coefficients");
    if (!(s_small > 0.0)) throw DomainError("measure_appendix_coefficients: s must be positive");
    const double tol = 1e-13;
    MeasuredCoefficients m;
    const SumSet at_zero = adaptive_sums(s_small * 1e-3, waiting, rep, tol);
    const SumSet at_s = adaptive_sums(s_small, waiting, rep, tol);
    const SumSet at_2s = adaptive_sums(2.0 * s_small, waiting, rep, tol);
    m.C0_0 = static_cast<double>(at_zero.value[0]);
    m.C1_0 = static_cast<double>(at_zero.value[1]);
    m.D0_0 = static_cast<double>(at_zero.value[2]);
    // Richardson-extrapolated forward difference of j0 at s -> 0.
    const long double d1 = (at_s.value[0] - at_zero.value[0]) / (s_small * (1.0L - 1e-3L));
    const long double d2 = (at_2s.value[0] - at_zero.value[0]) / (s_small * (2.0L - 1e-3L));
    m.C0_1 = static_cast<double>(2.0L * d1 - d2);
    m.ratio_C10_over_C01 = m.C1_0 / m.C0_1;
    return m;
}

AnomalousAmplitude fit_anomalous_amplitude(std::span<const InvertedMoment> rows, double rho, double mu1,
                                           double mean_dt) {
    if (rows.size() < 2) throw DomainError("fit_anomalous_amplitude: need at least two points");
    // normal equations for r = A u + B, u = t^{3-rho}
    long double su = 0, suu = 0, sr = 0, sur = 0;
    const long double n = static_cast<long double>(rows.size());
    for (const auto& row : rows) {
        const long double u = std::pow(row.t, 3.0 - rho);
        const long double r = row.m1 - mu1 / mean_dt * row.t;
        su += u;
        suu += u * u;
        sr += r;
        sur += u * r;
    }
    const long double det = n * suu - su * su;
    if (std::fabs(det) < 1e-300L) throw NumericError("fit_anomalous_amplitude: degenerate design");
    AnomalousAmplitude a;
    a.amplitude = static_cast<double>((n * sur - su * sr) / det);
    a.offset = static_cast<double>((sr - static_cast<long double>(a.amplitude) * su) / n);
    return a;
}

void write_curve_csv(std::ostream& out, const std::string& x_name, std::span<const CurvePoint> points,
                     std::span<const std::pair<std::string, std::string>> metadata) {
    std::string buf;
    for (const auto& [k, v] : metadata) buf += "# " + k + "=" + v + "\n";
    buf += x_name + ",value,error_estimate\n";
    for (const CurvePoint& p : points) {
        append_double(buf, p.x);
        buf += ',';
        append_double(buf, p.value);
        buf += ',';
        append_double(buf, p.error);
        buf += '\n';
    }
    out << buf;
}

}  // namespace ctrw
