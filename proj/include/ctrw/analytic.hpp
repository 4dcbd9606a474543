#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ctrw/dist.hpp"

namespace ctrw {

struct CurvePoint {
    double x = 0.0;
    double value = 0.0;
    double error = 0.0;
};

// ---------------------------------------------------------------------------
// Waiting-time process
// ---------------------------------------------------------------------------

// Normalized step ACF of waiting times, corr(n) = Omega_1(n). Exact.
double step_acf_exact(const RepetitionDistribution& rep, std::int64_t n);

// Large-n form n^{-(rho-2)} / (zeta(rho-1) (rho-2) (rho-1)).
double step_acf_asymptote(const RepetitionDistribution& rep, double n);

// -(rho - 2).
double step_acf_asymptotic_slope(const RepetitionDistribution& rep);

struct TimePropagatorQuery {
    double dt0 = 1.0;
    std::uint64_t n = 0;
    WaitingTimeModel waiting = WaitingTimeModel::exponential(1.0);
    RepetitionDistribution repetition = RepetitionDistribution::unit();
};

// Probability that the waiting time n steps after one equal to dt0 lies in
// [dt, dt + bin): the atom Omega_1(n) at dt0 plus the psi mass of the bin
// weighted by 1 - Omega_1(n).
double time_propagator(const TimePropagatorQuery& q, double dt, double bin);

struct MomentExponents {
    double m1_powerlaw_exp = 0.0;        // 3 - rho
    double variance_powerlaw_exp = 0.0;  // 4 - rho
    double acf_exp = 0.0;                // -(rho-2), or -(rho-1) when mu1 == 0
    // Exponent of the dominant variance growth: max(1, 4 - rho) with drift,
    // 1 without.
    double diffusion_exp = 1.0;
};

MomentExponents asymptotic_moment_exponents(double rho, bool mu1_zero);

// ---------------------------------------------------------------------------
// Laplace-domain moments
// ---------------------------------------------------------------------------

struct LaplaceSum {
    double value = 0.0;
    double error_bound = 0.0;
    std::uint64_t nu_max = 0;
};

// j(n; s) = sum_nu nu^n psi~(s nu) omega(nu), n in {0, 1}. Direct sum up to
// nu_max plus an Euler-Maclaurin estimate of the remainder. Throws
// NumericError naming a sufficient nu_max when the remainder bound exceeds
// `tolerance`.
LaplaceSum laplace_j(int order, double s, const WaitingTimeModel& waiting, const RepetitionDistribution& rep,
                     std::uint64_t nu_max, double tolerance = 1e-12);

// J(n; s) = sum_nu nu^n psi~(s nu) P(nu' > nu). Same contract as laplace_j.
LaplaceSum laplace_big_j(int order, double s, const WaitingTimeModel& waiting, const RepetitionDistribution& rep,
                         std::uint64_t nu_max, double tolerance = 1e-12);

enum class TailCorrection { none, power_law };

struct LaplaceMoment {
    std::vector<double> s_grid;
    std::vector<double> m1_tilde;
    std::vector<double> m2_tilde;
    std::vector<double> m1_error;  // propagated truncation error
    std::vector<double> m2_error;
    std::uint64_t truncation_nu_max = 0;  // largest nu_max used on the grid
    TailCorrection tail_correction = TailCorrection::power_law;
};

// Transforms m~1(s), m~2(s) of the first two moments for a process that
// starts with a fresh repetition block at t = 0.
LaplaceMoment laplace_moments(std::span<const double> s_grid, const WaitingTimeModel& waiting,
                              const IncrementModel& increment, const RepetitionDistribution& rep,
                              double tolerance = 1e-13, std::size_t workers = 1);

// Gaver-Stehfest weights V_1..V_order (order even).
std::vector<long double> stehfest_weights(int order);

// f(t) from F(s) on the real axis.
double gaver_stehfest(const std::function<double(double)>& transform, double t, int order = 12);

// Every s = k ln2 / t (k = 1..order) needed to invert at the given times.
std::vector<double> stehfest_abscissae(std::span<const double> t_grid, int order = 12);

struct InvertedMoment {
    double t = 0.0;
    double m1 = 0.0;
    double m2 = 0.0;
    double variance = 0.0;
    // |order - check_order| differences
    double m1_sensitivity = 0.0;
    double m2_sensitivity = 0.0;
    bool reliable = true;  // both relative sensitivities <= 5%
};

// Inverts a LaplaceMoment whose s grid contains stehfest_abscissae(t_grid, order).
std::vector<InvertedMoment> invert_laplace(const LaplaceMoment& lm, std::span<const double> t_grid, int order = 12,
                                           int check_order = 10);

// Mean of h(tau) - lambda over each bin [edges[b], edges[b+1]), with h the
// renewal density of a process with waiting times ~ waiting. Inverted from
// K~(s) = psi~ / (s (1 - psi~)) - lambda / s^2, K(t) = M(t) - lambda t; the
// error column is the difference between the two Stehfest orders. Zero for
// exponential waiting times.
std::vector<CurvePoint> renewal_excess_density(const WaitingTimeModel& waiting, std::span<const double> edges,
                                               std::size_t workers = 1, int order = 12, int check_order = 10);

// Normalized time ACF of marks independent of such a renewal process:
// (E a)^2 / (lambda Var a) times the excess density.
std::vector<CurvePoint> renewal_time_acf(const WaitingTimeModel& waiting, std::span<const double> edges,
                                         double mark_mean, double mark_variance, std::size_t workers = 1,
                                         int order = 12, int check_order = 10);

// ---------------------------------------------------------------------------
// Small-s expansion coefficients
// ---------------------------------------------------------------------------

struct AppendixCoefficients {
    double rho = 0.0;
    double mean_dt = 1.0;
    double D0_0 = 0.0;                // zeta(rho-1)/zeta(rho) - 1
    double D1_0 = 0.0;                // (zeta(rho-2) - zeta(rho-1)) / (2 zeta(rho)); +inf for rho <= 3
    double ratio_C10_over_C01 = 0.0;  // -1 / <dt>

    // C_n^0 = zeta(rho - n)/zeta(rho); +inf when rho - n <= 1.
    double C0_of_n(int n) const;
};

AppendixCoefficients appendix_coefficients(const RepetitionDistribution& rep, const WaitingTimeModel& waiting);

// Same coefficients measured from the j/J sums at small s.
struct MeasuredCoefficients {
    double C0_0 = 0.0;
    double C0_1 = 0.0;
    double C1_0 = 0.0;
    double ratio_C10_over_C01 = 0.0;
    double D0_0 = 0.0;
};

MeasuredCoefficients measure_appendix_coefficients(const RepetitionDistribution& rep, const WaitingTimeModel& waiting,
                                                   double s_small = 1e-7);

// Least-squares fit of m1(t) - (mu1/<dt>) t = A t^{3-rho} + B.
struct AnomalousAmplitude {
    double amplitude = 0.0;
    double offset = 0.0;
};

AnomalousAmplitude fit_anomalous_amplitude(std::span<const InvertedMoment> rows, double rho, double mu1,
                                           double mean_dt);

// Prediction curve CSV: "# key=value" metadata lines, then
// "<x_name>,value,error_estimate" rows.
void write_curve_csv(std::ostream& out, const std::string& x_name, std::span<const CurvePoint> points,
                     std::span<const std::pair<std::string, std::string>> metadata = {});

}  // namespace ctrw
