#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctrw/sim.hpp"

namespace ctrw {

enum class AcfKind { step, time };

struct AcfCurve {
    AcfKind kind = AcfKind::step;
    std::vector<double> lags;          // event lags, or bin-centre seconds
    std::vector<double> values;        // NaN where missing
    std::vector<double> std_errors;    // jackknife over resampling groups
    std::vector<std::uint64_t> pair_counts;
    bool normalized = true;

    std::size_t size() const noexcept { return lags.size(); }
    bool missing(std::size_t i) const { return pair_counts[i] == 0 || !std::isfinite(values[i]); }
};

enum class FitMethod { ols_loglog, bootstrap };

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;  // of log10 value vs log10 lag
    double std_error_ols = 0.0;
    double std_error = 0.0;  // OLS, or bootstrap sd for FitMethod::bootstrap
    double lag_min = 0.0;
    double lag_max = 0.0;
    double r_squared = 0.0;
    std::size_t usable_points = 0;
    std::size_t skipped_missing = 0;
    FitMethod method = FitMethod::ols_loglog;
    std::size_t replicates = 0;
};

// Contiguous slice of a session used as the unit of jackknife and
// bootstrap resampling. Sessions are used directly when there are at least
// `min_groups` of them; otherwise sessions are cut into equal-count chunks.
struct ResamplingGroup {
    std::size_t session = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
};

std::vector<ResamplingGroup> resampling_groups(std::span<const Session> sessions, std::size_t min_groups = 16);

// ---------------------------------------------------------------------------
// Step ACF
// ---------------------------------------------------------------------------

// Per-group sums for the sample autocovariance at a set of lags. Pairs never
// straddle sessions; a pair belongs to the group of its earlier element.
class StepAcfPartials {
public:
    std::vector<std::uint64_t> lags;
    std::vector<ResamplingGroup> groups;

    std::size_t group_count() const noexcept { return groups.size(); }
    // Curve for group multiplicities `weights` (one per group).
    AcfCurve finalize(std::span<const double> weights) const;
    // All weights one, with jackknife standard errors.
    AcfCurve finalize() const;

    // Adds the groups of a batch computed over other sessions with the same
    // lags. Sums are re-centred on this object's mean; group session indices
    // are shifted past the existing ones.
    void append(const StepAcfPartials& other);

private:
    friend StepAcfPartials step_acf_partials(std::span<const double>, std::span<const Session>,
                                             std::span<const std::uint64_t>, std::size_t, std::size_t);
    struct GroupSums {
        double n = 0, s1 = 0, s2 = 0;
    };
    struct LagSums {
        double pairs = 0, cross = 0, head = 0, tail = 0;
    };
    struct Totals {
        GroupSums g;
        std::vector<LagSums> lag;
    };
    Totals totals(std::span<const double> weights) const;
    AcfCurve from_totals(const Totals& t) const;
    // Curve values with each group left out in turn.
    std::vector<std::vector<double>> leave_one_out() const;

    double centre_ = 0.0;
    std::vector<GroupSums> group_sums_;
    std::vector<LagSums> lag_sums_;  // group-major
};

StepAcfPartials step_acf_partials(std::span<const double> series, std::span<const Session> sessions,
                                  std::span<const std::uint64_t> lags, std::size_t min_groups = 16,
                                  std::size_t workers = 1);

// Lags 0..max_lag.
std::vector<std::uint64_t> all_lags(std::uint64_t max_lag);

// Every lag up to `dense_until`, then `per_decade` log-spaced lags up to
// max_lag (always included).
std::vector<std::uint64_t> mixed_lags(std::uint64_t max_lag, std::uint64_t dense_until = 1000, int per_decade = 24);

// Normalized step ACF at lags 0..max_lag. Empty `sessions` means one
// session covering the whole series. Throws DomainError for series not
// longer than max_lag + 10 and for zero variance.
AcfCurve step_acf(std::span<const double> series, std::uint64_t max_lag, std::span<const Session> sessions = {},
                  std::size_t workers = 1);

// ---------------------------------------------------------------------------
// Time ACF of event marks
// ---------------------------------------------------------------------------

enum class MarkTransform { absolute, signed_value };

// Per-group sums of the binned pair-product estimator. For every ordered
// pair i < j in one session with tau = t_j - t_i in a bin, a_i a_j is
// accumulated; the bin estimate is the pair-product density per unit time
// and lag (edge-corrected exposure) minus the squared mark intensity,
// divided by (event rate)^2 * Var(a).
class TimeAcfPartials {
public:
    std::vector<double> edges;
    std::vector<ResamplingGroup> groups;

    std::size_t group_count() const noexcept { return groups.size(); }
    AcfCurve finalize(std::span<const double> weights) const;
    AcfCurve finalize() const;

    // Adds the groups of a batch computed over other sessions with the same
    // bin edges.
    void append(const TimeAcfPartials& other);

private:
    friend TimeAcfPartials time_acf_partials(const EventSeries&, std::span<const double>, MarkTransform, std::size_t,
                                             std::size_t);
    struct GroupSums {
        double n = 0, duration = 0, s1 = 0, s2 = 0;
    };
    struct BinSums {
        double product = 0, pairs = 0, exposure = 0;
    };
    struct Totals {
        GroupSums g;
        std::vector<BinSums> bin;
    };
    Totals totals(std::span<const double> weights) const;
    AcfCurve from_totals(const Totals& t) const;
    std::vector<std::vector<double>> leave_one_out() const;

    std::vector<GroupSums> group_sums_;
    std::vector<BinSums> bin_sums_;  // group-major
};

TimeAcfPartials time_acf_partials(const EventSeries& series, std::span<const double> bin_edges,
                                  MarkTransform transform = MarkTransform::absolute, std::size_t min_groups = 16,
                                  std::size_t workers = 1);

// Normalized time ACF of |dx|. Bins without pairs are reported missing.
AcfCurve time_acf_abs(const EventSeries& series, std::span<const double> bin_edges, std::size_t workers = 1);

// Same estimator on signed increments.
AcfCurve time_acf_signed(const EventSeries& series, std::span<const double> bin_edges, std::size_t workers = 1);

// Logarithmic bin edges, `per_decade` bins per decade from lo to hi.
std::vector<double> log_bin_edges(double lo, double hi, int per_decade = 12);

// ---------------------------------------------------------------------------
// Slope fitting
// ---------------------------------------------------------------------------

// OLS of log10(value) on log10(lag) over lags in [lag_min, lag_max].
// Missing points are skipped; needs >= 5 usable points, all positive.
SlopeFit fit_slope(const AcfCurve& curve, double lag_min, double lag_max);

// Point estimate from the full curve; std_error is the standard deviation of
// slopes over `replicates` group-level bootstrap resamples.
SlopeFit fit_slope_bootstrap(const StepAcfPartials& partials, double lag_min, double lag_max,
                             std::size_t replicates = 200, std::uint64_t seed = 0);
SlopeFit fit_slope_bootstrap(const TimeAcfPartials& partials, double lag_min, double lag_max,
                             std::size_t replicates = 200, std::uint64_t seed = 0);

// Longest prefix of [lag_min, lag_max] whose points stay above
// `sigmas` standard errors (the noise floor). Missing points end the range.
struct ResolvableRange {
    double lag_min = 0.0;
    double lag_max = 0.0;
    std::size_t points = 0;
    double noise_floor = 0.0;  // sigmas * stderr at the first unresolved point (0 if none)
};

std::optional<ResolvableRange> resolvable_range(const AcfCurve& curve, double lag_min, double lag_max,
                                                double sigmas = 3.0);

std::string to_string(AcfKind kind);
std::string to_string(FitMethod method);

// {kind, lags, values, std_errors, counts, slope, std_error, range, ...}
nlohmann::json acf_report(const AcfCurve& curve, const SlopeFit* fit);

// "lag,value,std_error,pair_count" rows; missing values written as "nan".
void write_acf_csv(const AcfCurve& curve, std::ostream& out);

}  // namespace ctrw
