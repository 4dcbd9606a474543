#include "ctrw/estim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "ctrw/error.hpp"
#include "ctrw/format.hpp"
#include "ctrw/parallel.hpp"
#include "ctrw/random.hpp"

namespace ctrw {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<Session> whole_series(std::size_t n) { return {Session{0, n, 0.0, 0.0}}; }

void check_weights(std::span<const double> weights, std::size_t groups) {
    if (weights.size() != groups) throw DomainError("weight count does not match group count");
}

// Delete-one jackknife standard error of every curve value from the
// leave-one-out curves.
std::vector<double> jackknife(const std::vector<std::vector<double>>& leave, const AcfCurve& full) {
    const std::size_t g = leave.size();
    std::vector<double> se(full.size(), kNaN);
    if (g < 2) return se;
    for (std::size_t i = 0; i < full.size(); ++i) {
        double mean = 0.0;
        std::size_t m = 0;
        for (std::size_t k = 0; k < g; ++k) {
            if (std::isfinite(leave[k][i])) {
                mean += leave[k][i];
                ++m;
            }
        }
        if (m < 2) continue;
        mean /= static_cast<double>(m);
        double ss = 0.0;
        for (std::size_t k = 0; k < g; ++k) {
            if (std::isfinite(leave[k][i])) ss += (leave[k][i] - mean) * (leave[k][i] - mean);
        }
        se[i] = std::sqrt(ss * static_cast<double>(m - 1) / static_cast<double>(m));
    }
    return se;
}

template <class Partials>
SlopeFit bootstrap_slope(const Partials& p, double lag_min, double lag_max, std::size_t replicates,
                         std::uint64_t seed) {
    SlopeFit fit = fit_slope(p.finalize(), lag_min, lag_max);
    const std::size_t g = p.group_count();
    if (g < 2) throw DomainError("bootstrap needs at least two resampling groups");
    if (replicates < 2) throw DomainError("bootstrap needs at least two replicates");
    Rng rng = make_stream(seed, 0, 0xb007);
    std::uniform_int_distribution<std::size_t> pick(0, g - 1);
    std::vector<double> w(g);
    std::vector<double> slopes;
    slopes.reserve(replicates);
    for (std::size_t r = 0; r < replicates; ++r) {
        std::fill(w.begin(), w.end(), 0.0);
        for (std::size_t k = 0; k < g; ++k) w[pick(rng)] += 1.0;
        try {
            slopes.push_back(fit_slope(p.finalize(w), lag_min, lag_max).slope);
        } catch (const DomainError&) {
        }
    }
    if (slopes.size() * 2 < replicates) {
        throw NumericError("bootstrap: fewer than half of the replicates gave a usable fit in [" +
                           format_double(lag_min) + ", " + format_double(lag_max) + "]");
    }
    const double mean = std::accumulate(slopes.begin(), slopes.end(), 0.0) / static_cast<double>(slopes.size());
    double ss = 0.0;
    for (double s : slopes) ss += (s - mean) * (s - mean);
    fit.std_error = std::sqrt(ss / static_cast<double>(slopes.size() - 1));
    fit.method = FitMethod::bootstrap;
    fit.replicates = slopes.size();
    return fit;
}

// Integral over tau in [lo, hi) of max(0, min(d, r - tau)), r >= d >= 0:
// the measure of start points t in a window of length d such that t + tau
// stays before a horizon r past the window start.
double exposure(double lo, double hi, double d, double r) {
    auto primitive = [d, r](double tau) {
        // F(tau) = integral_0^tau f
        const double knee = r - d;
        if (tau <= knee) return d * tau;
        const double head = d * knee;
        if (tau >= r) return head + 0.5 * d * d;
        const double u = tau - knee;
        return head + d * u - 0.5 * u * u;
    };
    return primitive(hi) - primitive(lo);
}

}  // namespace

std::vector<ResamplingGroup> resampling_groups(std::span<const Session> sessions, std::size_t min_groups) {
    std::vector<ResamplingGroup> groups;
    std::size_t nonempty = 0;
    std::size_t total = 0;
    for (const auto& s : sessions) {
        if (s.size() > 0) ++nonempty;
        total += s.size();
    }
    if (nonempty >= min_groups || total == 0) {
        for (std::size_t k = 0; k < sessions.size(); ++k) {
            if (sessions[k].size() > 0) groups.push_back({k, sessions[k].begin, sessions[k].end});
        }
        return groups;
    }
    for (std::size_t k = 0; k < sessions.size(); ++k) {
        const auto& s = sessions[k];
        if (s.size() == 0) continue;
        const double share = static_cast<double>(min_groups) * static_cast<double>(s.size()) / static_cast<double>(total);
        const std::size_t chunks = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(share)), 1, s.size());
        for (std::size_t c = 0; c < chunks; ++c) {
            const std::size_t b = s.begin + s.size() * c / chunks;
            const std::size_t e = s.begin + s.size() * (c + 1) / chunks;
            groups.push_back({k, b, e});
        }
    }
    return groups;
}

std::vector<std::uint64_t> all_lags(std::uint64_t max_lag) {
    std::vector<std::uint64_t> lags(max_lag + 1);
    std::iota(lags.begin(), lags.end(), std::uint64_t{0});
    return lags;
}

std::vector<std::uint64_t> mixed_lags(std::uint64_t max_lag, std::uint64_t dense_until, int per_decade) {
    if (per_decade < 1) throw DomainError("per_decade must be >= 1");
    auto lags = all_lags(std::min(max_lag, dense_until));
    if (max_lag <= dense_until) return lags;
    const double lo = std::log10(static_cast<double>(std::max<std::uint64_t>(dense_until, 1)));
    const double hi = std::log10(static_cast<double>(max_lag));
    for (int k = 1;; ++k) {
        const double e = lo + static_cast<double>(k) / per_decade;
        if (e >= hi) break;
        const auto lag = static_cast<std::uint64_t>(std::llround(std::pow(10.0, e)));
        if (lag > lags.back()) lags.push_back(lag);
    }
    if (lags.back() != max_lag) lags.push_back(max_lag);
    return lags;
}

// ---------------------------------------------------------------------------
// Step ACF
// ---------------------------------------------------------------------------

StepAcfPartials step_acf_partials(std::span<const double> series, std::span<const Session> sessions,
                                  std::span<const std::uint64_t> lags, std::size_t min_groups, std::size_t workers) {
    std::vector<Session> own;
    if (sessions.empty()) {
        own = whole_series(series.size());
        sessions = own;
    }
    for (const auto& s : sessions) {
        if (s.begin > s.end || s.end > series.size()) throw DomainError("session range outside the series");
    }
    for (double x : series) {
        if (!std::isfinite(x)) throw DomainError("series contains non-finite values");
    }
    if (lags.empty()) throw DomainError("no lags requested");

    StepAcfPartials p;
    p.lags.assign(lags.begin(), lags.end());
    p.groups = resampling_groups(sessions, min_groups);
    const std::size_t g = p.groups.size();
    const std::size_t nl = p.lags.size();
    if (g == 0) throw DomainError("empty series");

    long double total = 0.0L;
    std::size_t count = 0;
    for (const auto& grp : p.groups) {
        for (std::size_t i = grp.begin; i < grp.end; ++i) total += series[i];
        count += grp.end - grp.begin;
    }
    p.centre_ = static_cast<double>(total / static_cast<long double>(count));

    std::vector<double> y(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) y[i] = series[i] - p.centre_;
    std::vector<long double> prefix(series.size() + 1, 0.0L);
    for (std::size_t i = 0; i < series.size(); ++i) prefix[i + 1] = prefix[i] + y[i];

    p.group_sums_.assign(g, {});
    p.lag_sums_.assign(g * nl, {});
    constexpr std::size_t kBlock = 2048;

    parallel_for(g, workers, [&](std::size_t k) {
        const ResamplingGroup& grp = p.groups[k];
        const std::size_t end = sessions[grp.session].end;
        auto& gs = p.group_sums_[k];
        long double s2 = 0.0L;
        for (std::size_t i = grp.begin; i < grp.end; ++i) s2 += static_cast<long double>(y[i]) * y[i];
        gs.n = static_cast<double>(grp.end - grp.begin);
        gs.s1 = static_cast<double>(prefix[grp.end] - prefix[grp.begin]);
        gs.s2 = static_cast<double>(s2);

        StepAcfPartials::LagSums* out = &p.lag_sums_[k * nl];
        std::vector<long double> cross(nl, 0.0L);
        // Tiled so the lag window stays in cache across lags.
        for (std::size_t b0 = grp.begin; b0 < grp.end; b0 += kBlock) {
            const std::size_t b1 = std::min(grp.end, b0 + kBlock);
            for (std::size_t l = 0; l < nl; ++l) {
                const std::uint64_t n = p.lags[l];
                if (n >= end) continue;
                const std::size_t hi = std::min<std::size_t>(b1, end - n);
                if (hi <= b0) continue;
                const double* a = y.data() + b0;
                const double* c = y.data() + b0 + n;
                const std::size_t len = hi - b0;
                double acc0 = 0, acc1 = 0, acc2 = 0, acc3 = 0, acc4 = 0, acc5 = 0, acc6 = 0, acc7 = 0;
                std::size_t i = 0;
                for (; i + 8 <= len; i += 8) {
                    acc0 += a[i] * c[i];
                    acc1 += a[i + 1] * c[i + 1];
                    acc2 += a[i + 2] * c[i + 2];
                    acc3 += a[i + 3] * c[i + 3];
                    acc4 += a[i + 4] * c[i + 4];
                    acc5 += a[i + 5] * c[i + 5];
                    acc6 += a[i + 6] * c[i + 6];
                    acc7 += a[i + 7] * c[i + 7];
                }
                for (; i < len; ++i) acc0 += a[i] * c[i];
                cross[l] += ((acc0 + acc1) + (acc2 + acc3)) + ((acc4 + acc5) + (acc6 + acc7));
            }
        }
        for (std::size_t l = 0; l < nl; ++l) {
            const std::uint64_t n = p.lags[l];
            if (n >= end) continue;
            const std::size_t hi = std::min<std::size_t>(grp.end, end - n);
            if (hi <= grp.begin) continue;
            out[l].pairs = static_cast<double>(hi - grp.begin);
            out[l].cross = static_cast<double>(cross[l]);
            out[l].head = static_cast<double>(prefix[hi] - prefix[grp.begin]);
            out[l].tail = static_cast<double>(prefix[hi + n] - prefix[grp.begin + n]);
        }
    });
    return p;
}

StepAcfPartials::Totals StepAcfPartials::totals(std::span<const double> weights) const {
    check_weights(weights, groups.size());
    const std::size_t nl = lags.size();
    Totals t;
    t.lag.assign(nl, {});
    for (std::size_t k = 0; k < groups.size(); ++k) {
        const double w = weights[k];
        if (w == 0.0) continue;
        t.g.n += w * group_sums_[k].n;
        t.g.s1 += w * group_sums_[k].s1;
        t.g.s2 += w * group_sums_[k].s2;
        const LagSums* src = &lag_sums_[k * nl];
        for (std::size_t l = 0; l < nl; ++l) {
            t.lag[l].pairs += w * src[l].pairs;
            t.lag[l].cross += w * src[l].cross;
            t.lag[l].head += w * src[l].head;
            t.lag[l].tail += w * src[l].tail;
        }
    }
    return t;
}

AcfCurve StepAcfPartials::from_totals(const Totals& t) const {
    AcfCurve c;
    c.kind = AcfKind::step;
    const std::size_t nl = lags.size();
    c.lags.resize(nl);
    c.values.assign(nl, kNaN);
    c.std_errors.assign(nl, kNaN);
    c.pair_counts.assign(nl, 0);
    if (t.g.n <= 0) return c;
    const double d = t.g.s1 / t.g.n;
    const double c0 = t.g.s2 / t.g.n - d * d;
    const double scale = std::max(t.g.s2 / t.g.n + d * d, centre_ * centre_);
    if (!(c0 > 1e-14 * scale)) throw DomainError("series has zero variance");
    for (std::size_t l = 0; l < nl; ++l) {
        c.lags[l] = static_cast<double>(lags[l]);
        const LagSums& s = t.lag[l];
        c.pair_counts[l] = static_cast<std::uint64_t>(std::llround(s.pairs));
        if (s.pairs <= 0) continue;
        if (lags[l] == 0) {
            c.values[l] = 1.0;
            continue;
        }
        const double cov = (s.cross - d * (s.head + s.tail) + d * d * s.pairs) / s.pairs;
        c.values[l] = cov / c0;
    }
    return c;
}

AcfCurve StepAcfPartials::finalize(std::span<const double> weights) const { return from_totals(totals(weights)); }

std::vector<std::vector<double>> StepAcfPartials::leave_one_out() const {
    const std::size_t g = groups.size(), nl = lags.size();
    std::vector<std::vector<double>> out(g);
    if (g < 2) return out;
    const Totals full = totals(std::vector<double>(g, 1.0));
    Totals t = full;
    for (std::size_t k = 0; k < g; ++k) {
        t.g.n = full.g.n - group_sums_[k].n;
        t.g.s1 = full.g.s1 - group_sums_[k].s1;
        t.g.s2 = full.g.s2 - group_sums_[k].s2;
        const LagSums* src = &lag_sums_[k * nl];
        for (std::size_t l = 0; l < nl; ++l) {
            t.lag[l].pairs = full.lag[l].pairs - src[l].pairs;
            t.lag[l].cross = full.lag[l].cross - src[l].cross;
            t.lag[l].head = full.lag[l].head - src[l].head;
            t.lag[l].tail = full.lag[l].tail - src[l].tail;
        }
        out[k] = from_totals(t).values;
    }
    return out;
}

AcfCurve StepAcfPartials::finalize() const {
    const std::vector<double> ones(groups.size(), 1.0);
    AcfCurve c = finalize(ones);
    c.std_errors = jackknife(leave_one_out(), c);
    for (std::size_t l = 0; l < c.size(); ++l) {
        if (lags[l] == 0) c.std_errors[l] = 0.0;
        // Bartlett fallback for a single resampling group.
        if (!std::isfinite(c.std_errors[l]) && c.pair_counts[l] > 0 && lags[l] != 0) {
            c.std_errors[l] = 1.0 / std::sqrt(static_cast<double>(c.pair_counts[l]));
        }
    }
    return c;
}

void StepAcfPartials::append(const StepAcfPartials& other) {
    if (other.groups.empty()) return;
    if (groups.empty()) {
        *this = other;
        return;
    }
    if (other.lags != lags) throw DomainError("cannot merge step ACF partials with different lags");
    const std::size_t shift = groups.back().session + 1;
    const double delta = other.centre_ - centre_;
    const std::size_t nl = lags.size();
    for (std::size_t k = 0; k < other.groups.size(); ++k) {
        ResamplingGroup grp = other.groups[k];
        grp.session += shift;
        groups.push_back(grp);
        GroupSums gs = other.group_sums_[k];
        gs.s2 += 2.0 * delta * gs.s1 + delta * delta * gs.n;
        gs.s1 += delta * gs.n;
        group_sums_.push_back(gs);
        for (std::size_t l = 0; l < nl; ++l) {
            LagSums ls = other.lag_sums_[k * nl + l];
            ls.cross += delta * (ls.head + ls.tail) + delta * delta * ls.pairs;
            ls.head += delta * ls.pairs;
            ls.tail += delta * ls.pairs;
            lag_sums_.push_back(ls);
        }
    }
}

AcfCurve step_acf(std::span<const double> series, std::uint64_t max_lag, std::span<const Session> sessions,
                  std::size_t workers) {
    if (series.size() <= max_lag + 10) {
        throw DomainError("series of length " + std::to_string(series.size()) + " is too short for max_lag " +
                          std::to_string(max_lag) + " (need more than max_lag + 10 points)");
    }
    const auto lags = all_lags(max_lag);
    return step_acf_partials(series, sessions, lags, 16, workers).finalize();
}

// ---------------------------------------------------------------------------
// Time ACF
// ---------------------------------------------------------------------------

std::vector<double> log_bin_edges(double lo, double hi, int per_decade) {
    if (!(lo > 0) || !(hi > lo) || per_decade < 1) throw DomainError("log bins need 0 < lo < hi and per_decade >= 1");
    const double decades = std::log10(hi / lo);
    const auto n = static_cast<std::size_t>(std::ceil(decades * per_decade - 1e-9));
    std::vector<double> edges(n + 1);
    for (std::size_t i = 0; i <= n; ++i) edges[i] = lo * std::pow(10.0, static_cast<double>(i) / per_decade);
    return edges;
}

TimeAcfPartials time_acf_partials(const EventSeries& series, std::span<const double> bin_edges,
                                  MarkTransform transform, std::size_t min_groups, std::size_t workers) {
    series.validate();
    if (bin_edges.size() < 2) throw DomainError("need at least one time bin");
    if (!(bin_edges[0] > 0)) throw DomainError("first time-bin edge must be positive");
    for (std::size_t i = 1; i < bin_edges.size(); ++i) {
        if (!(bin_edges[i] > bin_edges[i - 1])) throw DomainError("time-bin edges must increase");
    }
    std::vector<Session> own;
    std::span<const Session> sessions = series.sessions;
    if (sessions.empty()) {
        own = whole_series(series.size());
        sessions = own;
    }

    TimeAcfPartials p;
    p.edges.assign(bin_edges.begin(), bin_edges.end());
    p.groups = resampling_groups(sessions, min_groups);
    const std::size_t g = p.groups.size();
    const std::size_t nb = p.edges.size() - 1;
    if (g == 0) throw DomainError("empty series");

    const auto& t = series.times;
    std::vector<double> a(series.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = transform == MarkTransform::absolute ? std::abs(series.increments[i]) : series.increments[i];
    }
    std::vector<long double> prefix(a.size() + 1, 0.0L);
    for (std::size_t i = 0; i < a.size(); ++i) prefix[i + 1] = prefix[i] + a[i];

    p.group_sums_.assign(g, {});
    p.bin_sums_.assign(g * nb, {});

    parallel_for(g, workers, [&](std::size_t k) {
        const ResamplingGroup& grp = p.groups[k];
        const Session& s = sessions[grp.session];
        const double window_end = t[s.end - 1];
        const double g_start = grp.begin == s.begin ? std::min(s.origin, t[s.begin]) : t[grp.begin];
        const double g_end = grp.end == s.end ? window_end : t[grp.end];
        auto& gs = p.group_sums_[k];
        gs.n = static_cast<double>(grp.end - grp.begin);
        gs.duration = g_end - g_start;
        long double s2 = 0.0L;
        for (std::size_t i = grp.begin; i < grp.end; ++i) s2 += static_cast<long double>(a[i]) * a[i];
        gs.s1 = static_cast<double>(prefix[grp.end] - prefix[grp.begin]);
        gs.s2 = static_cast<double>(s2);

        TimeAcfPartials::BinSums* out = &p.bin_sums_[k * nb];
        std::vector<long double> prod(nb, 0.0L);
        std::vector<std::uint64_t> pairs(nb, 0);
        // ptr[e]: first event j with t_j - t_i >= edge e; non-decreasing in i.
        std::vector<std::size_t> ptr(nb + 1, grp.begin);
        for (std::size_t i = grp.begin; i < grp.end; ++i) {
            for (std::size_t e = 0; e <= nb; ++e) {
                std::size_t j = std::max(ptr[e], e > 0 ? ptr[e - 1] : i + 1);
                while (j < s.end && t[j] - t[i] < p.edges[e]) ++j;
                ptr[e] = j;
            }
            for (std::size_t b = 0; b < nb; ++b) {
                if (ptr[b + 1] == ptr[b]) continue;
                pairs[b] += ptr[b + 1] - ptr[b];
                prod[b] += a[i] * (prefix[ptr[b + 1]] - prefix[ptr[b]]);
            }
        }
        const double d = g_end - g_start;
        const double r = window_end - g_start;
        for (std::size_t b = 0; b < nb; ++b) {
            out[b].product = static_cast<double>(prod[b]);
            out[b].pairs = static_cast<double>(pairs[b]);
            out[b].exposure = exposure(p.edges[b], p.edges[b + 1], d, r);
        }
    });
    return p;
}

TimeAcfPartials::Totals TimeAcfPartials::totals(std::span<const double> weights) const {
    check_weights(weights, groups.size());
    const std::size_t nb = edges.size() - 1;
    Totals t;
    t.bin.assign(nb, {});
    for (std::size_t k = 0; k < groups.size(); ++k) {
        const double w = weights[k];
        if (w == 0.0) continue;
        t.g.n += w * group_sums_[k].n;
        t.g.duration += w * group_sums_[k].duration;
        t.g.s1 += w * group_sums_[k].s1;
        t.g.s2 += w * group_sums_[k].s2;
        const BinSums* src = &bin_sums_[k * nb];
        for (std::size_t b = 0; b < nb; ++b) {
            t.bin[b].product += w * src[b].product;
            t.bin[b].pairs += w * src[b].pairs;
            t.bin[b].exposure += w * src[b].exposure;
        }
    }
    return t;
}

AcfCurve TimeAcfPartials::from_totals(const Totals& t) const {
    AcfCurve c;
    c.kind = AcfKind::time;
    const std::size_t nb = edges.size() - 1;
    c.lags.resize(nb);
    c.values.assign(nb, kNaN);
    c.std_errors.assign(nb, kNaN);
    c.pair_counts.assign(nb, 0);
    for (std::size_t b = 0; b < nb; ++b) c.lags[b] = std::sqrt(edges[b] * edges[b + 1]);
    if (t.g.n <= 0 || t.g.duration <= 0) return c;
    const double rate = t.g.n / t.g.duration;
    const double mark_rate = t.g.s1 / t.g.duration;
    const double mean = t.g.s1 / t.g.n;
    const double var = t.g.s2 / t.g.n - mean * mean;
    if (!(var > 1e-14 * (t.g.s2 / t.g.n))) throw DomainError("marks have zero variance");
    const double norm = rate * rate * var;
    for (std::size_t b = 0; b < nb; ++b) {
        const BinSums& s = t.bin[b];
        c.pair_counts[b] = static_cast<std::uint64_t>(std::llround(s.pairs));
        if (s.pairs <= 0 || s.exposure <= 0) continue;
        c.values[b] = (s.product / s.exposure - mark_rate * mark_rate) / norm;
    }
    return c;
}

AcfCurve TimeAcfPartials::finalize(std::span<const double> weights) const { return from_totals(totals(weights)); }

void TimeAcfPartials::append(const TimeAcfPartials& other) {
    if (other.groups.empty()) return;
    if (groups.empty()) {
        *this = other;
        return;
    }
    if (other.edges != edges) throw DomainError("cannot merge time ACF partials with different bin edges");
    const std::size_t shift = groups.back().session + 1;
    for (ResamplingGroup grp : other.groups) {
        grp.session += shift;
        groups.push_back(grp);
    }
    group_sums_.insert(group_sums_.end(), other.group_sums_.begin(), other.group_sums_.end());
    bin_sums_.insert(bin_sums_.end(), other.bin_sums_.begin(), other.bin_sums_.end());
}

std::vector<std::vector<double>> TimeAcfPartials::leave_one_out() const {
    const std::size_t g = groups.size(), nb = edges.size() - 1;
    std::vector<std::vector<double>> out(g);
    if (g < 2) return out;
    const Totals full = totals(std::vector<double>(g, 1.0));
    Totals t = full;
    for (std::size_t k = 0; k < g; ++k) {
        const GroupSums& gs = group_sums_[k];
        t.g.n = full.g.n - gs.n;
        t.g.duration = full.g.duration - gs.duration;
        t.g.s1 = full.g.s1 - gs.s1;
        t.g.s2 = full.g.s2 - gs.s2;
        const BinSums* src = &bin_sums_[k * nb];
        for (std::size_t b = 0; b < nb; ++b) {
            t.bin[b].product = full.bin[b].product - src[b].product;
            t.bin[b].pairs = full.bin[b].pairs - src[b].pairs;
            t.bin[b].exposure = full.bin[b].exposure - src[b].exposure;
        }
        out[k] = from_totals(t).values;
    }
    return out;
}

AcfCurve TimeAcfPartials::finalize() const {
    const std::vector<double> ones(groups.size(), 1.0);
    AcfCurve c = finalize(ones);
    c.std_errors = jackknife(leave_one_out(), c);
    return c;
}

AcfCurve time_acf_abs(const EventSeries& series, std::span<const double> bin_edges, std::size_t workers) {
    return time_acf_partials(series, bin_edges, MarkTransform::absolute, 16, workers).finalize();
}

AcfCurve time_acf_signed(const EventSeries& series, std::span<const double> bin_edges, std::size_t workers) {
    return time_acf_partials(series, bin_edges, MarkTransform::signed_value, 16, workers).finalize();
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

SlopeFit fit_slope(const AcfCurve& curve, double lag_min, double lag_max) {
    if (!(lag_min > 0) || !(lag_max > lag_min)) throw DomainError("fit range needs 0 < lag_min < lag_max");
    SlopeFit fit;
    fit.lag_min = lag_min;
    fit.lag_max = lag_max;
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < curve.size(); ++i) {
        const double lag = curve.lags[i];
        if (lag < lag_min || lag > lag_max) continue;
        if (curve.missing(i)) {
            ++fit.skipped_missing;
            continue;
        }
        if (!(curve.values[i] > 0)) {
            throw DomainError("non-positive ACF value " + format_double(curve.values[i]) + " at lag " +
                              format_double(lag) + " inside the fit range; narrow the range");
        }
        xs.push_back(std::log10(lag));
        ys.push_back(std::log10(curve.values[i]));
    }
    fit.usable_points = xs.size();
    if (xs.size() < 5) {
        throw DomainError("only " + std::to_string(xs.size()) + " usable points in fit range [" +
                          format_double(lag_min) + ", " + format_double(lag_max) + "]; need at least 5");
    }
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (!(sxx > 0)) throw DomainError("fit range contains a single distinct lag");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double rss = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
        rss += r * r;
    }
    fit.r_squared = syy > 0 ? 1.0 - rss / syy : 1.0;
    fit.std_error_ols = std::sqrt(rss / (n - 2) / sxx);
    fit.std_error = fit.std_error_ols;
    return fit;
}

SlopeFit fit_slope_bootstrap(const StepAcfPartials& partials, double lag_min, double lag_max,
                             std::size_t replicates, std::uint64_t seed) {
    return bootstrap_slope(partials, lag_min, lag_max, replicates, seed);
}

SlopeFit fit_slope_bootstrap(const TimeAcfPartials& partials, double lag_min, double lag_max,
                             std::size_t replicates, std::uint64_t seed) {
    return bootstrap_slope(partials, lag_min, lag_max, replicates, seed);
}

std::optional<ResolvableRange> resolvable_range(const AcfCurve& curve, double lag_min, double lag_max,
                                                double sigmas) {
    ResolvableRange r;
    bool started = false;
    for (std::size_t i = 0; i < curve.size(); ++i) {
        const double lag = curve.lags[i];
        if (lag < lag_min || lag > lag_max) continue;
        const double se = std::isfinite(curve.std_errors[i]) ? curve.std_errors[i] : 0.0;
        if (curve.missing(i) || !(curve.values[i] > sigmas * se)) {
            r.noise_floor = sigmas * se;
            break;
        }
        if (!started) r.lag_min = lag;
        started = true;
        r.lag_max = lag;
        ++r.points;
    }
    if (!started) return std::nullopt;
    return r;
}

std::string to_string(AcfKind kind) { return kind == AcfKind::step ? "step" : "time"; }

std::string to_string(FitMethod method) { return method == FitMethod::ols_loglog ? "ols_loglog" : "bootstrap"; }

nlohmann::json acf_report(const AcfCurve& curve, const SlopeFit* fit) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    nlohmann::json j;
    j["kind"] = to_string(curve.kind);
    j["normalized"] = curve.normalized;
    auto& lags = j["lags"] = nlohmann::json::array();
    auto& values = j["values"] = nlohmann::json::array();
    auto& errors = j["std_errors"] = nlohmann::json::array();
    auto& counts = j["counts"] = nlohmann::json::array();
    for (std::size_t i = 0; i < curve.size(); ++i) {
        lags.push_back(curve.lags[i]);
        values.push_back(num(curve.values[i]));
        errors.push_back(num(curve.std_errors[i]));
        counts.push_back(curve.pair_counts[i]);
    }
    if (fit) {
        j["slope"] = fit->slope;
        j["std_error"] = fit->std_error;
        j["std_error_ols"] = fit->std_error_ols;
        j["intercept"] = fit->intercept;
        j["range"] = {fit->lag_min, fit->lag_max};
        j["r_squared"] = fit->r_squared;
        j["usable_points"] = fit->usable_points;
        j["skipped_missing"] = fit->skipped_missing;
        j["method"] = to_string(fit->method);
        if (fit->method == FitMethod::bootstrap) j["replicates"] = fit->replicates;
    }
    return j;
}

void write_acf_csv(const AcfCurve& curve, std::ostream& out) {
    out << "lag,value,std_error,pair_count\n";
    std::string line;
    for (std::size_t i = 0; i < curve.size(); ++i) {
        line.clear();
        append_double(line, curve.lags[i]);
        line += ',';
        if (curve.missing(i)) {
            line += "nan";
        } else {
            append_double(line, curve.values[i]);
        }
        line += ',';
        if (std::isfinite(curve.std_errors[i])) {
            append_double(line, curve.std_errors[i]);
        } else {
            line += "nan";
        }
        line += ',';
        line += std::to_string(curve.pair_counts[i]);
        out << line << '\n';
    }
}

}  // namespace ctrw
