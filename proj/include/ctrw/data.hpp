#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctrw/sim.hpp"

namespace ctrw {

struct TickRecord {
    double timestamp = 0.0;  // seconds since the Unix epoch, UTC
    double price = 0.0;
    std::size_t line = 0;    // 1-based source line, 0 if synthetic
};

// Trading sessions as daily clock windows in local time. Local time is UTC
// shifted by utc_offset_seconds. With `whole_file` set, no window is applied
// and every tick belongs to one session.
struct SessionRules {
    double open_seconds = 9 * 3600.0;
    double close_seconds = 17 * 3600.0;
    double utc_offset_seconds = 0.0;
    bool whole_file = false;

    // "HH:MM-HH:MM" (or "HH:MM:SS-HH:MM:SS").
    static SessionRules window(std::string_view text, double utc_offset_seconds = 0.0);
    void validate() const;
};

struct IngestReport {
    std::string source;
    std::size_t lines = 0;              // data lines read
    std::size_t rejected_price = 0;     // non-positive or non-finite price
    std::size_t outside_session = 0;    // dropped by the clock window
    std::size_t merged_ties = 0;        // zero waiting time, merged into the previous event
    std::size_t dropped_overnight = 0;  // first tick of each session (its return spans the close)
    std::size_t events = 0;
    std::size_t sessions = 0;
};

// Seconds since the epoch for "YYYY-MM-DD[T ]HH:MM:SS[.frac][Z|+HH:MM|-HH:MM]".
// Without a zone designator the text is local time at `utc_offset_seconds`.
std::optional<double> parse_iso8601(std::string_view text, double utc_offset_seconds = 0.0);

// Days since 1970-01-01 of a local instant, and the weekday (0 = Monday).
std::int64_t local_day(double utc_seconds, double utc_offset_seconds);
int weekday_of_day(std::int64_t day);

// CSV with header "timestamp,price"; timestamps in epoch seconds or ISO-8601
// (auto-detected per row). Throws ParseError with the line number on
// malformed rows and on timestamps that go backwards. Non-positive prices
// are skipped and counted.
std::vector<TickRecord> read_ticks(std::istream& in, const std::string& name, IngestReport& report,
                                   double utc_offset_seconds = 0.0);

// Sessions from ticks: dx_n = log p_n - log p_{n-1} inside a session; the
// first tick of a session is the reference point (origin) and its overnight
// return is dropped; zero waiting times are merged into the previous event.
EventSeries events_from_ticks(std::span<const TickRecord> ticks, const SessionRules& rules, IngestReport& report);

struct Ingested {
    EventSeries series;
    IngestReport report;
};

Ingested ingest_ticks(std::istream& in, const SessionRules& rules, const std::string& name = "<stream>");
Ingested ingest_ticks(const std::filesystem::path& path, const SessionRules& rules);

// Loads either a tick file ("timestamp,price") or an event file
// ("timestamp,increment"), chosen by the header line.
Ingested load_series(const std::filesystem::path& path, const SessionRules& rules);

// Ticks whose log-returns are the series' increments, first tick of every
// session at its origin with price `start_price`.
std::vector<TickRecord> ticks_from_series(const EventSeries& series, double start_price = 100.0);
void write_ticks(std::span<const TickRecord> ticks, std::ostream& out);

// ---------------------------------------------------------------------------
// Intraday seasonality
// ---------------------------------------------------------------------------

struct ProfileOptions {
    double bin_width = 300.0;
    double utc_offset_seconds = 0.0;
    std::uint64_t min_count = 1;  // bins with fewer samples are undefined
};

class SeasonalProfile {
public:
    static constexpr int kDays = 7;  // 0 = Monday

    double bin_width() const noexcept { return bin_width_; }
    double utc_offset() const noexcept { return utc_offset_; }
    std::size_t bins() const noexcept { return bins_; }

    // Raw statistics.
    std::uint64_t count(int day, std::size_t bin) const;
    double raw_mean(int day, std::size_t bin) const;  // NaN when undefined
    bool defined(int day, std::size_t bin) const;
    bool day_defined(int day) const;

    // Mean used for stationarization: raw where defined, otherwise
    // interpolated across neighbouring bins of the same weekday; a weekday
    // without data falls back to the profile pooled over weekdays.
    double mean(int day, std::size_t bin) const;
    std::size_t bin_of(double seconds_since_open) const;

    // "weekday,bin_start_seconds,mean_dt,count"; undefined bins have an
    // empty mean_dt. "# bin_width=..." and "# utc_offset=..." header lines.
    void write_csv(std::ostream& out) const;
    static SeasonalProfile read_csv(std::istream& in, const std::string& name = "<stream>");

    friend SeasonalProfile build_seasonal_profile(const EventSeries&, const ProfileOptions&);

private:
    void finish();

    double bin_width_ = 300.0;
    double utc_offset_ = 0.0;
    std::uint64_t min_count_ = 1;
    std::size_t bins_ = 0;
    std::array<std::vector<double>, kDays> sum_;
    std::array<std::vector<std::uint64_t>, kDays> count_;
    std::array<std::vector<double>, kDays> filled_;
};

// Mean waiting time per (weekday, time-of-day bin); each waiting time is
// binned by the time of the event that ends it, measured from the session's
// opening instant.
SeasonalProfile build_seasonal_profile(const EventSeries& series, const ProfileOptions& options = {});

// Divides every waiting time by its profile mean and rebuilds the times from
// each session's origin. Increments and event order are untouched.
EventSeries stationarize(const EventSeries& series, const SeasonalProfile& profile);

// One session whose waiting times are the concatenated per-session
// sequences. Appends a warning when the series is not stationarized.
EventSeries join_sessions(const EventSeries& series, std::vector<std::string>* warnings = nullptr);

// ---------------------------------------------------------------------------
// Surrogates
// ---------------------------------------------------------------------------

enum class SurrogateKind { original, shuffle_dt, shuffle_dx, shuffle_both };

std::string to_string(SurrogateKind kind);
SurrogateKind parse_surrogate_kind(std::string_view text);

// Within-session permutations of waiting times and/or increments. Session k
// draws from make_stream(seed, k), so results do not depend on `workers`.
EventSeries make_surrogate(const EventSeries& series, SurrogateKind kind, std::uint64_t seed,
                           std::size_t workers = 1);

}  // namespace ctrw
