#include "ctrw/data.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ctrw/error.hpp"
#include "ctrw/format.hpp"
#include "ctrw/parallel.hpp"
#include "ctrw/random.hpp"

namespace ctrw {

namespace {

constexpr double kDay = 86400.0;

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

// Fixed-width unsigned field.
bool digits(std::string_view s, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > s.size()) return false;
    out = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
        out = out * 10 + (s[i] - '0');
    }
    return true;
}

std::optional<double> parse_clock(std::string_view text) {
    text = trim(text);
    int h = 0, m = 0, sec = 0;
    if (!digits(text, 0, 2, h) || text.size() < 5 || text[2] != ':' || !digits(text, 3, 2, m)) return std::nullopt;
    if (text.size() == 8) {
        if (text[5] != ':' || !digits(text, 6, 2, sec)) return std::nullopt;
    } else if (text.size() != 5) {
        return std::nullopt;
    }
    if (h > 24 || m > 59 || sec > 59) return std::nullopt;
    return h * 3600.0 + m * 60.0 + sec;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string at_line(const std::string& name, std::size_t line) { return name + ":" + std::to_string(line) + ": "; }

std::string first_content_line(std::istream& in) {
    std::string line;
    while (std::getline(in, line)) {
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        return std::string(t);
    }
    return {};
}

}  // namespace

// ---------------------------------------------------------------------------
// Time handling
// ---------------------------------------------------------------------------

SessionRules SessionRules::window(std::string_view text, double utc_offset_seconds) {
    const auto dash = text.find('-');
    if (dash == std::string_view::npos) throw DomainError("session window must look like HH:MM-HH:MM, got '" + std::string(text) + "'");
    const auto open = parse_clock(text.substr(0, dash));
    const auto close = parse_clock(text.substr(dash + 1));
    if (!open || !close) throw DomainError("session window must look like HH:MM-HH:MM, got '" + std::string(text) + "'");
    SessionRules r;
    r.open_seconds = *open;
    r.close_seconds = *close;
    r.utc_offset_seconds = utc_offset_seconds;
    r.validate();
    return r;
}

void SessionRules::validate() const {
    if (whole_file) return;
    if (!(open_seconds >= 0.0) || !(close_seconds <= kDay) || !(close_seconds > open_seconds)) {
        throw DomainError("session window needs 00:00 <= open < close <= 24:00");
    }
    if (!(std::fabs(utc_offset_seconds) <= kDay)) throw DomainError("UTC offset must be within one day");
}

std::optional<double> parse_iso8601(std::string_view text, double utc_offset_seconds) {
    text = trim(text);
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    if (!digits(text, 0, 4, y) || text.size() < 19 || text[4] != '-' || !digits(text, 5, 2, mo) || text[7] != '-' ||
        !digits(text, 8, 2, d) || (text[10] != 'T' && text[10] != ' ') || !digits(text, 11, 2, h) ||
        text[13] != ':' || !digits(text, 14, 2, mi) || text[16] != ':' || !digits(text, 17, 2, s)) {
        return std::nullopt;
    }
    namespace chr = std::chrono;
    const chr::year_month_day ymd{chr::year{y}, chr::month{static_cast<unsigned>(mo)},
                                  chr::day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 60) return std::nullopt;
    std::size_t pos = 19;
    double frac = 0.0;
    if (pos < text.size() && text[pos] == '.') {
        std::size_t end = pos + 1;
        while (end < text.size() && text[end] >= '0' && text[end] <= '9') ++end;
        if (end == pos + 1) return std::nullopt;
        std::string buf = "0" + std::string(text.substr(pos, end - pos));
        if (!parse_double(buf, frac)) return std::nullopt;
        pos = end;
    }
    double offset = utc_offset_seconds;
    if (pos < text.size()) {
        const char z = text[pos];
        if (z == 'Z' && pos + 1 == text.size()) {
            offset = 0.0;
        } else if ((z == '+' || z == '-') && text.size() == pos + 6 && text[pos + 3] == ':') {
            int oh = 0, om = 0;
            if (!digits(text, pos + 1, 2, oh) || !digits(text, pos + 4, 2, om)) return std::nullopt;
            offset = (z == '-' ? -1.0 : 1.0) * (oh * 3600.0 + om * 60.0);
        } else {
            return std::nullopt;
        }
    }
    const auto days = chr::sys_days{ymd}.time_since_epoch().count();
    return static_cast<double>(days) * kDay + h * 3600.0 + mi * 60.0 + s + frac - offset;
}

std::int64_t local_day(double utc_seconds, double utc_offset_seconds) {
    return static_cast<std::int64_t>(std::floor((utc_seconds + utc_offset_seconds) / kDay));
}

int weekday_of_day(std::int64_t day) {
    // 1970-01-01 was a Thursday (3).
    return static_cast<int>(((day % 7) + 7 + 3) % 7);
}

// ---------------------------------------------------------------------------
// Ticks
// ---------------------------------------------------------------------------

std::vector<TickRecord> read_ticks(std::istream& in, const std::string& name, IngestReport& report,
                                   double utc_offset_seconds) {
    report.source = name;
    std::vector<TickRecord> ticks;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    double last = -std::numeric_limits<double>::infinity();
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto cols = split_csv(t);
        if (!header_seen) {
            header_seen = true;
            if (cols.size() == 2 && lower(cols[0]) == "timestamp" && lower(cols[1]) == "price") continue;
            throw ParseError(at_line(name, lineno) + "expected header 'timestamp,price'");
        }
        if (cols.size() != 2) throw ParseError(at_line(name, lineno) + "expected 2 columns, got " + std::to_string(cols.size()));
        ++report.lines;
        TickRecord r;
        r.line = lineno;
        if (!parse_double(cols[0], r.timestamp)) {
            const auto iso = parse_iso8601(cols[0], utc_offset_seconds);
            if (!iso) throw ParseError(at_line(name, lineno) + "unreadable timestamp '" + std::string(cols[0]) + "'");
            r.timestamp = *iso;
        }
        if (!std::isfinite(r.timestamp)) throw ParseError(at_line(name, lineno) + "non-finite timestamp");
        if (!parse_double(cols[1], r.price)) {
            throw ParseError(at_line(name, lineno) + "unreadable price '" + std::string(cols[1]) + "'");
        }
        if (r.timestamp < last) {
            throw ParseError(at_line(name, lineno) + "timestamp " + format_double(r.timestamp) +
                             " is earlier than the previous record (" + format_double(last) + ")");
        }
        last = r.timestamp;
        if (!(r.price > 0.0) || !std::isfinite(r.price)) {
            ++report.rejected_price;
            continue;
        }
        ticks.push_back(r);
    }
    if (!header_seen) throw ParseError(name + ": empty file");
    return ticks;
}

EventSeries events_from_ticks(std::span<const TickRecord> ticks, const SessionRules& rules, IngestReport& report) {
    rules.validate();
    EventSeries out;
    bool open = false;
    std::int64_t current_day = 0;
    double prev_time = 0.0;
    double prev_log_price = 0.0;
    Session session;
    auto close_session = [&] {
        if (!open) return;
        session.end = out.size();
        if (session.end > session.begin) {
            out.sessions.push_back(session);
        }
        open = false;
    };
    for (const TickRecord& r : ticks) {
        std::int64_t day = 0;
        if (!rules.whole_file) {
            day = local_day(r.timestamp, rules.utc_offset_seconds);
            const double clock = r.timestamp + rules.utc_offset_seconds - static_cast<double>(day) * kDay;
            if (clock < rules.open_seconds || clock >= rules.close_seconds) {
                ++report.outside_session;
                continue;
            }
        }
        if (r.timestamp < prev_time && open) {
            throw ParseError(report.source + ":" + std::to_string(r.line) + ": timestamps go backwards");
        }
        const double lp = std::log(r.price);
        if (!open || day != current_day) {
            close_session();
            open = true;
            current_day = day;
            session = Session{};
            session.begin = out.size();
            session.origin = r.timestamp;
            session.open = rules.whole_file ? r.timestamp
                                            : static_cast<double>(day) * kDay - rules.utc_offset_seconds + rules.open_seconds;
            prev_time = r.timestamp;
            prev_log_price = lp;
            ++report.dropped_overnight;
            continue;
        }
        if (r.timestamp == prev_time) {
            ++report.merged_ties;
            // a tie with the session's reference tick carries its return
            // into the next event
            if (out.size() > session.begin) {
                out.increments.back() += lp - prev_log_price;
                prev_log_price = lp;
            }
            continue;
        }
        out.times.push_back(r.timestamp);
        out.increments.push_back(lp - prev_log_price);
        prev_time = r.timestamp;
        prev_log_price = lp;
    }
    close_session();
    report.events = out.size();
    report.sessions = out.sessions.size();
    return out;
}

Ingested ingest_ticks(std::istream& in, const SessionRules& rules, const std::string& name) {
    Ingested result;
    const auto ticks = read_ticks(in, name, result.report, rules.utc_offset_seconds);
    result.series = events_from_ticks(ticks, rules, result.report);
    return result;
}

Ingested ingest_ticks(const std::filesystem::path& path, const SessionRules& rules) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open " + path.string());
    return ingest_ticks(in, rules, path.string());
}

Ingested load_series(const std::filesystem::path& path, const SessionRules& rules) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open " + path.string());
    const std::string header = lower(first_content_line(in));
    if (header.empty()) throw ParseError(path.string() + ": empty file");
    in.clear();
    in.seekg(0);
    std::string compact;
    for (char c : header) {
        if (c != ' ' && c != '\t') compact += c;
    }
    if (compact == "timestamp,price") return ingest_ticks(in, rules, path.string());
    if (compact == "timestamp,increment") {
        Ingested r;
        r.series = read_events(in, path.string());
        r.report.source = path.string();
        r.report.events = r.series.size();
        r.report.sessions = r.series.sessions.size();
        r.report.lines = r.series.size();
        if (r.series.empty()) throw ParseError(path.string() + ": no events");
        return r;
    }
    throw ParseError(path.string() + ": unrecognized header '" + header +
                     "' (expected 'timestamp,price' or 'timestamp,increment')");
}

std::vector<TickRecord> ticks_from_series(const EventSeries& series, double start_price) {
    if (!(start_price > 0.0)) throw DomainError("start price must be positive");
    std::vector<TickRecord> ticks;
    ticks.reserve(series.size() + series.sessions.size());
    for (const Session& s : series.sessions) {
        double lp = std::log(start_price);
        ticks.push_back({s.origin, start_price, 0});
        for (std::size_t i = s.begin; i < s.end; ++i) {
            lp += series.increments[i];
            ticks.push_back({series.times[i], std::exp(lp), 0});
        }
    }
    return ticks;
}

void write_ticks(std::span<const TickRecord> ticks, std::ostream& out) {
    out << "timestamp,price\n";
    std::string line;
    for (const auto& t : ticks) {
        line.clear();
        append_double(line, t.timestamp);
        line += ',';
        append_double(line, t.price);
        line += '\n';
        out << line;
    }
}

// ---------------------------------------------------------------------------
// Seasonal profile
// ---------------------------------------------------------------------------

std::uint64_t SeasonalProfile::count(int day, std::size_t bin) const {
    if (day < 0 || day >= kDays || bin >= bins_) return 0;
    return count_[day][bin];
}

bool SeasonalProfile::defined(int day, std::size_t bin) const {
    const auto c = count(day, bin);
    return c > 0 && c >= min_count_;
}

double SeasonalProfile::raw_mean(int day, std::size_t bin) const {
    if (!defined(day, bin)) return std::numeric_limits<double>::quiet_NaN();
    return sum_[day][bin] / static_cast<double>(count_[day][bin]);
}

bool SeasonalProfile::day_defined(int day) const {
    for (std::size_t b = 0; b < bins_; ++b) {
        if (defined(day, b)) return true;
    }
    return false;
}

std::size_t SeasonalProfile::bin_of(double seconds_since_open) const {
    if (bins_ == 0) throw DomainError("seasonal profile is empty");
    if (!(seconds_since_open > 0.0)) return 0;
    const double b = std::floor(seconds_since_open / bin_width_);
    return std::min<std::size_t>(bins_ - 1, static_cast<std::size_t>(b));
}

double SeasonalProfile::mean(int day, std::size_t bin) const {
    if (day < 0 || day >= kDays) throw DomainError("weekday out of range");
    if (bins_ == 0) throw DomainError("seasonal profile is empty");
    return filled_[day][std::min(bin, bins_ - 1)];
}

namespace {

// Linear interpolation over undefined entries (NaN); constant beyond the
// outermost defined bins. Returns false if nothing is defined.
bool interpolate(std::vector<double>& v) {
    std::vector<std::size_t> known;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (std::isfinite(v[i])) known.push_back(i);
    }
    if (known.empty()) return false;
    for (std::size_t i = 0; i < known.front(); ++i) v[i] = v[known.front()];
    for (std::size_t i = known.back() + 1; i < v.size(); ++i) v[i] = v[known.back()];
    for (std::size_t k = 0; k + 1 < known.size(); ++k) {
        const std::size_t a = known[k], b = known[k + 1];
        for (std::size_t i = a + 1; i < b; ++i) {
            const double w = static_cast<double>(i - a) / static_cast<double>(b - a);
            v[i] = (1 - w) * v[a] + w * v[b];
        }
    }
    return true;
}

}  // namespace

void SeasonalProfile::finish() {
    std::vector<double> pooled(bins_, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t b = 0; b < bins_; ++b) {
        double s = 0.0;
        std::uint64_t c = 0;
        for (int d = 0; d < kDays; ++d) {
            if (defined(d, b)) {
                s += sum_[d][b];
                c += count_[d][b];
            }
        }
        if (c > 0) pooled[b] = s / static_cast<double>(c);
    }
    const bool any = interpolate(pooled);
    for (int d = 0; d < kDays; ++d) {
        filled_[d].assign(bins_, std::numeric_limits<double>::quiet_NaN());
        for (std::size_t b = 0; b < bins_; ++b) filled_[d][b] = raw_mean(d, b);
        if (!interpolate(filled_[d])) filled_[d] = any ? pooled : std::vector<double>(bins_, 1.0);
    }
}

SeasonalProfile build_seasonal_profile(const EventSeries& series, const ProfileOptions& options) {
    if (!(options.bin_width > 0.0)) throw DomainError("profile bin width must be positive");
    series.validate();
    SeasonalProfile p;
    p.bin_width_ = options.bin_width;
    p.utc_offset_ = options.utc_offset_seconds;
    p.min_count_ = options.min_count;
    double longest = 0.0;
    for (const Session& s : series.sessions) {
        if (s.size() > 0) longest = std::max(longest, series.times[s.end - 1] - s.open);
    }
    p.bins_ = static_cast<std::size_t>(std::floor(longest / options.bin_width)) + 1;
    for (int d = 0; d < SeasonalProfile::kDays; ++d) {
        p.sum_[d].assign(p.bins_, 0.0);
        p.count_[d].assign(p.bins_, 0);
    }
    const auto dt = series.waiting_times();
    for (const Session& s : series.sessions) {
        const int day = weekday_of_day(local_day(s.open, options.utc_offset_seconds));
        for (std::size_t i = s.begin; i < s.end; ++i) {
            const std::size_t b = p.bin_of(series.times[i] - s.open);
            p.sum_[day][b] += dt[i];
            ++p.count_[day][b];
        }
    }
    p.finish();
    return p;
}

void SeasonalProfile::write_csv(std::ostream& out) const {
    out << "# bin_width=" << format_double(bin_width_) << "\n";
    out << "# utc_offset=" << format_double(utc_offset_) << "\n";
    out << "# min_count=" << min_count_ << "\n";
    out << "weekday,bin_start_seconds,mean_dt,count\n";
    std::string line;
    for (int d = 0; d < kDays; ++d) {
        if (!day_defined(d)) continue;
        for (std::size_t b = 0; b < bins_; ++b) {
            line = std::to_string(d) + ',';
            append_double(line, static_cast<double>(b) * bin_width_);
            line += ',';
            if (defined(d, b)) append_double(line, raw_mean(d, b));
            line += ',' + std::to_string(count_[d][b]) + '\n';
            out << line;
        }
    }
}

SeasonalProfile SeasonalProfile::read_csv(std::istream& in, const std::string& name) {
    SeasonalProfile p;
    struct Row {
        int day;
        double start;
        double mean;
        std::uint64_t count;
    };
    std::vector<Row> rows;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty()) continue;
        if (t.front() == '#') {
            const auto eq = t.find('=');
            if (eq == std::string_view::npos) continue;
            const auto key = trim(t.substr(1, eq - 1));
            double v = 0.0;
            if (!parse_double(t.substr(eq + 1), v)) throw ParseError(at_line(name, lineno) + "bad metadata value");
            if (key == "bin_width") p.bin_width_ = v;
            if (key == "utc_offset") p.utc_offset_ = v;
            if (key == "min_count") p.min_count_ = static_cast<std::uint64_t>(v);
            continue;
        }
        const auto cols = split_csv(t);
        if (!header) {
            header = true;
            if (cols.size() == 4 && cols[0] == "weekday") continue;
            throw ParseError(at_line(name, lineno) + "expected header 'weekday,bin_start_seconds,mean_dt,count'");
        }
        if (cols.size() != 4) throw ParseError(at_line(name, lineno) + "expected 4 columns");
        Row r{};
        double day = 0, count = 0;
        if (!parse_double(cols[0], day) || !parse_double(cols[1], r.start) || !parse_double(cols[3], count) ||
            day < 0 || day >= kDays || count < 0) {
            throw ParseError(at_line(name, lineno) + "malformed profile row");
        }
        r.day = static_cast<int>(day);
        r.count = static_cast<std::uint64_t>(count);
        r.mean = std::numeric_limits<double>::quiet_NaN();
        if (!cols[2].empty() && (!parse_double(cols[2], r.mean) || !(r.mean > 0))) {
            throw ParseError(at_line(name, lineno) + "profile means must be positive");
        }
        rows.push_back(r);
    }
    if (!(p.bin_width_ > 0)) throw ParseError(name + ": bin width must be positive");
    if (rows.empty()) throw ParseError(name + ": profile has no rows");
    std::size_t bins = 0;
    for (const auto& r : rows) bins = std::max(bins, static_cast<std::size_t>(std::llround(r.start / p.bin_width_)) + 1);
    p.bins_ = bins;
    for (int d = 0; d < kDays; ++d) {
        p.sum_[d].assign(bins, 0.0);
        p.count_[d].assign(bins, 0);
    }
    for (const auto& r : rows) {
        const auto b = static_cast<std::size_t>(std::llround(r.start / p.bin_width_));
        p.count_[r.day][b] = std::isfinite(r.mean) ? r.count : 0;
        p.sum_[r.day][b] = std::isfinite(r.mean) ? r.mean * static_cast<double>(r.count) : 0.0;
    }
    p.finish();
    return p;
}

EventSeries stationarize(const EventSeries& series, const SeasonalProfile& profile) {
    series.validate();
    EventSeries out = series;
    auto dt = series.waiting_times();
    for (const Session& s : series.sessions) {
        const int day = weekday_of_day(local_day(s.open, profile.utc_offset()));
        for (std::size_t i = s.begin; i < s.end; ++i) {
            dt[i] /= profile.mean(day, profile.bin_of(series.times[i] - s.open));
        }
    }
    out.rebuild_times(dt);
    out.stationarized = true;
    return out;
}

EventSeries join_sessions(const EventSeries& series, std::vector<std::string>* warnings) {
    series.validate();
    if (!series.stationarized && series.sessions.size() > 1 && warnings) {
        warnings->push_back("joining sessions of a series that is not stationarized");
    }
    if (series.sessions.size() <= 1) return series;
    const auto dt = series.waiting_times();
    EventSeries out;
    out.increments = series.increments;
    out.times.resize(series.size());
    out.stationarized = series.stationarized;
    Session s;
    s.begin = 0;
    s.end = series.size();
    s.origin = series.sessions.front().origin;
    s.open = series.sessions.front().open;
    out.sessions.push_back(s);
    out.rebuild_times(dt);
    return out;
}

// ---------------------------------------------------------------------------
// Surrogates
// ---------------------------------------------------------------------------

std::string to_string(SurrogateKind kind) {
    switch (kind) {
        case SurrogateKind::original:
            return "original";
        case SurrogateKind::shuffle_dt:
            return "shuffle_dt";
        case SurrogateKind::shuffle_dx:
            return "shuffle_dx";
        case SurrogateKind::shuffle_both:
            return "shuffle_both";
    }
    return {};
}

SurrogateKind parse_surrogate_kind(std::string_view text) {
    for (auto k : {SurrogateKind::original, SurrogateKind::shuffle_dt, SurrogateKind::shuffle_dx,
                   SurrogateKind::shuffle_both}) {
        if (text == to_string(k)) return k;
    }
    throw DomainError("unknown surrogate kind '" + std::string(text) + "'");
}

EventSeries make_surrogate(const EventSeries& series, SurrogateKind kind, std::uint64_t seed, std::size_t workers) {
    series.validate();
    if (kind == SurrogateKind::original) return series;
    EventSeries out = series;
    auto dt = series.waiting_times();
    const bool shuffle_dt = kind == SurrogateKind::shuffle_dt || kind == SurrogateKind::shuffle_both;
    const bool shuffle_dx = kind == SurrogateKind::shuffle_dx || kind == SurrogateKind::shuffle_both;
    parallel_for(series.sessions.size(), workers, [&](std::size_t k) {
        const Session& s = series.sessions[k];
        if (shuffle_dt) {
            Rng rng = make_stream(seed, k, 0xd7);
            std::shuffle(dt.begin() + static_cast<std::ptrdiff_t>(s.begin), dt.begin() + static_cast<std::ptrdiff_t>(s.end), rng);
        }
        if (shuffle_dx) {
            Rng rng = make_stream(seed, k, 0xd8);
            std::shuffle(out.increments.begin() + static_cast<std::ptrdiff_t>(s.begin),
                         out.increments.begin() + static_cast<std::ptrdiff_t>(s.end), rng);
        }
    });
    if (shuffle_dt) out.rebuild_times(dt);
    return out;
}

}  // namespace ctrw
