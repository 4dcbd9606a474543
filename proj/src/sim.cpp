#include "ctrw/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "ctrw/error.hpp"
#include "ctrw/format.hpp"
#include "ctrw/parallel.hpp"

namespace ctrw {

// ---------------------------------------------------------------------------
// EventSeries
// ---------------------------------------------------------------------------

std::vector<double> EventSeries::waiting_times() const {
    std::vector<double> dt(times.size());
    for (const Session& s : sessions) {
        double prev = s.origin;
        for (std::size_t i = s.begin; i < s.end; ++i) {
            dt[i] = times[i] - prev;
            prev = times[i];
        }
    }
    return dt;
}

void EventSeries::validate() const {
    if (times.size() != increments.size()) {
        throw DomainError("event series: " + std::to_string(times.size()) + " times but " +
                          std::to_string(increments.size()) + " increments");
    }
    std::size_t expected_begin = 0;
    for (std::size_t k = 0; k < sessions.size(); ++k) {
        const Session& s = sessions[k];
        if (s.begin != expected_begin || s.end < s.begin || s.end > times.size()) {
            throw DomainError("event series: session " + std::to_string(k) + " has an invalid index range");
        }
        double prev = s.origin;
        for (std::size_t i = s.begin; i < s.end; ++i) {
            if (!(times[i] > prev)) {
                throw DomainError("event series: non-increasing time at event " + std::to_string(i) +
                                  " in session " + std::to_string(k));
            }
            prev = times[i];
        }
        expected_begin = s.end;
    }
    if (expected_begin != times.size()) throw DomainError("event series: sessions do not cover all events");
}

void EventSeries::rebuild_times(std::span<const double> waiting) {
    if (waiting.size() != times.size()) throw DomainError("rebuild_times: length mismatch");
    for (const Session& s : sessions) {
        double t = s.origin;
        for (std::size_t i = s.begin; i < s.end; ++i) {
            t += waiting[i];
            times[i] = t;
        }
    }
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

void SimConfig::validate() const {
    if (!repetition.ergodic()) {
        throw DomainError("non-ergodic regime: rho must exceed 2 (got " + format_double(repetition.rho()) + ")");
    }
    if (n_events < 1) throw DomainError("n_events must be >= 1");
    if (n_trajectories < 1) throw DomainError("n_trajectories must be >= 1");
}

WaitingTimeStream::WaitingTimeStream(const SimConfig& cfg, Rng& rng) : cfg_(cfg), rng_(rng) {
    if (cfg.start == StartMode::stationary) {
        block_length_ = cfg.repetition.sample_stationary_residual(rng_);
        remaining_ = block_length_;
        value_ = cfg.waiting.sample(rng_);
        blocks_ = 1;
    }
}

double WaitingTimeStream::next() {
    if (remaining_ == 0) {
        block_length_ = cfg_.repetition.sample(rng_);
        remaining_ = block_length_;
        value_ = cfg_.waiting.sample(rng_);
        ++blocks_;
    }
    --remaining_;
    return value_;
}

std::vector<double> generate_waiting_sequence(const SimConfig& cfg, Rng& rng) {
    cfg.validate();
    WaitingTimeStream stream(cfg, rng);
    std::vector<double> dt(cfg.n_events);
    for (double& v : dt) v = stream.next();
    return dt;
}

EventSeries generate_trajectory(const SimConfig& cfg, Rng& rng) {
    cfg.validate();
    EventSeries out;
    out.times.resize(cfg.n_events);
    out.increments.resize(cfg.n_events);
    WaitingTimeStream stream(cfg, rng);
    double t = 0.0;
    for (std::size_t i = 0; i < cfg.n_events; ++i) {
        t += stream.next();
        out.times[i] = t;
        out.increments[i] = cfg.increment.sample(rng);
    }
    out.sessions.push_back({0, cfg.n_events, 0.0, 0.0});
    return out;
}

EventSeries generate_ensemble(const SimConfig& cfg, std::size_t workers) {
    cfg.validate();
    std::vector<EventSeries> parts(cfg.n_trajectories);
    parallel_for(parts.size(), workers, [&](std::size_t k) {
        Rng rng = make_stream(cfg.seed, k);
        parts[k] = generate_trajectory(cfg, rng);
    });
    EventSeries out;
    out.times.reserve(cfg.n_events * cfg.n_trajectories);
    out.increments.reserve(cfg.n_events * cfg.n_trajectories);
    for (const EventSeries& p : parts) {
        const std::size_t begin = out.times.size();
        out.times.insert(out.times.end(), p.times.begin(), p.times.end());
        out.increments.insert(out.increments.end(), p.increments.begin(), p.increments.end());
        out.sessions.push_back({begin, out.times.size(), 0.0, 0.0});
    }
    return out;
}

std::vector<MomentRow> ensemble_moments(const SimConfig& cfg, std::span<const double> sample_times,
                                        std::size_t workers) {
    cfg.validate();
    if (sample_times.empty()) throw DomainError("ensemble_moments: no sample times");
    for (std::size_t k = 0; k < sample_times.size(); ++k) {
        if (!(sample_times[k] >= 0.0) || (k > 0 && !(sample_times[k] > sample_times[k - 1]))) {
            throw DomainError("ensemble_moments: sample times must be non-negative and increasing");
        }
    }
    const std::size_t n_times = sample_times.size();
    const std::size_t n_traj = cfg.n_trajectories;
    const double t_max = sample_times.back();

    std::vector<double> values(n_traj * n_times);
    std::vector<double> exhausted_at(n_traj, -1.0);
    parallel_for(n_traj, workers, [&](std::size_t k) {
        Rng rng = make_stream(cfg.seed, k);
        WaitingTimeStream stream(cfg, rng);
        double* row = values.data() + k * n_times;
        double t = 0.0, x = 0.0;
        std::size_t next_sample = 0;
        std::uint64_t produced = 0;
        for (;;) {
            if (produced == cfg.n_events) {
                if (next_sample < n_times) exhausted_at[k] = t;
                for (; next_sample < n_times && sample_times[next_sample] <= t; ++next_sample) row[next_sample] = x;
                return;
            }
            const double t_next = t + stream.next();
            // x(s) for s in [t, t_next) is the current value
            for (; next_sample < n_times && sample_times[next_sample] < t_next; ++next_sample) row[next_sample] = x;
            if (next_sample == n_times) return;
            t = t_next;
            x += cfg.increment.sample(rng);
            ++produced;
        }
    });

    double horizon = t_max;
    bool short_run = false;
    for (double h : exhausted_at) {
        if (h >= 0.0 && h < t_max) {
            short_run = true;
            horizon = std::min(horizon, h);
        }
    }
    if (short_run) {
        throw DomainError("ensemble_moments: sample time " + format_double(t_max) +
                          " is beyond the simulated horizon " + format_double(horizon) +
                          " reached with n_events=" + std::to_string(cfg.n_events));
    }

    std::vector<MomentRow> rows(n_times);
    const long double m = static_cast<long double>(n_traj);
    for (std::size_t j = 0; j < n_times; ++j) {
        long double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
        for (std::size_t k = 0; k < n_traj; ++k) {
            const long double v = values[k * n_times + j];
            const long double v2 = v * v;
            s1 += v;
            s2 += v2;
            s3 += v2 * v;
            s4 += v2 * v2;
        }
        const long double m1 = s1 / m, m2 = s2 / m, m3 = s3 / m, m4 = s4 / m;
        const long double var = std::max(0.0L, m2 - m1 * m1);
        const long double var_sq = std::max(0.0L, m4 - m2 * m2);
        // central fourth moment
        const long double c4 = m4 - 4 * m1 * m3 + 6 * m1 * m1 * m2 - 3 * m1 * m1 * m1 * m1;
        MomentRow& r = rows[j];
        r.t = sample_times[j];
        r.m1 = static_cast<double>(m1);
        r.m2 = static_cast<double>(m2);
        r.variance = static_cast<double>(var);
        r.se_m1 = static_cast<double>(std::sqrt(var / m));
        r.se_m2 = static_cast<double>(std::sqrt(var_sq / m));
        r.se_variance = static_cast<double>(std::sqrt(std::max(0.0L, c4 - var * var) / m));
    }
    return rows;
}

std::vector<double> log_grid(double lo, double hi, int per_decade) {
    if (!(lo > 0.0) || !(hi >= lo) || per_decade < 1) throw DomainError("log_grid: need 0 < lo <= hi, per_decade >= 1");
    std::vector<double> out;
    const double a = std::log10(lo), b = std::log10(hi);
    const auto n = static_cast<long>(std::floor((b - a) * per_decade + 1e-9));
    for (long k = 0; k <= n; ++k) out.push_back(std::pow(10.0, a + static_cast<double>(k) / per_decade));
    if (out.back() < hi * (1.0 - 1e-12)) out.push_back(hi);
    return out;
}

// ---------------------------------------------------------------------------
// Event CSV
// ---------------------------------------------------------------------------

void write_events(const EventSeries& series, std::ostream& out) {
    series.validate();
    std::string buf;
    buf.reserve(1 << 16);
    buf += "timestamp,increment\n";
    if (series.stationarized) buf += "# stationarized\n";
    for (const Session& s : series.sessions) {
        buf += "# session origin=";
        append_double(buf, s.origin);
        buf += " open=";
        append_double(buf, s.open);
        buf += '\n';
        for (std::size_t i = s.begin; i < s.end; ++i) {
            append_double(buf, series.times[i]);
            buf += ',';
            append_double(buf, series.increments[i]);
            buf += '\n';
            if (buf.size() > (1 << 16) - 64) {
                out << buf;
                buf.clear();
            }
        }
    }
    out << buf;
}

void write_events(const EventSeries& series, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DomainError("cannot write " + path.string());
    write_events(series, out);
}

namespace {

void parse_session_marker(std::string_view line, Session& s, const std::string& where) {
    std::istringstream tokens{std::string(line.substr(std::string_view("# session").size()))};
    std::string tok;
    while (tokens >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq);
        double v = 0.0;
        if (!parse_double(std::string_view(tok).substr(eq + 1), v)) throw ParseError(where + ": bad session attribute " + tok);
        if (key == "origin") s.origin = v;
        else if (key == "open") s.open = v;
    }
}

}  // namespace

EventSeries read_events(std::istream& in, const std::string& name) {
    EventSeries out;
    std::string line;
    std::size_t line_no = 0;
    bool have_session = false;
    Session current;
    auto close_session = [&] {
        if (!have_session) return;
        current.end = out.times.size();
        if (current.end > current.begin) out.sessions.push_back(current);
        have_session = false;
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = name + ":" + std::to_string(line_no);
        if (line[0] == '#') {
            if (line.rfind("# session", 0) == 0) {
                close_session();
                current = Session{};
                current.begin = out.times.size();
                parse_session_marker(line, current, where);
                have_session = true;
            } else if (line.rfind("# stationarized", 0) == 0) {
                out.stationarized = true;
            }
            continue;
        }
        if (line_no == 1 && line.rfind("timestamp", 0) == 0) continue;
        const auto comma = line.find(',');
        double t = 0.0, dx = 0.0;
        if (comma == std::string::npos || !parse_double(std::string_view(line).substr(0, comma), t) ||
            !parse_double(std::string_view(line).substr(comma + 1), dx)) {
            throw ParseError(where + ": expected 'timestamp,increment'");
        }
        if (!have_session) {
            current = Session{};
            current.begin = out.times.size();
            have_session = true;
        }
        const double prev = current.begin == out.times.size() ? current.origin : out.times.back();
        if (!(t > prev)) throw ParseError(where + ": timestamps must increase within a session");
        out.times.push_back(t);
        out.increments.push_back(dx);
    }
    close_session();
    return out;
}

EventSeries read_events(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    return read_events(in, path.string());
}

}  // namespace ctrw
