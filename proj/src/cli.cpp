#include "ctrw/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctrw/analytic.hpp"
#include "ctrw/data.hpp"
#include "ctrw/error.hpp"
#include "ctrw/estim.hpp"
#include "ctrw/format.hpp"
#include "ctrw/parallel.hpp"
#include "ctrw/sim.hpp"

namespace ctrw::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

std::vector<std::string> split(std::string_view text, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (;;) {
        const auto pos = text.find(sep, start);
        parts.emplace_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

double number(std::string_view text, std::string_view what) {
    double v = 0.0;
    if (!parse_double(text, v)) throw UsageError(std::string(what) + ": not a number: '" + std::string(text) + "'");
    return v;
}

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

// "lo:hi" with 0 < lo < hi.
Range parse_range(std::string_view text, std::string_view what) {
    const auto parts = split(text, ':');
    if (parts.size() != 2) throw UsageError(std::string(what) + ": expected lo:hi, got '" + std::string(text) + "'");
    Range r{number(parts[0], what), number(parts[1], what)};
    if (!(r.lo > 0.0) || !(r.hi > r.lo)) throw UsageError(std::string(what) + ": need 0 < lo < hi");
    return r;
}

struct Grid {
    double lo = 0.0;
    double hi = 0.0;
    int per_decade = 0;
};

// "lo:hi:per_decade".
Grid parse_grid(std::string_view text, std::string_view what) {
    const auto parts = split(text, ':');
    if (parts.size() != 3) {
        throw UsageError(std::string(what) + ": expected lo:hi:per_decade, got '" + std::string(text) + "'");
    }
    Grid g{number(parts[0], what), number(parts[1], what), 0};
    const double pd = number(parts[2], what);
    if (!(g.lo > 0.0) || !(g.hi > g.lo) || !(pd >= 1.0) || pd != std::floor(pd) || pd > 1000.0) {
        throw UsageError(std::string(what) + ": need 0 < lo < hi and an integer per_decade >= 1");
    }
    g.per_decade = static_cast<int>(pd);
    return g;
}

std::vector<double> read_column(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open " + path.string());
    std::vector<double> values;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string field = trim(line.substr(0, line.find(',')));
        if (field.empty() || field[0] == '#') continue;
        double v = 0.0;
        if (!parse_double(field, v) || !std::isfinite(v)) {
            if (values.empty() && line_no == 1) continue;
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": not a number: " + field);
        }
        values.push_back(v);
    }
    if (values.empty()) throw ParseError(path.string() + ": no values");
    return values;
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DomainError("cannot write " + path.string());
    return out;
}

void close_output(std::ofstream& out, const fs::path& path) {
    out.close();
    if (!out) throw DomainError("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) {
    auto out = open_output(path);
    out << j.dump(2) << '\n';
    close_output(out, path);
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config) {
    write_json(dir / "manifest.json", json{{"command", command}, {"version", kVersion}, {"config", config}});
}

fs::path prepare_dir(const std::string& dir) {
    const fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw DomainError("cannot create output directory " + dir + ": " + ec.message());
    return p;
}

// ---------------------------------------------------------------------------
// Options
// ---------------------------------------------------------------------------

struct Common {
    std::string out = ".";
    std::size_t workers = 0;
    std::string config;

    void add(CLI::App* app) {
        app->add_option("--out,-o", out, "Output directory")->capture_default_str();
        app->add_option("--workers", workers, "Worker threads (0: CTRW_WORKERS or all cores)");
        app->add_option("--config", config, "key=value or JSON config file, overridden by flags");
    }
    std::size_t threads() const { return workers > 0 ? workers : default_workers(); }
};

struct SimulateOptions {
    std::string rho;
    std::string n_events = "100000";
    std::uint64_t n_trajectories = 1;
    std::string psi = "exp:1";
    std::string h = "gauss:0:1";
    std::uint64_t seed = 0;
    std::string start = "stationary";

    void add(CLI::App* app) {
        app->add_option("--rho", rho, "Repetition exponent (> 2, or inf for no repetition)")->required();
        app->add_option("--n-events", n_events, "Events per trajectory")->capture_default_str();
        app->add_option("--n-trajectories", n_trajectories, "Independent trajectories")->capture_default_str();
        app->add_option("--psi", psi, "Waiting times: exp:R | lognormal:mu:sigma | empirical:path")
            ->capture_default_str();
        app->add_option("--h", h, "Increments: gauss:mu:sigma | halfgauss:mu:sigma | twopoint:a | empirical:path")
            ->capture_default_str();
        app->add_option("--seed", seed, "Root seed")->capture_default_str();
        app->add_option("--start", start, "Initial condition")
            ->check(CLI::IsMember({"stationary", "renewal"}))
            ->capture_default_str();
    }
};

struct IngestOptions {
    std::string input;
    std::string session = "09:00-17:00";
    double utc_offset_hours = 0.0;
    bool whole_file = false;
    bool stationarize = false;
    bool join = false;
    double bin_width = 300.0;
    std::uint64_t min_bin_count = 1;

    void add(CLI::App* app) {
        app->add_option("--input,-i", input, "Tick file (timestamp,price) or event file (timestamp,increment)")
            ->required();
        app->add_option("--session", session, "Daily trading window in local time, HH:MM-HH:MM")
            ->capture_default_str();
        app->add_option("--utc-offset", utc_offset_hours, "Local time minus UTC in hours")->capture_default_str();
        app->add_flag("--whole-file,!--no-whole-file", whole_file, "Treat the tick file as one session");
        app->add_flag("--stationarize,!--no-stationarize", stationarize,
                      "Divide waiting times by the intraday profile");
        app->add_flag("--join,!--no-join", join, "Concatenate sessions into one series");
        app->add_option("--bin-width", bin_width, "Intraday profile bin width in seconds")->capture_default_str();
        app->add_option("--min-bin-count", min_bin_count, "Samples below which a profile bin is interpolated")
            ->capture_default_str();
    }

    json to_json() const {
        return {{"input", input},
                {"session", session},
                {"utc-offset", utc_offset_hours},
                {"whole-file", whole_file},
                {"stationarize", stationarize},
                {"join", join},
                {"bin-width", bin_width},
                {"min-bin-count", min_bin_count}};
    }

    SessionRules rules() const {
        SessionRules r = whole_file ? SessionRules{} : SessionRules::window(session, utc_offset_hours * 3600.0);
        r.utc_offset_seconds = utc_offset_hours * 3600.0;
        r.whole_file = whole_file;
        r.validate();
        return r;
    }
};

struct AnalyzeOptions {
    IngestOptions ingest;
    std::string max_lag = "1000";
    std::string step_fit = "10:1000";
    std::string time_fit = "10:1000";
    std::string time_bins = "0.1:3000:12";
    std::uint64_t bootstrap = 200;
    std::uint64_t seed = 0;

    void add(CLI::App* app) {
        ingest.add(app);
        app->add_option("--max-lag", max_lag, "Largest step lag")->capture_default_str();
        app->add_option("--step-fit", step_fit, "Step-ACF fit range lo:hi in events")->capture_default_str();
        app->add_option("--time-fit", time_fit, "Time-ACF fit range lo:hi in seconds")->capture_default_str();
        app->add_option("--time-bins", time_bins, "Time-ACF log bins lo:hi:per_decade")->capture_default_str();
        app->add_option("--bootstrap", bootstrap, "Bootstrap replicates for slope errors (0: OLS errors)")
            ->capture_default_str();
        app->add_option("--seed", seed, "Bootstrap seed")->capture_default_str();
    }
};

struct ShuffleOptions {
    IngestOptions ingest;
    std::string time_fit = "10:1000";
    std::string time_bins = "0.1:3000:12";
    std::uint64_t bootstrap = 200;
    std::uint64_t seed = 0;

    void add(CLI::App* app) {
        ingest.add(app);
        app->add_option("--time-fit", time_fit, "Time-ACF fit range lo:hi in seconds")->capture_default_str();
        app->add_option("--time-bins", time_bins, "Time-ACF log bins lo:hi:per_decade")->capture_default_str();
        app->add_option("--bootstrap", bootstrap, "Bootstrap replicates for slope errors (0: OLS errors)")
            ->capture_default_str();
        app->add_option("--seed", seed, "Shuffle and bootstrap seed")->capture_default_str();
    }
};

struct PredictOptions {
    std::string rho;
    std::string psi = "exp:1";
    std::string h = "gauss:0:1";
    std::string max_lag = "100000";
    std::string t_grid = "1:1000:10";
    int order = 12;

    void add(CLI::App* app) {
        app->add_option("--rho", rho, "Repetition exponent (> 2)")->required();
        app->add_option("--psi", psi, "Waiting times: exp:R | lognormal:mu:sigma | empirical:path")
            ->capture_default_str();
        app->add_option("--h", h, "Increments: gauss:mu:sigma | halfgauss:mu:sigma | twopoint:a | empirical:path")
            ->capture_default_str();
        app->add_option("--max-lag", max_lag, "Largest step lag of the exact ACF")->capture_default_str();
        app->add_option("--t-grid", t_grid, "Moment times lo:hi:per_decade")->capture_default_str();
        app->add_option("--order", order, "Gaver-Stehfest order (even, 4..20)")->capture_default_str();
    }
};

// ---------------------------------------------------------------------------
// Shared analysis steps
// ---------------------------------------------------------------------------

json ingest_json(const IngestReport& r) {
    return {{"source", r.source},
            {"lines", r.lines},
            {"rejected_price", r.rejected_price},
            {"outside_session", r.outside_session},
            {"merged_ties", r.merged_ties},
            {"dropped_overnight", r.dropped_overnight},
            {"events", r.events},
            {"sessions", r.sessions}};
}

struct Prepared {
    EventSeries series;
    IngestReport report;
    std::vector<std::string> warnings;
};

Prepared prepare(const IngestOptions& o, const fs::path& dir) {
    Prepared p;
    auto loaded = load_series(o.input, o.rules());
    p.series = std::move(loaded.series);
    p.report = std::move(loaded.report);
    if (p.series.empty()) throw DomainError(o.input + ": no events inside the session windows");
    if (o.stationarize) {
        if (p.series.stationarized) {
            p.warnings.push_back("input is already stationarized; --stationarize ignored");
        } else {
            ProfileOptions po;
            po.bin_width = o.bin_width;
            po.utc_offset_seconds = o.utc_offset_hours * 3600.0;
            po.min_count = o.min_bin_count;
            const SeasonalProfile profile = build_seasonal_profile(p.series, po);
            p.series = stationarize(p.series, profile);
            const fs::path path = dir / "profile.csv";
            auto out = open_output(path);
            profile.write_csv(out);
            close_output(out, path);
        }
    }
    return p;
}

json range_json(const std::optional<ResolvableRange>& rr) {
    if (!rr) return nullptr;
    return {{"lag_min", rr->lag_min}, {"lag_max", rr->lag_max}, {"points", rr->points}, {"noise_floor", rr->noise_floor}};
}

json summary(const AcfCurve& curve, const SlopeFit& fit) {
    json j = acf_report(curve, &fit);
    for (const char* key : {"lags", "values", "std_errors", "counts"}) j.erase(key);
    return j;
}

template <class Partials>
SlopeFit fit_curve(const Partials& p, const AcfCurve& curve, Range r, std::uint64_t bootstrap, std::uint64_t seed) {
    return bootstrap > 0 ? fit_slope_bootstrap(p, r.lo, r.hi, bootstrap, seed) : fit_slope(curve, r.lo, r.hi);
}

// Fit over the requested range; failures are reported, not fatal.
template <class Partials>
json fit_block(const Partials& p, const AcfCurve& curve, Range r, std::uint64_t bootstrap, std::uint64_t seed,
               const std::string& label, std::vector<std::string>& warnings) {
    json j;
    try {
        j = summary(curve, fit_curve(p, curve, r, bootstrap, seed));
    } catch (const std::runtime_error& e) {
        j = {{"kind", to_string(curve.kind)}, {"error", e.what()}};
        warnings.push_back(label + " fit failed: " + e.what());
    } catch (const std::invalid_argument& e) {
        j = {{"kind", to_string(curve.kind)}, {"error", e.what()}};
        warnings.push_back(label + " fit failed: " + e.what());
    }
    j["requested_range"] = {r.lo, r.hi};
    j["resolvable_range"] = range_json(resolvable_range(curve, r.lo, r.hi));
    return j;
}

void write_acf(const fs::path& path, const AcfCurve& curve) {
    auto out = open_output(path);
    write_acf_csv(curve, out);
    close_output(out, path);
}

void emit_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
    for (const auto& w : warnings) err << "warning: " << w << '\n';
}

// Quantiles standing in for a large waiting-time sample.
std::vector<double> compress_sample(std::vector<double> values, std::size_t cap) {
    std::sort(values.begin(), values.end());
    if (values.size() <= cap) return values;
    std::vector<double> out(cap);
    for (std::size_t i = 0; i < cap; ++i) {
        const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(cap);
        out[i] = values[static_cast<std::size_t>(q * static_cast<double>(values.size()))];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_simulate(const SimulateOptions& o, const Common& c, std::ostream& out) {
    SimConfig cfg;
    cfg.repetition = parse_repetition(o.rho);
    cfg.waiting = parse_waiting_model(o.psi);
    cfg.increment = parse_increment_model(o.h);
    cfg.n_events = parse_count(o.n_events, "--n-events");
    cfg.n_trajectories = o.n_trajectories;
    cfg.seed = o.seed;
    cfg.start = o.start == "renewal" ? StartMode::renewal : StartMode::stationary;
    cfg.validate();

    const json config = {{"rho", o.rho},
                         {"n-events", cfg.n_events},
                         {"n-trajectories", cfg.n_trajectories},
                         {"psi", o.psi},
                         {"h", o.h},
                         {"seed", cfg.seed},
                         {"start", o.start}};
    const fs::path dir = prepare_dir(c.out);
    const EventSeries series = generate_ensemble(cfg, c.threads());
    write_events(series, dir / "events.csv");
    write_manifest(dir, "simulate", config);
    out << "simulate: " << series.size() << " events in " << series.sessions.size() << " trajectories -> "
        << (dir / "events.csv").string() << '\n';
    return exit_ok;
}

int cmd_analyze(const AnalyzeOptions& o, const Common& c, std::ostream& out, std::ostream& err) {
    const std::uint64_t max_lag = parse_count(o.max_lag, "--max-lag");
    const Range step_range = parse_range(o.step_fit, "--step-fit");
    const Range time_range = parse_range(o.time_fit, "--time-fit");
    const Grid bins = parse_grid(o.time_bins, "--time-bins");
    if (max_lag < 1) throw UsageError("--max-lag must be >= 1");
    json config = o.ingest.to_json();
    config.update(json{{"max-lag", max_lag},
                       {"step-fit", o.step_fit},
                       {"time-fit", o.time_fit},
                       {"time-bins", o.time_bins},
                       {"bootstrap", o.bootstrap},
                       {"seed", o.seed}});

    const fs::path dir = prepare_dir(c.out);
    const std::size_t workers = c.threads();
    Prepared p = prepare(o.ingest, dir);
    EventSeries series = o.ingest.join ? join_sessions(p.series, &p.warnings) : std::move(p.series);

    const auto dt = series.waiting_times();
    if (dt.size() <= max_lag + 10) {
        throw DomainError("step ACF: " + std::to_string(dt.size()) + " events are too few for --max-lag " +
                          std::to_string(max_lag));
    }
    const auto lags = mixed_lags(max_lag);
    const auto step_partials = step_acf_partials(dt, series.sessions, lags, 16, workers);
    const AcfCurve step = step_partials.finalize();
    const auto edges = log_bin_edges(bins.lo, bins.hi, bins.per_decade);
    const auto time_partials = time_acf_partials(series, edges, MarkTransform::absolute, 16, workers);
    const AcfCurve time = time_partials.finalize();

    json fits = {{"version", kVersion},
                 {"input", o.ingest.input},
                 {"ingest", ingest_json(p.report)},
                 {"stationarized", series.stationarized},
                 {"joined", o.ingest.join},
                 {"resampling_groups", step_partials.group_count()}};
    fits["step_acf"] = fit_block(step_partials, step, step_range, o.bootstrap, o.seed, "step ACF", p.warnings);
    fits["step_acf"]["series"] = "waiting_time";
    fits["time_acf"] = fit_block(time_partials, time, time_range, o.bootstrap, o.seed, "time ACF", p.warnings);
    fits["time_acf"]["mark"] = "abs_increment";
    fits["warnings"] = p.warnings;

    write_acf(dir / "step_acf.csv", step);
    write_acf(dir / "time_acf.csv", time);
    write_json(dir / "fits.json", fits);
    write_manifest(dir, "analyze", config);
    emit_warnings(p.warnings, err);
    auto slope = [](const json& j) {
        return j.contains("slope") ? format_double(j["slope"].get<double>()) + " +- " +
                                         format_double(j["std_error"].get<double>())
                                   : std::string("n/a");
    };
    out << "analyze: " << series.size() << " events, step slope " << slope(fits["step_acf"]) << ", time slope "
        << slope(fits["time_acf"]) << " -> " << (dir / "fits.json").string() << '\n';
    return exit_ok;
}

int cmd_shuffle_test(const ShuffleOptions& o, const Common& c, std::ostream& out, std::ostream& err) {
    const Range fit_range = parse_range(o.time_fit, "--time-fit");
    const Grid bins = parse_grid(o.time_bins, "--time-bins");
    json config = o.ingest.to_json();
    config.update(json{{"time-fit", o.time_fit},
                       {"time-bins", o.time_bins},
                       {"bootstrap", o.bootstrap},
                       {"seed", o.seed}});

    const fs::path dir = prepare_dir(c.out);
    const std::size_t workers = c.threads();
    Prepared p = prepare(o.ingest, dir);
    const auto edges = log_bin_edges(bins.lo, bins.hi, bins.per_decade);

    struct Variant {
        SurrogateKind kind;
        const char* file;
    };
    const Variant variants[] = {{SurrogateKind::original, "time_acf_original.csv"},
                                {SurrogateKind::shuffle_dt, "time_acf_dt.csv"},
                                {SurrogateKind::shuffle_dx, "time_acf_dx.csv"},
                                {SurrogateKind::shuffle_both, "time_acf_both.csv"}};
    json curves = json::object();
    std::map<SurrogateKind, AcfCurve> results;
    std::map<SurrogateKind, std::optional<SlopeFit>> fitted;
    for (const auto& v : variants) {
        EventSeries s = make_surrogate(p.series, v.kind, o.seed, workers);
        if (o.ingest.join) s = join_sessions(s, v.kind == SurrogateKind::original ? &p.warnings : nullptr);
        const auto partials = time_acf_partials(s, edges, MarkTransform::absolute, 16, workers);
        const AcfCurve curve = partials.finalize();
        const auto rr = resolvable_range(curve, fit_range.lo, fit_range.hi);
        json j;
        try {
            if (!rr || rr->points < 5) {
                throw DomainError("fewer than 5 points above the noise floor in [" + format_double(fit_range.lo) +
                                  ", " + format_double(fit_range.hi) + "]");
            }
            const SlopeFit f = fit_curve(partials, curve, {rr->lag_min, rr->lag_max}, o.bootstrap, o.seed);
            fitted[v.kind] = f;
            j = summary(curve, f);
        } catch (const std::exception& e) {
            j = {{"kind", "time"}, {"error", e.what()}};
            if (v.kind != SurrogateKind::shuffle_both) p.warnings.push_back(to_string(v.kind) + " fit failed: " + e.what());
        }
        j["requested_range"] = {fit_range.lo, fit_range.hi};
        j["resolvable_range"] = range_json(rr);
        curves[to_string(v.kind)] = j;
        write_acf(dir / v.file, curve);
        results.emplace(v.kind, curve);
    }

    auto compare = [&](SurrogateKind a, SurrogateKind b) -> json {
        if (!fitted[a] || !fitted[b]) return {{"error", "slope unavailable"}};
        const double diff = fitted[a]->slope - fitted[b]->slope;
        const double se = std::hypot(fitted[a]->std_error, fitted[b]->std_error);
        return {{"difference", diff}, {"combined_se", se}, {"z", se > 0.0 ? diff / se : 0.0}};
    };
    json comparisons = {{"shuffle_dx_minus_original", compare(SurrogateKind::shuffle_dx, SurrogateKind::original)},
                        {"shuffle_dt_minus_original", compare(SurrogateKind::shuffle_dt, SurrogateKind::original)}};

    // Independent marks on a renewal process, session by session, with each
    // session's own waiting-time law, rate and mark mean, pooled the way the
    // estimator pools sessions.
    const EventSeries& series = p.series;
    std::vector<Session> sessions = series.sessions;
    if (sessions.empty()) sessions.push_back({0, series.size(), series.times.empty() ? 0.0 : series.times.front(), 0.0});
    const auto all_dt = series.waiting_times();
    long double n_all = 0.0L, t_all = 0.0L, s1_all = 0.0L, s2_all = 0.0L;
    std::vector<CurvePoint> mixture(edges.size() - 1);
    for (const Session& ss : sessions) {
        if (ss.size() < 2) continue;
        const double duration = series.times[ss.end - 1] - std::min(ss.origin, series.times[ss.begin]);
        if (!(duration > 0.0)) continue;
        long double s1 = 0.0L, s2 = 0.0L;
        for (std::size_t i = ss.begin; i < ss.end; ++i) {
            const double m = std::fabs(series.increments[i]);
            s1 += m;
            s2 += static_cast<long double>(m) * m;
        }
        const double n = static_cast<double>(ss.size());
        n_all += n;
        t_all += duration;
        s1_all += s1;
        s2_all += s2;
        std::vector<double> dt(all_dt.begin() + static_cast<std::ptrdiff_t>(ss.begin),
                               all_dt.begin() + static_cast<std::ptrdiff_t>(ss.end));
        const auto waiting = WaitingTimeModel::empirical(compress_sample(std::move(dt), std::size_t{1} << 12));
        const auto k = renewal_excess_density(waiting, edges, workers);
        const double lambda = n / duration;
        const double m = static_cast<double>(s1 / n);
        const double weight = duration * lambda * m * m;
        for (std::size_t bin = 0; bin < k.size(); ++bin) {
            mixture[bin].x = k[bin].x;
            mixture[bin].value += weight * (lambda + k[bin].value);
            mixture[bin].error += weight * k[bin].error;
        }
    }
    if (!(n_all > 0.0L) || !(t_all > 0.0L)) throw DomainError("shuffle-test: no session spans a positive time");
    const double rate = static_cast<double>(n_all / t_all);
    const double mark_rate = static_cast<double>(s1_all / t_all);
    const double mark_mean = static_cast<double>(s1_all / n_all);
    const double mark_var = static_cast<double>(s2_all / n_all) - mark_mean * mark_mean;
    if (!(mark_var > 0.0)) throw DomainError("shuffle-test: increments have zero variance");
    std::vector<CurvePoint> baseline = mixture;
    for (auto& pt : baseline) {
        const double norm = rate * rate * mark_var;
        pt.value = (pt.value / static_cast<double>(t_all) - mark_rate * mark_rate) / norm;
        pt.error = pt.error / static_cast<double>(t_all) / norm;
    }
    {
        const fs::path path = dir / "time_acf_baseline.csv";
        auto f = open_output(path);
        const std::pair<std::string, std::string> meta[] = {
            {"model", "per-session renewal processes with the observed waiting times and independent marks"}};
        write_curve_csv(f, "lag", baseline, meta);
        close_output(f, path);
    }
    const AcfCurve& both = results.at(SurrogateKind::shuffle_both);
    std::size_t used = 0, outside = 0;
    double max_z = 0.0;
    for (std::size_t b = 0; b < both.size(); ++b) {
        if (both.lags[b] < fit_range.lo || both.lags[b] > fit_range.hi || both.missing(b)) continue;
        const double se = std::hypot(both.std_errors[b], baseline[b].error);
        if (!(se > 0.0)) continue;
        const double z = std::fabs(both.values[b] - baseline[b].value) / se;
        ++used;
        outside += z > 3.0;
        max_z = std::max(max_z, z);
    }
    json independence = {{"bins", used},
                         {"bins_beyond_3se", outside},
                         {"max_abs_z", max_z},
                         {"consistent", used > 0 && outside == 0}};

    json report = {{"version", kVersion},
                   {"input", o.ingest.input},
                   {"seed", o.seed},
                   {"ingest", ingest_json(p.report)},
                   {"stationarized", p.series.stationarized},
                   {"joined", o.ingest.join},
                   {"curves", curves},
                   {"comparisons", comparisons},
                   {"independence_baseline", independence},
                   {"warnings", p.warnings}};
    write_json(dir / "report.json", report);
    write_manifest(dir, "shuffle-test", config);
    emit_warnings(p.warnings, err);
    out << "shuffle-test: " << p.series.size() << " events; shuffle_both "
        << (independence["consistent"].get<bool>() ? "consistent" : "inconsistent")
        << " with the independence baseline -> " << (dir / "report.json").string() << '\n';
    return exit_ok;
}

int cmd_predict(const PredictOptions& o, const Common& c, std::ostream& out, std::ostream& err) {
    const RepetitionDistribution rep = parse_repetition(o.rho);
    if (!rep.ergodic()) throw DomainError("non-ergodic regime: rho must exceed 2");
    const WaitingTimeModel waiting = parse_waiting_model(o.psi);
    const IncrementModel increment = parse_increment_model(o.h);
    const std::uint64_t max_lag = parse_count(o.max_lag, "--max-lag");
    const Grid grid = parse_grid(o.t_grid, "--t-grid");
    if (o.order < 4 || o.order > 20 || o.order % 2 != 0) throw UsageError("--order must be even in [4, 20]");
    const json config = {{"rho", o.rho},         {"psi", o.psi},         {"h", o.h},
                         {"max-lag", max_lag},   {"t-grid", o.t_grid},   {"order", o.order}};
    const fs::path dir = prepare_dir(c.out);
    const std::size_t workers = c.threads();
    std::vector<std::string> warnings;

    const auto exps = asymptotic_moment_exponents(rep.rho(), increment.mu1() == 0.0);
    const double slope = step_acf_asymptotic_slope(rep);
    {
        std::vector<CurvePoint> points;
        for (std::uint64_t lag : mixed_lags(max_lag)) {
            const double v = step_acf_exact(rep, static_cast<std::int64_t>(lag));
            points.push_back({static_cast<double>(lag), v, 1e-12 * std::fabs(v)});
        }
        const std::vector<std::pair<std::string, std::string>> meta = {
            {"rho", o.rho},
            {"step_acf_asymptotic_slope", format_double(slope)},
            {"time_acf_exponent", format_double(exps.acf_exp)},
            {"m1_powerlaw_exponent", format_double(exps.m1_powerlaw_exp)},
            {"variance_powerlaw_exponent", format_double(exps.variance_powerlaw_exp)},
            {"diffusion_exponent", format_double(exps.diffusion_exp)}};
        const fs::path path = dir / "analytic_step_acf.csv";
        auto f = open_output(path);
        write_curve_csv(f, "lag", points, meta);
        close_output(f, path);
    }

    const auto t_grid = log_grid(grid.lo, grid.hi, grid.per_decade);
    const auto s_grid = stehfest_abscissae(t_grid, o.order);
    const LaplaceMoment lm = laplace_moments(s_grid, waiting, increment, rep, 1e-13, workers);
    const auto rows = invert_laplace(lm, t_grid, o.order, o.order - 2);
    std::size_t unreliable = 0;
    {
        const fs::path path = dir / "moments.csv";
        auto f = open_output(path);
        f << "# start=renewal\n# psi=" << o.psi << "\n# h=" << o.h << "\n# rho=" << o.rho
          << "\n# order=" << o.order << "\nt,m1,m2,variance,m1_sensitivity,m2_sensitivity,reliable\n";
        std::string line;
        for (const auto& r : rows) {
            line.clear();
            for (double v : {r.t, r.m1, r.m2, r.variance, r.m1_sensitivity, r.m2_sensitivity}) {
                append_double(line, v);
                line += ',';
            }
            line += r.reliable ? "1\n" : "0\n";
            f << line;
            unreliable += !r.reliable;
        }
        close_output(f, path);
    }
    if (unreliable > 0) {
        warnings.push_back(std::to_string(unreliable) + " of " + std::to_string(rows.size()) +
                           " inverted moment rows are unreliable (reliable=0 in moments.csv)");
    }

    {
        const auto predicted = appendix_coefficients(rep, waiting);
        const auto measured = measure_appendix_coefficients(rep, waiting);
        const fs::path path = dir / "laplace_check.csv";
        auto f = open_output(path);
        f << "coefficient,predicted,measured,relative_difference\n";
        auto row = [&](const char* name, double a, double b) {
            std::string line = name;
            line += ',';
            append_double(line, a);
            line += ',';
            append_double(line, b);
            line += ',';
            append_double(line, std::fabs(b - a) / std::fabs(a));
            f << line << '\n';
        };
        row("C0_0", 1.0, measured.C0_0);
        row("C1_0_over_C0_1", predicted.ratio_C10_over_C01, measured.ratio_C10_over_C01);
        row("D0_0", predicted.D0_0, measured.D0_0);
        close_output(f, path);
    }
    write_manifest(dir, "predict", config);
    emit_warnings(warnings, err);
    out << "predict: rho " << o.rho << ", step ACF slope " << format_double(slope) << ", " << rows.size()
        << " moment rows (" << unreliable << " unreliable) -> " << dir.string() << '\n';
    return exit_ok;
}

// Moves "--config FILE" out of args and splices the file's settings in as
// "--key=value" right after the subcommand, so later flags override them.
std::vector<std::string> expand_config(std::vector<std::string> args, const std::vector<std::string>& commands) {
    std::optional<std::string> path;
    for (std::size_t i = 0; i < args.size();) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw UsageError("--config needs a file");
            path = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
        } else {
            ++i;
        }
    }
    if (!path) return args;
    std::string command;
    const auto pairs = read_config_file(*path, &command);
    auto it = std::find_if(args.begin(), args.end(), [&](const std::string& a) {
        return std::find(commands.begin(), commands.end(), a) != commands.end();
    });
    if (it == args.end()) {
        if (command.empty()) throw UsageError("no command given and " + *path + " names none");
        args.insert(args.begin(), command);
        it = args.begin();
    } else if (!command.empty() && command != *it) {
        throw UsageError(*path + " is a manifest of '" + command + "', not '" + *it + "'");
    }
    std::vector<std::string> spliced;
    for (const auto& [k, v] : pairs) spliced.push_back("--" + k + "=" + v);
    args.insert(it + 1, spliced.begin(), spliced.end());
    return args;
}

}  // namespace

// ---------------------------------------------------------------------------
// Parsers
// ---------------------------------------------------------------------------

WaitingTimeModel parse_waiting_model(std::string_view text) {
    const auto parts = split(text, ':');
    const std::string& kind = parts[0];
    if (kind == "exp" && parts.size() == 2) return WaitingTimeModel::exponential(number(parts[1], "--psi exp rate"));
    if (kind == "lognormal" && parts.size() == 3) {
        return WaitingTimeModel::lognormal(number(parts[1], "--psi lognormal mu"), number(parts[2], "--psi lognormal sigma"));
    }
    if (kind == "empirical" && parts.size() >= 2) {
        return WaitingTimeModel::load_empirical_csv(std::string(text.substr(text.find(':') + 1)));
    }
    throw UsageError("--psi: expected exp:R, lognormal:mu:sigma or empirical:path, got '" + std::string(text) + "'");
}

IncrementModel parse_increment_model(std::string_view text) {
    const auto parts = split(text, ':');
    const std::string& kind = parts[0];
    if ((kind == "gauss" || kind == "halfgauss") && parts.size() == 3) {
        auto h = IncrementModel::gaussian(number(parts[1], "--h mu"), number(parts[2], "--h sigma"));
        return kind == "halfgauss" ? h.rectified() : h;
    }
    if (kind == "twopoint" && parts.size() == 2) return IncrementModel::two_point(number(parts[1], "--h twopoint a"));
    if (kind == "empirical" && parts.size() >= 2) {
        return IncrementModel::empirical(read_column(std::string(text.substr(text.find(':') + 1))));
    }
    throw UsageError("--h: expected gauss:mu:sigma, halfgauss:mu:sigma, twopoint:a or empirical:path, got '" +
                     std::string(text) + "'");
}

RepetitionDistribution parse_repetition(std::string_view text) {
    const std::string t = trim(text);
    if (t == "inf" || t == "none") return RepetitionDistribution::unit();
    const double rho = number(t, "--rho");
    if (!(rho > 2.0)) {
        throw DomainError("non-ergodic regime: rho must exceed 2 (got " + t +
                          "); the stationary repetition law does not exist");
    }
    if (!std::isfinite(rho)) return RepetitionDistribution::unit();
    return RepetitionDistribution::zeta(rho);
}

std::uint64_t parse_count(std::string_view text, std::string_view what) {
    const double v = number(text, what);
    if (!(v >= 0.0) || v != std::floor(v) || v > 9.0e18) {
        throw UsageError(std::string(what) + ": expected a non-negative integer, got '" + std::string(text) + "'");
    }
    return static_cast<std::uint64_t>(v);
}

std::vector<std::pair<std::string, std::string>> read_config_file(const fs::path& path, std::string* command) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    auto normalize = [](std::string key) {
        key = trim(key);
        while (!key.empty() && key.front() == '-') key.erase(key.begin());
        std::replace(key.begin(), key.end(), '_', '-');
        return key;
    };
    std::vector<std::pair<std::string, std::string>> pairs;
    const std::string first = trim(text);
    if (!first.empty() && first.front() == '{') {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw UsageError(path.string() + ": invalid JSON: " + e.what());
        }
        if (command && j.contains("command") && j["command"].is_string()) *command = j["command"].get<std::string>();
        const json& cfg = j.contains("config") && j["config"].is_object() ? j["config"] : j;
        for (const auto& [k, v] : cfg.items()) {
            if (&cfg == &j && (k == "command" || k == "version")) continue;
            std::string value;
            if (v.is_string()) {
                value = v.get<std::string>();
            } else if (v.is_boolean()) {
                value = v.get<bool>() ? "true" : "false";
            } else if (v.is_number_integer() || v.is_number_unsigned()) {
                value = v.dump();
            } else if (v.is_number_float()) {
                value = format_double(v.get<double>());
            } else if (v.is_null()) {
                continue;
            } else {
                throw UsageError(path.string() + ": value of '" + k + "' must be a string, number or boolean");
            }
            pairs.emplace_back(normalize(k), value);
        }
        return pairs;
    }
    std::istringstream lines(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw UsageError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
        }
        const std::string key = normalize(t.substr(0, eq));
        if (key == "command") {
            if (command) *command = trim(t.substr(eq + 1));
            continue;
        }
        pairs.emplace_back(key, trim(t.substr(eq + 1)));
    }
    return pairs;
}

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Continuous-time random walk with repeated waiting times", "ctrw"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    Common common;
    SimulateOptions sim;
    AnalyzeOptions analyze;
    ShuffleOptions shuffle;
    PredictOptions predict;
    CLI::App* sim_cmd = app.add_subcommand("simulate", "Simulate trajectories and write events.csv");
    CLI::App* analyze_cmd = app.add_subcommand("analyze", "Step and time ACF of an event or tick file");
    CLI::App* shuffle_cmd = app.add_subcommand("shuffle-test", "Time ACF of |dx| for shuffled surrogates");
    CLI::App* predict_cmd = app.add_subcommand("predict", "Exact step ACF and Laplace-inverted moments");
    for (CLI::App* cmd : {sim_cmd, analyze_cmd, shuffle_cmd, predict_cmd}) {
        cmd->set_help_flag("--help", "Print this help message and exit");
    }
    sim.add(sim_cmd);
    analyze.add(analyze_cmd);
    shuffle.add(shuffle_cmd);
    predict.add(predict_cmd);
    for (CLI::App* cmd : {sim_cmd, analyze_cmd, shuffle_cmd, predict_cmd}) common.add(cmd);

    try {
        args = expand_config(std::move(args), {"simulate", "analyze", "shuffle-test", "predict"});
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? exit_ok : exit_usage;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    }

    try {
        if (sim_cmd->parsed()) return cmd_simulate(sim, common, out);
        if (analyze_cmd->parsed()) return cmd_analyze(analyze, common, out, err);
        if (shuffle_cmd->parsed()) return cmd_shuffle_test(shuffle, common, out, err);
        return cmd_predict(predict, common, out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return exit_domain;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_numeric;
    }
}

}  // namespace ctrw::cli
