// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion ...]   (all criteria when none is given)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctrw/analytic.hpp"
#include "ctrw/cli.hpp"
#include "ctrw/data.hpp"
#include "ctrw/dist.hpp"
#include "ctrw/estim.hpp"
#include "ctrw/parallel.hpp"
#include "ctrw/sim.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

namespace fs = std::filesystem;
using namespace ctrw;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s.precision(digits);
    s << v;
    return s.str();
}

std::size_t workers() { return default_workers(); }

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "ctrw_acceptance" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    return nlohmann::json::parse(in);
}

int cli(std::vector<std::string> args, std::string* err_text = nullptr) {
    std::ostringstream out, err;
    const int code = cli::run(std::move(args), out, err);
    if (err_text) *err_text = err.str();
    return code;
}

AcfCurve curve_of(const std::vector<double>& lags, const std::vector<double>& values) {
    AcfCurve c;
    c.lags = lags;
    c.values = values;
    c.std_errors.assign(lags.size(), 0.0);
    c.pair_counts.assign(lags.size(), 1);
    return c;
}

// 1. closed-form Omega_1 against the definitional double sum
Outcome criterion1() {
    double worst = 0.0;
    for (double rho : {2.2, 2.5, 3.0, 3.5, 5.0}) {
        const auto rep = RepetitionDistribution::zeta(rho);
        const oracle::Omega1DoubleSum sum(rho, 200000);
        for (std::uint64_t n = 0; n <= 100; ++n) {
            const double ref = sum(n);
            worst = std::max(worst, std::fabs(rep.omega1(n) - ref) / std::fabs(ref));
        }
    }
    return {worst <= 1e-10, "max relative difference " + fmt(worst) + " (tolerance 1e-10)"};
}

// 2. slope of the exact step ACF on [1e3, 1e5]
Outcome criterion2() {
    bool pass = true;
    std::string detail;
    for (double rho : {2.25, 2.5, 3.0}) {
        const auto rep = RepetitionDistribution::zeta(rho);
        std::vector<double> lags, values;
        for (double n : log_grid(1e3, 1e5, 20)) {
            const auto k = static_cast<std::int64_t>(std::llround(n));
            lags.push_back(static_cast<double>(k));
            values.push_back(step_acf_exact(rep, k));
        }
        const SlopeFit f = fit_slope(curve_of(lags, values), 1e3, 1e5);
        const bool ok = std::fabs(f.slope + (rho - 2.0)) <= 0.02;
        pass = pass && ok;
        detail += "rho=" + fmt(rho) + " slope " + fmt(f.slope) + "; ";
    }
    return {pass, detail + "target -(rho-2) +- 0.02"};
}

// 3. simulated step ACF against Omega_1 at every lag in [1, 1000]
Outcome criterion3() {
    SimConfig cfg;
    cfg.repetition = RepetitionDistribution::zeta(2.5);
    cfg.waiting = WaitingTimeModel::exponential(1.0);
    cfg.n_events = 10'000'000;
    cfg.n_trajectories = 1;
    cfg.seed = 3001;
    const EventSeries s = generate_ensemble(cfg, workers());
    const auto dt = s.waiting_times();
    const auto partials = step_acf_partials(dt, s.sessions, all_lags(1000), 16, workers());
    const AcfCurve c = partials.finalize();
    std::size_t outside = 0;
    double max_z = 0.0, lag_of_max = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (c.lags[i] < 1) continue;
        const double exact = step_acf_exact(cfg.repetition, static_cast<std::int64_t>(c.lags[i]));
        const double z = std::fabs(c.values[i] - exact) / c.std_errors[i];
        outside += z > 3.0;
        if (z > max_z) {
            max_z = z;
            lag_of_max = c.lags[i];
        }
    }
    return {outside == 0, std::to_string(outside) + " of 1000 lags beyond 3 SE; max |z| " + fmt(max_z) + " at lag " +
                              fmt(lag_of_max) + "; " + std::to_string(partials.group_count()) +
                              " jackknife groups"};
}

// 4. ensemble variance slope over t in [1e2, 1e4]
Outcome criterion4() {
    bool pass = true;
    std::string detail;
    const auto grid = log_grid(1e2, 1e4, 10);
    for (auto [rho, target, tol] : {std::tuple{2.5, 1.5, 0.1}, std::tuple{4.5, 1.0, 0.05}}) {
        SimConfig cfg;
        cfg.repetition = RepetitionDistribution::zeta(rho);
        cfg.waiting = WaitingTimeModel::exponential(1.0);
        cfg.increment = IncrementModel::gaussian(1.0, 1.0);
        // event cap only; trajectories stop at the last sample time
        cfg.n_events = 1'000'000'000;
        cfg.n_trajectories = 10'000;
        cfg.seed = 4001 + static_cast<std::uint64_t>(rho * 10);
        const auto rows = ensemble_moments(cfg, grid, workers());
        std::vector<double> t, v;
        for (const auto& r : rows) {
            t.push_back(r.t);
            v.push_back(r.variance);
        }
        const SlopeFit f = fit_slope(curve_of(t, v), 1e2, 1e4);
        const bool ok = std::fabs(f.slope - target) <= tol;
        pass = pass && ok;
        detail += "rho=" + fmt(rho) + " slope " + fmt(f.slope) + " (target " + fmt(target) + " +- " + fmt(tol) + "); ";
    }
    return {pass, detail + "mu1=1, sigma=1, 1e4 trajectories"};
}

// 5. time-ACF slope of |dx| vs -0.5 and vs the step-ACF slope
Outcome criterion5() {
    SimConfig cfg;
    cfg.repetition = RepetitionDistribution::zeta(2.5);
    cfg.waiting = WaitingTimeModel::exponential(1.0);
    cfg.increment = IncrementModel::gaussian(0.0, 1.0).rectified();
    cfg.n_events = 1'000'000;
    cfg.n_trajectories = 10;
    const auto lags = mixed_lags(1000);
    const auto edges = log_bin_edges(1.0, 3000.0, 12);
    StepAcfPartials step;
    TimeAcfPartials time;
    for (std::uint64_t batch = 0; batch < 10; ++batch) {
        cfg.seed = 5001 + batch;
        const EventSeries s = generate_ensemble(cfg, workers());
        auto sp = step_acf_partials(s.waiting_times(), s.sessions, lags, 16, workers());
        auto tp = time_acf_partials(s, edges, MarkTransform::absolute, 16, workers());
        if (batch == 0) {
            step = std::move(sp);
            time = std::move(tp);
        } else {
            step.append(sp);
            time.append(tp);
        }
    }
    const SlopeFit fs_ = fit_slope_bootstrap(step, 10, 1000, 200, 5101);
    const SlopeFit ft = fit_slope_bootstrap(time, 10, 1000, 200, 5102);
    const double se = std::hypot(fs_.std_error, ft.std_error);
    const bool near = std::fabs(ft.slope + 0.5) <= 0.1;
    const bool equal = std::fabs(ft.slope - fs_.slope) <= se;
    return {near && equal, "time slope " + fmt(ft.slope) + " +- " + fmt(ft.std_error) + ", step slope " +
                               fmt(fs_.slope) + " +- " + fmt(fs_.std_error) + ", difference " +
                               fmt(ft.slope - fs_.slope) + " vs combined SE " + fmt(se) + "; 1e8 events"};
}

// 6. signed time ACF with symmetric increments
Outcome criterion6() {
    SimConfig cfg;
    cfg.repetition = RepetitionDistribution::zeta(2.5);
    cfg.waiting = WaitingTimeModel::exponential(1.0);
    cfg.increment = IncrementModel::gaussian(0.0, 1.0);
    cfg.n_events = 100'000;
    cfg.n_trajectories = 100;
    cfg.seed = 6001;
    const EventSeries s = generate_ensemble(cfg, workers());
    const auto edges = log_bin_edges(1.0, 3000.0, 12);
    const auto partials = time_acf_partials(s, edges, MarkTransform::signed_value, 16, workers());
    const AcfCurve c = partials.finalize();
    double max_z = 0.0, floor = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (c.missing(i)) continue;
        max_z = std::max(max_z, std::fabs(c.values[i]) / c.std_errors[i]);
        floor = std::max(floor, 3.0 * c.std_errors[i]);
    }
    const auto rr = resolvable_range(c, 1.0, 1000.0);
    const std::string noise = "noise floor (3 SE) up to " + fmt(floor) + ", max |C|/SE " + fmt(max_z);
    if (!rr || rr->points < 5) {
        return {false, "no resolvable range in [1, 1000]: the curve is at the noise floor from the first bin; " +
                           noise};
    }
    const SlopeFit f = fit_slope_bootstrap(partials, rr->lag_min, rr->lag_max, 200, 6002);
    return {f.slope <= -(2.5 - 1.0) + 0.15, "slope " + fmt(f.slope) + " over [" + fmt(rr->lag_min) + ", " +
                                                 fmt(rr->lag_max) + "]; " + noise};
}

// 7. shuffle test on model data through the command line
Outcome criterion7() {
    const fs::path sim = scratch("c7_sim"), out = scratch("c7_out");
    std::string err;
    if (cli({"simulate", "--rho", "2.5", "--psi", "lognormal:0:1", "--h", "gauss:0:1", "--n-events", "1e5",
             "--n-trajectories", "100", "--seed", "7001", "--out", sim.string()},
            &err) != 0) {
        return {false, "simulate failed: " + err};
    }
    if (cli({"shuffle-test", "--input", (sim / "events.csv").string(), "--whole-file", "--time-fit", "1:100",
             "--seed", "7002", "--out", out.string()},
            &err) != 0) {
        return {false, "shuffle-test failed: " + err};
    }
    const auto r = read_json(out / "report.json");
    const auto& dx = r["comparisons"]["shuffle_dx_minus_original"];
    const auto& dt = r["comparisons"]["shuffle_dt_minus_original"];
    const auto& ind = r["independence_baseline"];
    if (!dx.contains("difference") || !dt.contains("difference")) return {false, "slopes unavailable: " + r.dump()};
    const double d_dx = dx["difference"], se_dx = dx["combined_se"], d_dt = dt["difference"];
    const bool ok_dx = std::fabs(d_dx) <= se_dx;
    const bool ok_dt = d_dt <= -0.3;
    const bool ok_ind = ind["consistent"].get<bool>();
    return {ok_dx && ok_dt && ok_ind,
            "shuffle_dx - original " + fmt(d_dx) + " (combined SE " + fmt(se_dx) + "); shuffle_dt - original " +
                fmt(d_dt) + "; shuffle_both vs baseline: " + std::to_string(ind["bins_beyond_3se"].get<int>()) +
                " of " + std::to_string(ind["bins"].get<int>()) + " bins beyond 3 SE, max |z| " +
                fmt(ind["max_abs_z"].get<double>())};
}

// 8. inverted Laplace moments against Monte Carlo, and expansion identities
Outcome criterion8() {
    const auto rep = RepetitionDistribution::zeta(3.5);
    const auto waiting = WaitingTimeModel::exponential(1.0);
    const auto increment = IncrementModel::gaussian(1.0, 1.0);
    const auto grid = log_grid(10.0, 100.0, 10);
    const auto s_grid = stehfest_abscissae(grid, 12);
    const auto lm = laplace_moments(s_grid, waiting, increment, rep, 1e-13, workers());
    const auto inv = invert_laplace(lm, grid, 12, 10);

    SimConfig cfg;
    cfg.repetition = rep;
    cfg.waiting = waiting;
    cfg.increment = increment;
    cfg.start = StartMode::renewal;
    cfg.n_events = 1000;
    cfg.n_trajectories = 100'000;
    cfg.seed = 8001;
    const auto mc = ensemble_moments(cfg, grid, workers());

    double max_z = 0.0;
    std::size_t outside = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double z1 = std::fabs(inv[i].m1 - mc[i].m1) / std::hypot(mc[i].se_m1, inv[i].m1_sensitivity);
        const double z2 = std::fabs(inv[i].m2 - mc[i].m2) / std::hypot(mc[i].se_m2, inv[i].m2_sensitivity);
        outside += (z1 > 3.0) + (z2 > 3.0);
        max_z = std::max({max_z, z1, z2});
    }
    const auto measured = measure_appendix_coefficients(rep, waiting);
    const double e_c00 = std::fabs(measured.C0_0 - 1.0);
    const double e_ratio = std::fabs(measured.ratio_C10_over_C01 / (-1.0 / waiting.mean()) - 1.0);
    const double e_d00 = std::fabs(measured.D0_0 / (oracle::zeta(2.5) / oracle::zeta(3.5) - 1.0) - 1.0);
    const double e_worst = std::max({e_c00, e_ratio, e_d00});
    return {outside == 0 && e_worst <= 0.005,
            std::to_string(outside) + " of " + std::to_string(2 * grid.size()) + " moment values beyond 3 SE (max |z| " +
                fmt(max_z) + "); identity errors C00 " + fmt(e_c00) + ", C10/C01 " + fmt(e_ratio) + ", D00 " +
                fmt(e_d00) + " (tolerance 0.005)"};
}

// 9. planted intraday profile: raw vs stationarized step-ACF slope
Outcome criterion9() {
    synthetic::SeasonalSpec spec;
    spec.repetition = RepetitionDistribution::zeta(2.5);
    spec.sessions = 290;
    spec.seed = 9001;
    EventSeries raw;
    for (int batch = 0; batch < 15; ++batch) {
        spec.first_session = batch * spec.sessions;
        IngestReport report;
        const EventSeries part =
            events_from_ticks(synthetic::seasonal_ticks(spec), SessionRules::window("09:00-17:00"), report);
        const std::size_t shift = raw.size();
        raw.times.insert(raw.times.end(), part.times.begin(), part.times.end());
        raw.increments.insert(raw.increments.end(), part.increments.begin(), part.increments.end());
        for (Session s : part.sessions) {
            s.begin += shift;
            s.end += shift;
            raw.sessions.push_back(s);
        }
    }
    const std::size_t events = raw.size(), sessions = raw.sessions.size();
    const auto lags = mixed_lags(1000);
    auto slope = [&](const EventSeries& s, std::uint64_t seed, std::string& text) -> std::optional<SlopeFit> {
        const auto partials = step_acf_partials(s.waiting_times(), s.sessions, lags, 16, workers());
        try {
            const SlopeFit f = fit_slope_bootstrap(partials, 10, 1000, 200, seed);
            text = fmt(f.slope) + " +- " + fmt(f.std_error);
            return f;
        } catch (const std::exception& e) {
            text = std::string("fit invalid (") + e.what() + ")";
            return std::nullopt;
        }
    };
    std::string raw_text, flat_text;
    const auto f_raw = slope(raw, 9002, raw_text);
    EventSeries flat = stationarize(raw, build_seasonal_profile(raw));
    raw = EventSeries{};
    const auto f_flat = slope(flat, 9003, flat_text);
    const bool flat_ok = f_flat && std::fabs(f_flat->slope + 0.5) <= 0.1;
    const bool raw_off = !f_raw || std::fabs(f_raw->slope + 0.5) > 0.1;
    return {flat_ok && raw_off, "stationarized slope " + flat_text + ", raw slope " + raw_text + "; " +
                                    std::to_string(events) + " events in " + std::to_string(sessions) +
                                    " sessions"};
}

std::map<std::string, std::string> file_bytes(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        files[e.path().filename().string()] = ss.str();
    }
    return files;
}

// 10. reruns from the manifest with another worker count are byte-identical
Outcome criterion10() {
    const fs::path base = scratch("c10");
    const std::string events = (base / "sim1" / "events.csv").string();
    const std::vector<std::pair<std::string, std::vector<std::string>>> commands = {
        {"sim", {"simulate", "--rho", "2.5", "--psi", "lognormal:0:1", "--h", "halfgauss:0:1", "--n-events", "2e4",
                 "--n-trajectories", "24", "--seed", "10001"}},
        {"analyze", {"analyze", "--input", events, "--whole-file", "--max-lag", "300", "--seed", "10002"}},
        {"shuffle", {"shuffle-test", "--input", events, "--whole-file", "--time-fit", "1:100", "--bootstrap", "50",
                     "--seed", "10003"}},
        {"predict", {"predict", "--rho", "2.7", "--psi", "exp:1", "--h", "gauss:1:1", "--t-grid", "1:1000:5"}},
    };
    std::string detail;
    bool pass = true;
    for (const auto& [name, args] : commands) {
        const fs::path first = base / (name + "1"), second = base / (name + "4");
        auto a = args;
        a.insert(a.end(), {"--workers", "1", "--out", first.string()});
        std::string err;
        if (cli(a, &err) != 0) return {false, name + " failed: " + err};
        if (cli({"--config", (first / "manifest.json").string(), "--workers", "4", "--out", second.string()}, &err) !=
            0) {
            return {false, name + " rerun failed: " + err};
        }
        const auto x = file_bytes(first), y = file_bytes(second);
        const bool same = x == y;
        pass = pass && same;
        detail += name + " (" + std::to_string(x.size()) + " files) " + (same ? "identical" : "DIFFERENT") + "; ";
    }
    return {pass, detail + "workers 1 vs 4"};
}

struct Criterion {
    int id;
    double limit_seconds;  // 0: no runtime bound
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all = {
        {1, 60, criterion1},   {2, 60, criterion2},  {3, 300, criterion3}, {4, 900, criterion4},
        {5, 600, criterion5},  {6, 0, criterion6},   {7, 600, criterion7}, {8, 300, criterion8},
        {9, 300, criterion9},  {10, 0, criterion10},
    };
    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
    bool all_pass = true;
    for (const auto& c : all) {
        if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::string timing = fmt(secs, 3) + " s";
        if (c.limit_seconds > 0) {
            timing += " (limit " + fmt(c.limit_seconds, 4) + " s)";
            if (secs > c.limit_seconds) o.pass = false;
        }
        all_pass = all_pass && o.pass;
        std::cout << "criterion " << c.id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "  ["
                  << timing << "]" << std::endl;
    }
    return all_pass ? 0 : 1;
}
