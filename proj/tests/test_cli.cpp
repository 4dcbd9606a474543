#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ctrw/cli.hpp"
#include "ctrw/data.hpp"
#include "ctrw/error.hpp"
#include "ctrw/sim.hpp"
#include "synthetic.hpp"

namespace fs = std::filesystem;
using namespace ctrw;

namespace {

struct Result {
    int code = 0;
    std::string out;
    std::string err;
};

Result ctrw_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    Result r;
    r.code = cli::run(std::move(args), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("ctrw_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

// Mean of the value column over lags in [lo, hi].
double mean_acf(const fs::path& csv, double lo, double hi) {
    std::ifstream in(csv);
    std::string line;
    std::getline(in, line);
    double sum = 0.0;
    int n = 0;
    while (std::getline(in, line)) {
        std::istringstream row(line);
        std::string lag, value;
        std::getline(row, lag, ',');
        std::getline(row, value, ',');
        const double l = std::stod(lag);
        if (l >= lo && l <= hi && value != "nan") {
            sum += std::stod(value);
            ++n;
        }
    }
    return n ? sum / n : std::nan("");
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("model strings") {
    CHECK(cli::parse_waiting_model("exp:2").mean() == doctest::Approx(0.5));
    CHECK(cli::parse_waiting_model("lognormal:0:1").mean() == doctest::Approx(std::exp(0.5)));
    CHECK(cli::parse_increment_model("halfgauss:0:1").half_rectified());
    CHECK(cli::parse_increment_model("gauss:1:2").mu1() == doctest::Approx(1.0));
    CHECK(cli::parse_increment_model("twopoint:3").mu2() == doctest::Approx(9.0));
    CHECK_THROWS(cli::parse_waiting_model("gamma:1"));
    CHECK_THROWS(cli::parse_increment_model("gauss:1"));
    CHECK(cli::parse_count("1e7", "n") == 10000000);
    CHECK_THROWS(cli::parse_count("1.5", "n"));
    CHECK_THROWS_WITH_AS(cli::parse_repetition("1.5"), doctest::Contains("non-ergodic regime"), DomainError);
    CHECK(cli::parse_repetition("inf").kind() == RepetitionKind::unit);

    const fs::path dir = scratch("models");
    std::ofstream(dir / "dt.csv") << "duration\n1.5\n2.5\n";
    CHECK(cli::parse_waiting_model("empirical:" + (dir / "dt.csv").string()).mean() == doctest::Approx(2.0));
    std::ofstream(dir / "dx.csv") << "-1\n1\n3\n";
    CHECK(cli::parse_increment_model("empirical:" + (dir / "dx.csv").string()).mu1() == doctest::Approx(1.0));
}

TEST_CASE("exit codes") {
    const fs::path dir = scratch("exit");
    auto r = ctrw_cli({"simulate", "--rho", "1.5", "--out", dir.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("non-ergodic regime") != std::string::npos);
    CHECK(ctrw_cli({"predict", "--out", dir.string()}).code == 64);
    CHECK(ctrw_cli({"simulate", "--rho", "2.5", "--bogus"}).code == 64);
    CHECK(ctrw_cli({"simulate", "--rho", "2.5", "--psi", "weird:1"}).code == 64);
    CHECK(ctrw_cli({}).code == 64);
    CHECK(ctrw_cli({"simulate", "--help"}).code == 0);
    CHECK(ctrw_cli({"--version"}).out.find(cli::kVersion) != std::string::npos);

    std::ofstream(dir / "empty.csv").close();
    r = ctrw_cli({"analyze", "--input", (dir / "empty.csv").string(), "--out", dir.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("empty") != std::string::npos);
    CHECK(ctrw_cli({"analyze", "--input", (dir / "missing.csv").string(), "--out", dir.string()}).code == 2);

    // estimator errors carry context
    CHECK(ctrw_cli({"simulate", "--rho", "2.5", "--n-events", "50", "--out", dir.string()}).code == 0);
    r = ctrw_cli({"analyze", "--input", (dir / "events.csv").string(), "--out", dir.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("too few") != std::string::npos);
}

TEST_CASE("simulate writes events and a manifest that reproduces them") {
    const fs::path a = scratch("sim_a"), b = scratch("sim_b"), c = scratch("sim_c");
    auto r = ctrw_cli({"simulate", "--rho", "2.5", "--n-events", "2e4", "--n-trajectories", "3", "--psi", "exp:1.0",
                       "--h", "halfgauss:0:1", "--seed", "7", "--out", a.string(), "--workers", "1"});
    REQUIRE(r.code == 0);
    const EventSeries s = read_events(a / "events.csv");
    CHECK(s.size() == 60000);
    CHECK(s.sessions.size() == 3);
    for (double x : s.increments) REQUIRE(x > 0.0);

    const auto manifest = read_json(a / "manifest.json");
    CHECK(manifest["command"] == "simulate");
    CHECK(manifest["version"] == cli::kVersion);
    CHECK(manifest["config"]["seed"] == 7);
    CHECK(manifest["config"]["n-events"] == 20000);

    REQUIRE(ctrw_cli({"simulate", "--config", (a / "manifest.json").string(), "--out", b.string(), "--workers", "4"})
                .code == 0);
    CHECK(slurp(a / "events.csv") == slurp(b / "events.csv"));
    CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));

    // command taken from the manifest; flags override the file
    REQUIRE(ctrw_cli({"--config", (a / "manifest.json").string(), "--seed", "8", "--out", c.string()}).code == 0);
    CHECK(slurp(a / "events.csv") != slurp(c / "events.csv"));
    CHECK(read_json(c / "manifest.json")["config"]["seed"] == 8);
}

TEST_CASE("key=value config files") {
    const fs::path dir = scratch("kv");
    std::ofstream(dir / "run.conf") << "# simulation\nrho = 3\nn_events = 1000\nseed=5\npsi=lognormal:0:1\n";
    REQUIRE(ctrw_cli({"simulate", "--config", (dir / "run.conf").string(), "--seed", "6", "--out", dir.string()})
                .code == 0);
    const auto m = read_json(dir / "manifest.json");
    CHECK(m["config"]["rho"] == "3");
    CHECK(m["config"]["seed"] == 6);
    CHECK(m["config"]["psi"] == "lognormal:0:1");
    CHECK(read_events(dir / "events.csv").size() == 1000);

    std::ofstream(dir / "bad.conf") << "rho 3\n";
    CHECK(ctrw_cli({"simulate", "--config", (dir / "bad.conf").string()}).code == 64);
    CHECK(ctrw_cli({"simulate", "--config", (dir / "nope.conf").string()}).code == 64);
    std::ofstream(dir / "unknown.conf") << "rho=3\ncolour=blue\n";
    CHECK(ctrw_cli({"simulate", "--config", (dir / "unknown.conf").string()}).code == 64);
}

TEST_CASE("analyze recovers the memory exponent and is deterministic") {
    const fs::path sim = scratch("an_sim"), a = scratch("an_a"), b = scratch("an_b");
    REQUIRE(ctrw_cli({"simulate", "--rho", "2.5", "--n-events", "1e5", "--n-trajectories", "20", "--seed", "11",
                      "--out", sim.string()})
                .code == 0);
    const std::string input = (sim / "events.csv").string();
    auto r = ctrw_cli({"analyze", "--input", input, "--out", a.string(), "--workers", "1"});
    REQUIRE(r.code == 0);
    const auto fits = read_json(a / "fits.json");
    CHECK(fits["resampling_groups"] == 20);
    const double step = fits["step_acf"]["slope"];
    const double step_se = fits["step_acf"]["std_error"];
    CHECK(std::fabs(step + 0.5) < std::max(0.1, 3 * step_se));
    CHECK(fits["time_acf"].contains("slope"));
    CHECK(fs::exists(a / "step_acf.csv"));
    CHECK(fs::exists(a / "time_acf.csv"));

    REQUIRE(ctrw_cli({"analyze", "--config", (a / "manifest.json").string(), "--out", b.string(), "--workers", "3"})
                .code == 0);
    for (const char* f : {"step_acf.csv", "time_acf.csv", "fits.json", "manifest.json"}) {
        CAPTURE(f);
        CHECK(slurp(a / f) == slurp(b / f));
    }
}

TEST_CASE("analyze with and without stationarization of seasonal ticks") {
    synthetic::SeasonalSpec spec;
    spec.sessions = 60;
    const auto ticks = synthetic::seasonal_ticks(spec);
    const fs::path dir = scratch("season"), raw = scratch("season_raw"), flat = scratch("season_flat");
    {
        std::ofstream out(dir / "ticks.csv");
        write_ticks(ticks, out);
    }
    const std::string input = (dir / "ticks.csv").string();
    REQUIRE(ctrw_cli({"analyze", "--input", input, "--no-stationarize", "--max-lag", "200", "--out", raw.string()})
                .code == 0);
    auto r = ctrw_cli({"analyze", "--input", input, "--stationarize", "--join", "--max-lag", "200", "--out",
                       flat.string()});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(flat / "profile.csv"));
    CHECK(read_json(flat / "fits.json")["stationarized"] == true);
    CHECK(read_json(raw / "fits.json")["ingest"]["sessions"] == 60);
    // the profile alone correlates waiting times far apart in event count
    const double distorted = mean_acf(raw / "step_acf.csv", 10, 200);
    const double cleaned = mean_acf(flat / "step_acf.csv", 10, 200);
    CHECK(distorted > 0.1);
    CHECK(std::fabs(cleaned) < 0.02);
}

TEST_CASE("shuffle-test outputs and determinism") {
    const fs::path sim = scratch("sh_sim"), a = scratch("sh_a"), b = scratch("sh_b");
    REQUIRE(ctrw_cli({"simulate", "--rho", "2.5", "--n-events", "2e4", "--n-trajectories", "20", "--psi",
                      "lognormal:0:1", "--seed", "4", "--out", sim.string()})
                .code == 0);
    const std::string input = (sim / "events.csv").string();
    REQUIRE(ctrw_cli({"shuffle-test", "--input", input, "--seed", "9", "--time-fit", "1:100", "--bootstrap", "50",
                      "--out", a.string(), "--workers", "1"})
                .code == 0);
    REQUIRE(ctrw_cli({"shuffle-test", "--input", input, "--seed", "9", "--time-fit", "1:100", "--bootstrap", "50",
                      "--out", b.string(), "--workers", "2"})
                .code == 0);
    for (const char* f : {"time_acf_original.csv", "time_acf_dt.csv", "time_acf_dx.csv", "time_acf_both.csv",
                          "time_acf_baseline.csv", "report.json", "manifest.json"}) {
        CAPTURE(f);
        REQUIRE(fs::exists(a / f));
        CHECK(slurp(a / f) == slurp(b / f));
    }
    const auto report = read_json(a / "report.json");
    for (const char* k : {"original", "shuffle_dt", "shuffle_dx", "shuffle_both"}) CHECK(report["curves"].contains(k));
    CHECK(report["curves"]["original"].contains("slope"));
    CHECK(report["independence_baseline"]["bins"].get<int>() > 0);
}

TEST_CASE("predict") {
    const fs::path a = scratch("pr_a"), b = scratch("pr_b");
    REQUIRE(ctrw_cli({"predict", "--rho", "2.25", "--out", a.string()}).code == 0);
    const std::string acf = slurp(a / "analytic_step_acf.csv");
    CHECK(acf.find("# step_acf_asymptotic_slope=-0.25\n") != std::string::npos);
    CHECK(fs::exists(a / "moments.csv"));
    CHECK(fs::exists(a / "laplace_check.csv"));

    REQUIRE(ctrw_cli({"predict", "--rho", "3.5", "--psi", "exp:1", "--h", "gauss:1:1", "--t-grid", "100:1000:2",
                      "--out", b.string()})
                .code == 0);
    std::ifstream in(b / "moments.csv");
    std::string line, last;
    while (std::getline(in, line)) last = line;
    std::istringstream row(last);
    std::string t, m1;
    std::getline(row, t, ',');
    std::getline(row, m1, ',');
    CHECK(std::stod(t) == doctest::Approx(1000.0));
    CHECK(std::stod(m1) == doctest::Approx(1000.0).epsilon(0.01));
    CHECK(ctrw_cli({"predict", "--rho", "3.5", "--order", "7", "--out", b.string()}).code == 64);
}

}  // TEST_SUITE
