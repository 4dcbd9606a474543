#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ctrw/dist.hpp"
#include "ctrw/random.hpp"

namespace ctrw {

// Event index range [begin, end) of one trading session or one simulated
// trajectory. `origin` is the reference instant preceding the first event
// (the first waiting time is times[begin] - origin); `open` is the session's
// scheduled opening instant, used for time-of-day binning.
struct Session {
    std::size_t begin = 0;
    std::size_t end = 0;
    double origin = 0.0;
    double open = 0.0;

    std::size_t size() const noexcept { return end - begin; }
    bool operator==(const Session&) const = default;
};

struct EventSeries {
    std::vector<double> times;
    std::vector<double> increments;
    std::vector<Session> sessions;
    bool stationarized = false;

    std::size_t size() const noexcept { return times.size(); }
    bool empty() const noexcept { return times.empty(); }

    // Waiting time preceding every event, session by session.
    std::vector<double> waiting_times() const;
    // Throws DomainError on length mismatch, bad session ranges or
    // non-increasing times inside a session.
    void validate() const;

    // Replaces times by cumulative sums of `waiting` from each session's origin.
    void rebuild_times(std::span<const double> waiting);

    bool operator==(const EventSeries&) const = default;
};

// Initial condition of a trajectory. `stationary` starts inside a block drawn
// from the stationarized law (the sequence is stationary from event 1);
// `renewal` starts with a fresh block at t = 0.
enum class StartMode { stationary, renewal };

struct SimConfig {
    RepetitionDistribution repetition = RepetitionDistribution::unit();
    WaitingTimeModel waiting = WaitingTimeModel::exponential(1.0);
    IncrementModel increment = IncrementModel::gaussian(0.0, 1.0);
    std::uint64_t n_events = 1000;
    std::uint64_t n_trajectories = 1;
    std::uint64_t seed = 0;
    StartMode start = StartMode::stationary;

    // Throws DomainError("non-ergodic regime ...") for rho <= 2 and on zero counts.
    void validate() const;
};

// Streams the waiting-time process: blocks of identical values with
// i.i.d. lengths nu ~ omega and i.i.d. values ~ psi.
class WaitingTimeStream {
public:
    WaitingTimeStream(const SimConfig& cfg, Rng& rng);

    double next();
    // Number of completed-or-started blocks so far (for diagnostics/tests).
    std::uint64_t blocks() const noexcept { return blocks_; }
    // Length of the most recently started block (the first one is the
    // stationary residual in stationary mode).
    std::uint64_t current_block_length() const noexcept { return block_length_; }

private:
    const SimConfig& cfg_;
    Rng& rng_;
    double value_ = 0.0;
    std::uint64_t remaining_ = 0;
    std::uint64_t block_length_ = 0;
    std::uint64_t blocks_ = 0;
};

std::vector<double> generate_waiting_sequence(const SimConfig& cfg, Rng& rng);

// One trajectory as a single-session series with origin 0.
EventSeries generate_trajectory(const SimConfig& cfg, Rng& rng);

// cfg.n_trajectories independent trajectories, one session each; trajectory
// k uses make_stream(cfg.seed, k). Output does not depend on `workers`.
EventSeries generate_ensemble(const SimConfig& cfg, std::size_t workers);

struct MomentRow {
    double t = 0.0;
    double m1 = 0.0;
    double m2 = 0.0;
    double variance = 0.0;
    double se_m1 = 0.0;
    double se_m2 = 0.0;
    double se_variance = 0.0;
};

// Ensemble first/second moments of x(t) (value after the last jump at or
// before t) over cfg.n_trajectories trajectories. Trajectories are streamed
// and never stored. Throws DomainError if some trajectory exhausts
// cfg.n_events before the last sample time.
std::vector<MomentRow> ensemble_moments(const SimConfig& cfg, std::span<const double> sample_times,
                                        std::size_t workers);

// `per_decade` logarithmically spaced points from lo to hi inclusive.
std::vector<double> log_grid(double lo, double hi, int per_decade);

// Two-column event CSV: header "timestamp,increment", sessions introduced
// by "# session origin=<s> open=<s>" lines, "# stationarized" flag line.
void write_events(const EventSeries& series, std::ostream& out);
void write_events(const EventSeries& series, const std::filesystem::path& path);
EventSeries read_events(std::istream& in, const std::string& name = "<stream>");
EventSeries read_events(const std::filesystem::path& path);

}  // namespace ctrw
