#pragma once
// Synthetic tick data with a known intraday waiting-time profile.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "ctrw/data.hpp"
#include "ctrw/sim.hpp"

namespace synthetic {

constexpr double kMonday2024 = 19723.0 * 86400.0;  // 2024-01-01T00:00:00Z

struct SeasonalSpec {
    ctrw::RepetitionDistribution repetition = ctrw::RepetitionDistribution::unit();
    double open = 9 * 3600.0;
    double close = 17 * 3600.0;
    double base_dt = 1.0;
    double amplitude = 3.0;  // midday waiting times are (1 + amplitude) times longer
    int sessions = 100;
    int first_session = 0;  // index of the first generated session
    double return_sigma = 1e-3;
    std::uint64_t seed = 1;
};

// Multiplier of the waiting time at `tau` seconds after the open: one at the
// open and the close, 1 + amplitude at midday.
inline double factor(const SeasonalSpec& spec, double tau) {
    const double len = spec.close - spec.open;
    const double s = std::sin(std::numbers::pi * tau / len);
    return 1.0 + spec.amplitude * s * s;
}

// Trading days Monday to Friday from 2024-01-01.
inline double session_day_start(int k) {
    const int week = k / 5, day = k % 5;
    return kMonday2024 + (7.0 * week + day) * 86400.0;
}

// Ticks for sessions first_session .. first_session + sessions - 1. Each session draws a stationary
// waiting-time sequence u_i with mean base_dt and stretches it by the
// profile factor at the start of the interval.
inline std::vector<ctrw::TickRecord> seasonal_ticks(const SeasonalSpec& spec) {
    ctrw::SimConfig cfg;
    cfg.repetition = spec.repetition;
    cfg.waiting = ctrw::WaitingTimeModel::exponential(1.0 / spec.base_dt);
    std::vector<ctrw::TickRecord> ticks;
    const double len = spec.close - spec.open;
    for (int k = spec.first_session; k < spec.first_session + spec.sessions; ++k) {
        ctrw::Rng rng = ctrw::make_stream(spec.seed, static_cast<std::uint64_t>(k));
        ctrw::WaitingTimeStream stream(cfg, rng);
        std::normal_distribution<double> ret(0.0, spec.return_sigma);
        const double open = session_day_start(k) + spec.open;
        double tau = 0.0;
        double lp = std::log(100.0);
        ticks.push_back({open, 100.0, 0});
        for (;;) {
            const double dt = stream.next() * factor(spec, tau);
            if (tau + dt >= len) break;
            tau += dt;
            lp += ret(rng);
            ticks.push_back({open + tau, std::exp(lp), 0});
        }
    }
    return ticks;
}

// Expected mean waiting time of intervals ending in [a, b) for a process
// with local rate 1 / (base_dt * factor): the bin length over the expected
// number of events in it.
inline double bin_mean(const SeasonalSpec& spec, double a, double b) {
    const int steps = 2000;
    double events = 0.0;
    for (int i = 0; i < steps; ++i) {
        const double tau = a + (b - a) * (i + 0.5) / steps;
        events += (b - a) / steps / (spec.base_dt * factor(spec, tau));
    }
    return (b - a) / events;
}

}  // namespace synthetic
