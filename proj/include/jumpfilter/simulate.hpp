#ifndef JUMPFILTER_SIMULATE_HPP
#define JUMPFILTER_SIMULATE_HPP

#include <cstdint>
#include <limits>
#include <vector>

#include "jumpfilter/model.hpp"

namespace jumpfilter {

struct Grid {
  double dt = 0.0;
  int n_cells = 0;

  double time(int i) const { return i * dt; }
  double horizon() const { return n_cells * dt; }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.dt == b.dt && a.n_cells == b.n_cells;
  }
};

enum class EventStream {
  SignalInaccessible,  // thinned signal jump
  SignalPredictable,   // signal-clock firing
  NoiseInaccessible,   // thinned noise jump
  NoisePredictable,    // noise-clock firing
};

const char* to_string(EventStream s);

struct EventRecord {
  double time;
  EventStream stream;
  double mark;      // label (signal streams) or noise mark (noise streams)
  double obs_jump;  // resulting observation increment, 0 if invisible
  double y_before;  // observation left limit at the event
};

/// One full realization: latent signal history, observation samples on the
/// grid, the typed event log, and the Gaussian increments that drove it.
struct SystemPath {
  Grid grid;
  History latent_history{0.0};
  std::vector<double> y_samples;     // n_cells + 1 node values
  std::vector<double> w_increments;  // per cell
  std::vector<EventRecord> events;
  std::uint64_t seed = 0;
  int suppressed_clock_firings = 0;  // refractory-period suppressions
};

struct ObservedJump {
  double time;
  double size;
};

/// The observation-measurable slice of a path: everything the filter may
/// read, nothing it may not. Latent marks never appear here.
struct ObservationRecord {
  Grid grid;
  std::vector<double> y_samples;
  std::vector<ObservedJump> jumps;            // nonzero observation jumps
  std::vector<double> signal_clock_times;     // firings of the signal clock
  std::vector<double> noise_clock_times;      // firings of the noise clock
};

// Euler–Maruyama on a uniform grid with exact insertion of jump events.
// Thinned streams use the declared rate bounds as majorants; clock streams
// fire per their kind. Deterministic given (spec, horizon, dt, seed).
SystemPath simulate(const ModelSpec& spec, double horizon, double dt,
                    std::uint64_t seed);

ObservationRecord observe(const SystemPath& path);

constexpr double kNoJump = std::numeric_limits<double>::infinity();

// First accepted point after t_from of a point process with intensity
// rate(t) thinned against the constant majorant `bound`. Returns kNoJump
// when no acceptance occurs before t_max. Throws if a rate sample exceeds
// the majorant.
double next_inaccessible_time(const std::function<double(double)>& rate,
                              double bound, double t_from, Rng& rng,
                              double t_max = kNoJump);

struct ClockFiring {
  bool fired = false;
  double time = 0.0;
};

// Firing of a clock inside the cell (t_start, t_end], given the observation
// left limit at the cell start and the tentative value at the cell end.
// Threshold clocks fire where the linear interpolant crosses the level in
// the declared direction; the crossing decision reads only y_start.
ClockFiring detect_clock_event(const PredictableClock& clock, double y_start,
                               double y_end, double t_start, double t_end);

}  // namespace jumpfilter

#endif
