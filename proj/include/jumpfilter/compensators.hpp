#ifndef JUMPFILTER_COMPENSATORS_HPP
#define JUMPFILTER_COMPENSATORS_HPP

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "jumpfilter/model.hpp"
#include "jumpfilter/simulate.hpp"

namespace jumpfilter {

struct TimeInterval {
  double lo = 0.0;
  double hi = 0.0;  // the interval (lo, hi]
};

// Finite subset of a label/mark space, or the whole space.
struct ValueSet {
  bool full = false;
  std::vector<double> values;

  bool contains(double v) const {
    if (full) return true;
    for (double x : values)
      if (x == v) return true;
    return false;
  }
  static ValueSet all() { return {true, {}}; }
  static ValueSet of(std::vector<double> vs) { return {false, std::move(vs)}; }
};

// Finite union of closed real intervals; observed-jump sizes live here.
struct SizeSet {
  std::vector<std::pair<double, double>> parts;

  bool contains(double x) const {
    for (const auto& [a, b] : parts)
      if (x >= a && x <= b) return true;
    return false;
  }
  static SizeSet interval(double a, double b) { return {{{a, b}}}; }
  static SizeSet whole_line();
};

struct CompensatorIncrement {
  TimeInterval interval;
  double value = 0.0;
};

// Observable slice of a path over one interval: the left limit of the
// observation as a function of time plus the clock firings inside.
struct ClockFiringObs {
  double time;
  double y_before;
};
struct PathSegment {
  std::function<double(double)> y_left;  // defaults to 0 when unused
  std::vector<ClockFiringObs> signal_firings;
  std::vector<ClockFiringObs> noise_firings;
};

// Compensator of the signal jump measure over (lo,hi] x B, with the
// history frozen at its value at the interval start: time quadrature of
// the thinned intensity plus one kernel atom per signal-clock firing.
CompensatorIncrement signal_compensator_increment(const ModelSpec& spec,
                                                  const History& h,
                                                  TimeInterval interval,
                                                  const ValueSet& target,
                                                  const PathSegment& segment,
                                                  double quad_dt);

// Same structure for the noise jump measure (target is a set of marks).
CompensatorIncrement noise_compensator_increment(const ModelSpec& spec,
                                                 const History& h,
                                                 TimeInterval interval,
                                                 const ValueSet& target,
                                                 const PathSegment& segment,
                                                 double quad_dt);

// Compensator of the history-process jump measure: the target is a set of
// extended histories, tested through the join map.
CompensatorIncrement history_compensator_increment(
    const ModelSpec& spec, const History& h, TimeInterval interval,
    const std::function<bool(const History&)>& target,
    const PathSegment& segment, double quad_dt);

// Compensator of the observed-jump-size measure over (lo,hi] x B: four
// contributions (thinned signal and noise jumps mapped through their size
// maps, plus kernel atoms at both clocks), zero sizes excluded.
CompensatorIncrement jump_size_compensator_increment(
    const ModelSpec& spec, const History& h, TimeInterval interval,
    const SizeSet& sizes, const PathSegment& segment, double quad_dt);

// The same measure integrated against a weighted atom set instead of one
// latent history (linear in the weights).
struct WeightedHistory {
  History h;
  double w;
};
CompensatorIncrement filtered_jump_size_compensator_increment(
    const std::vector<WeightedHistory>& atoms, const ModelSpec& spec,
    TimeInterval interval, const SizeSet& sizes, const PathSegment& segment,
    double quad_dt);

// --- Martingale-residual diagnostics ---------------------------------------

// Bounded integrand evaluated at left limits.
using Integrand =
    std::function<double(double t, const History& h_left, double y_left)>;

struct ResidualStats {
  double mean = 0.0;
  double stderr_ = 0.0;
  int n_paths = 0;
  double z() const { return stderr_ > 0.0 ? mean / stderr_ : 0.0; }
};

struct ResidualReport {
  ResidualStats signal;     // counting minus compensator, signal measure
  ResidualStats noise;      // same, noise measure
  ResidualStats jump_size;  // same, observed-jump-size measure
};

// Monte Carlo mean and standard error of the pathwise residual
// integral(C d counting) - integral(C d compensator) for each measure.
ResidualReport compensator_residual(const ModelSpec& spec, const Integrand& C,
                                    int n_paths, double horizon, double dt,
                                    std::uint64_t seed, int n_threads = 0);

// Shared-path batch over several integrands.
std::vector<ResidualReport> compensator_residual_battery(
    const ModelSpec& spec, const std::vector<Integrand>& integrands,
    int n_paths, double horizon, double dt, std::uint64_t seed,
    int n_threads = 0);

// Five bounded integrands used by the diagnostic battery.
std::vector<std::pair<std::string, Integrand>> standard_integrands();

// --- Innovation process ----------------------------------------------------

// Innovation increments accumulated on the grid: the continuous part of
// the observation increment, centered by the filtered drift and scaled by
// the volatility. filtered_drift holds one value per grid node (left ones
// are used); observed jumps are removed from the increments.
std::vector<double> innovation_path(const std::vector<double>& filtered_drift,
                                    const ObservationRecord& obs,
                                    const ModelSpec& spec);

}  // namespace jumpfilter

#endif
