#ifndef JUMPFILTER_FILTER_HPP
#define JUMPFILTER_FILTER_HPP

#include <string>
#include <vector>

#include "jumpfilter/compensators.hpp"
#include "jumpfilter/model.hpp"
#include "jumpfilter/posterior.hpp"
#include "jumpfilter/simulate.hpp"

namespace jumpfilter {

enum class FilterMode { Exact, Particle };

// Two interchangeable realizations of the between-events correction: the
// multiplicative likelihood reweighting (production path, robust in log
// domain) and the explicit Euler step of the filtering SDE (kept for
// equation-level validation; they agree to first order in dt).
enum class ContinuousForm { Likelihood, GammaEuler };

struct Functional {
  std::string id;
  std::function<double(const History&)> eval;
  double bound = 1e12;  // declared bound, checked on atoms
};

// Registry of named functionals: "one", "current_value", "running_max",
// "jump_count", "indicator:<label>".
Functional make_functional(const std::string& id);

/// Normalized weighted atom set over histories at one instant.
struct FilterState {
  double t = 0.0;
  FilterMode mode = FilterMode::Exact;
  std::vector<WeightedHistory> atoms;
  // Particle mode: absolute time of each particle's next thinning proposal.
  std::vector<double> next_proposal;
};

struct FilterOptions {
  FilterMode mode = FilterMode::Exact;
  ContinuousForm form = ContinuousForm::Likelihood;
  int n_particles = 1000;
  std::uint64_t seed = 1;
  std::vector<Functional> functionals;
  std::vector<double> snapshot_times;
  // Prior over the finite labels; empty means point mass at the model's
  // initial state.
  std::vector<double> prior;
  double ess_fraction = 0.5;
  // Exact mode: past this atom count, value-homogeneous models are
  // collapsed onto current-value classes (their sufficient statistic);
  // other models are rejected.
  int max_exact_atoms = 4096;
};

struct FilterRun {
  Grid grid;
  std::vector<std::string> functional_ids;
  // estimates[k][i] is the k-th functional under the filter at node i.
  std::vector<std::vector<double>> estimates;
  // Filtered drift per node, the input of the innovation process.
  std::vector<double> filtered_drift;
  MarginalSeries marginals;  // finite label spaces only
  std::vector<std::pair<double, std::vector<WeightedHistory>>> snapshots;

  // Degeneracy diagnostics accumulated over the run.
  double max_norm_defect = 0.0;       // |sum w - 1| after any step
  double max_gamma_constant = 0.0;    // |gamma| for the constant functional
  double max_unit_update_defect = 0.0;  // |U| realization for f == 1
  int resample_count = 0;
  int collapse_count = 0;  // exact-mode merges onto current-value classes
};

// Prior atoms at t = 0: one atom per supported label (exact) or sampled
// particles (particle mode).
FilterState filter_init(const ModelSpec& spec, const std::vector<double>& prior,
                        FilterMode mode, int n_particles, Rng& rng);

// Generator of the thinned signal-jump channel applied to the state:
// sum over atoms of w * rate * sum over marks of mass * (f(joined) - f(h)).
double inaccessible_generator(const FilterState& state, const ModelSpec& spec,
                              double t,
                              const std::function<double(const History&)>& f);

// Same with the clock-firing kernel and no rate factor.
double predictable_generator(const FilterState& state, const ModelSpec& spec,
                             double t,
                             const std::function<double(const History&)>& f);

// Advance over an event-free piece (t0, t0 + dt]: deterministic weight
// flows plus the diffusion correction for the continuous observation
// increment dy_c, given the observation left limit y_left at the piece
// start. rng is required in particle mode. gamma_const_out, when set,
// receives the diffusion-correction coefficient for the constant
// functional (identically 0 up to rounding).
void step_continuous(FilterState& state, const ModelSpec& spec, double t0,
                     double dt, double dy_c, double y_left,
                     ContinuousForm form, Rng* rng = nullptr,
                     double* gamma_const_out = nullptr);

// Observed jump at a non-clock time: atoms are reweighted by the
// noise-channel explanation and branched through the signal kernel for
// marks whose size map matches the observed size. Returns the realized
// update coefficient for f == 1 (identically 0 up to normalization error).
double update_inaccessible_jump(FilterState& state, const ModelSpec& spec,
                                double t, double size, double y_left);

// Signal-clock firing: atoms branch through the firing kernel, weighted by
// the observed-size likelihood (uninformative when the size map vanishes).
double update_predictable_signal(FilterState& state, const ModelSpec& spec,
                                 double t, double size, double y_left);

// Noise-clock firing: pure reweighting, histories unchanged.
double update_predictable_noise(FilterState& state, const ModelSpec& spec,
                                double t, double size, double y_left);

// Integrate the filter over the whole observation record, dispatching
// cells and events in time order. Consumes only the observation.
FilterRun run_filter(const ModelSpec& spec, const ObservationRecord& obs,
                     const FilterOptions& opts);

}  // namespace jumpfilter

#endif
