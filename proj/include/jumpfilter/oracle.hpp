#ifndef JUMPFILTER_ORACLE_HPP
#define JUMPFILTER_ORACLE_HPP

#include <cstdint>
#include <vector>

#include "jumpfilter/model.hpp"
#include "jumpfilter/posterior.hpp"
#include "jumpfilter/simulate.hpp"

// Reference posteriors computed from first principles (path-space Bayes
// rule and standard sequential Monte Carlo). This module is the ground
// truth the filter is checked against and must not depend on it.

namespace jumpfilter {

/// One complete explanation of the observations: a mark drawn at each
/// signal-jump opportunity, the history it implies, and its posterior
/// log-weight.
struct Configuration {
  double initial;
  std::vector<double> marks;  // one per opportunity, in time order
  History h{0.0};
  double log_weight;  // unnormalized log posterior
};

struct EnumeratedPosterior {
  std::vector<double> opportunity_times;
  std::vector<Configuration> configs;
  std::vector<double> weights;  // normalized, same order as configs
  MarginalSeries marginals;     // current-value law per grid node
};

// Exact discrete Bayes over all mark assignments. Requires a vanishing
// inaccessible signal intensity (opportunities are exactly the clock
// firings), a finite label space, and at most `cap` configurations.
// An empty prior means a point mass at the model's initial state.
EnumeratedPosterior enumerate_posterior(const ModelSpec& spec,
                                        const ObservationRecord& obs,
                                        const std::vector<double>& prior = {},
                                        std::int64_t cap = 1000000);

struct BootstrapPosterior {
  MarginalSeries marginals;
  std::vector<History> particles;      // terminal particles
  std::vector<double> weights;         // normalized terminal weights
  int resample_count = 0;
};

// Bootstrap particle filter: particles carry the true signal dynamics
// (thinning plus clock firings), weights carry the observation likelihood
// per cell and per observed jump, systematic resampling below half the
// nominal sample size.
BootstrapPosterior bootstrap_particle_filter(const ModelSpec& spec,
                                             const ObservationRecord& obs,
                                             int n_particles,
                                             std::uint64_t seed,
                                             const std::vector<double>& prior = {});

}  // namespace jumpfilter

#endif
