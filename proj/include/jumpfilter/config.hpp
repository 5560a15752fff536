#ifndef JUMPFILTER_CONFIG_HPP
#define JUMPFILTER_CONFIG_HPP

#include <json.hpp>
#include <string>

#include "jumpfilter/filter.hpp"
#include "jumpfilter/model.hpp"

namespace jumpfilter {

/// One reproducible run: the model plus every numeric knob the commands
/// need. Parsed from the JSON config file.
struct RunConfig {
  ModelSpec model;
  double horizon = 1.0;
  double dt = 1e-3;
  std::uint64_t seed = 1;
  FilterMode mode = FilterMode::Exact;
  int n_particles = 1000;
  std::vector<std::string> functionals = {"one", "current_value"};
  std::vector<double> prior;           // optional, over the finite labels
  std::vector<double> snapshot_times;  // optional
  std::string out_dir = ".";
  int diagnose_paths = 1000;    // Monte Carlo batch of the diagnose command
  int innovation_runs = 20;     // well-specified runs for the KS check
};

// Build a model from its JSON description: a named preset with parameters,
// or "custom" with tabulated finite-space characteristics.
ModelSpec model_from_json(const nlohmann::json& j);

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

FilterOptions filter_options_from(const RunConfig& cfg);

}  // namespace jumpfilter

#endif
