#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <json.hpp>

#include "jumpfilter/compensators.hpp"
#include "jumpfilter/config.hpp"
#include "jumpfilter/errors.hpp"
#include "jumpfilter/filter.hpp"
#include "jumpfilter/io.hpp"
#include "jumpfilter/oracle.hpp"
#include "jumpfilter/stats.hpp"

namespace jf = jumpfilter;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string obs_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int particles = 0;
  double dt = 0.0;
  std::string mode;
};

jf::RunConfig load_config(const CommonArgs& args) {
  jf::RunConfig cfg = jf::load_run_config(args.config_path);
  if (args.seed_set) cfg.seed = args.seed;
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (args.particles > 0) cfg.n_particles = args.particles;
  if (args.dt > 0.0) cfg.dt = args.dt;
  if (args.mode == "exact") cfg.mode = jf::FilterMode::Exact;
  else if (args.mode == "particle") cfg.mode = jf::FilterMode::Particle;
  else if (!args.mode.empty())
    throw jf::InvalidArgument("--mode must be exact or particle");
  return cfg;
}

std::string out_path(const jf::RunConfig& cfg, const std::string& name) {
  if (cfg.out_dir.empty() || cfg.out_dir == ".") return name;
  return cfg.out_dir + "/" + name;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

json tv_report(const std::vector<double>& tv, const jf::Grid& grid) {
  json times = json::array(), vals = json::array();
  for (std::size_t i = 0; i < tv.size(); ++i) {
    times.push_back(grid.time(static_cast<int>(i)));
    vals.push_back(tv[i]);
  }
  const double mx = tv.empty() ? 0.0 : *std::max_element(tv.begin(), tv.end());
  return {{"times", times}, {"tv", vals}, {"max", mx}, {"median", median_of(tv)}};
}

int cmd_validate(const CommonArgs& args) {
  const jf::RunConfig cfg = load_config(args);
  const auto findings = jf::validate(cfg.model);
  for (const auto& f : findings)
    std::cout << "[" << f.code << "] " << f.message << "\n";
  if (findings.empty()) {
    std::cout << "model valid\n";
    return 0;
  }
  return 1;
}

int cmd_simulate(const CommonArgs& args) {
  const jf::RunConfig cfg = load_config(args);
  const jf::SystemPath path = jf::simulate(cfg.model, cfg.horizon, cfg.dt, cfg.seed);
  const jf::ObservationRecord obs = jf::observe(path);
  jf::write_text_file(out_path(cfg, "path.json"), jf::system_path_to_json(path).dump(2) + "\n");
  jf::write_text_file(out_path(cfg, "observation.json"),
                      jf::observation_to_json(obs).dump(2) + "\n");
  jf::write_text_file(out_path(cfg, "y.csv"), jf::y_samples_csv(path.grid, path.y_samples));
  std::cout << "simulated " << path.events.size() << " events over horizon "
            << cfg.horizon << "\n";
  return 0;
}

jf::ObservationRecord load_observation(const CommonArgs& args) {
  if (args.obs_path.empty())
    throw jf::InvalidArgument("--obs OBSERVATION_FILE is required");
  return jf::observation_from_json(json::parse(jf::read_text_file(args.obs_path)));
}

int cmd_filter(const CommonArgs& args) {
  const jf::RunConfig cfg = load_config(args);
  const jf::ObservationRecord obs = load_observation(args);
  const jf::FilterRun run = jf::run_filter(cfg.model, obs, jf::filter_options_from(cfg));
  jf::write_text_file(out_path(cfg, "filter_trajectory.csv"),
                      jf::filter_trajectory_csv(run));
  jf::write_text_file(out_path(cfg, "snapshots.json"),
                      jf::snapshots_to_json(run).dump(2) + "\n");
  std::cout << "filter run complete: " << run.grid.n_cells << " cells, "
            << "norm defect " << run.max_norm_defect << "\n";
  return 0;
}

int cmd_compare(const CommonArgs& args) {
  const jf::RunConfig cfg = load_config(args);
  const jf::ObservationRecord obs = load_observation(args);
  const jf::FilterRun run = jf::run_filter(cfg.model, obs, jf::filter_options_from(cfg));
  const jf::EnumeratedPosterior enumerated =
      jf::enumerate_posterior(cfg.model, obs, cfg.prior);
  const jf::BootstrapPosterior bootstrap = jf::bootstrap_particle_filter(
      cfg.model, obs, cfg.n_particles, cfg.seed, cfg.prior);

  json report;
  report["filter_vs_enumeration"] = tv_report(
      jf::total_variation_series(run.marginals, enumerated.marginals), run.grid);
  report["filter_vs_bootstrap"] = tv_report(
      jf::total_variation_series(run.marginals, bootstrap.marginals), run.grid);
  report["bootstrap_vs_enumeration"] = tv_report(
      jf::total_variation_series(bootstrap.marginals, enumerated.marginals), run.grid);
  jf::write_text_file(out_path(cfg, "compare.json"), report.dump(2) + "\n");
  std::cout << "max TV filter vs enumeration: "
            << report["filter_vs_enumeration"]["max"].dump() << "\n";
  return 0;
}

int cmd_diagnose(const CommonArgs& args) {
  const jf::RunConfig cfg = load_config(args);
  json tests = json::array();
  bool all_pass = true;

  const auto battery = jf::standard_integrands();
  std::vector<jf::Integrand> integrands;
  for (const auto& [name, fn] : battery) integrands.push_back(fn);
  const auto reports = jf::compensator_residual_battery(
      cfg.model, integrands, cfg.diagnose_paths, cfg.horizon, cfg.dt, cfg.seed);
  const char* measures[3] = {"m", "n", "mY"};
  for (std::size_t k = 0; k < battery.size(); ++k) {
    const jf::ResidualStats* stats[3] = {&reports[k].signal, &reports[k].noise,
                                         &reports[k].jump_size};
    for (int m = 0; m < 3; ++m) {
      const bool pass = std::abs(stats[m]->mean) <= 3.0 * stats[m]->stderr_ ||
                        (stats[m]->mean == 0.0 && stats[m]->stderr_ == 0.0);
      all_pass = all_pass && pass;
      tests.push_back({{"name", battery[k].first + std::string(":") + measures[m]},
                       {"mean", stats[m]->mean},
                       {"stderr", stats[m]->stderr_},
                       {"z", stats[m]->z()},
                       {"pass", pass}});
    }
  }

  // Innovation check over freshly simulated well-specified runs.
  int rejections = 0;
  for (int r = 0; r < cfg.innovation_runs; ++r) {
    const jf::SystemPath path =
        jf::simulate(cfg.model, cfg.horizon, cfg.dt, jf::derive_seed(cfg.seed, 1000 + r));
    const jf::ObservationRecord obs = jf::observe(path);
    jf::FilterOptions opts = jf::filter_options_from(cfg);
    opts.functionals.clear();
    const jf::FilterRun run = jf::run_filter(cfg.model, obs, opts);
    const std::vector<double> innov =
        jf::innovation_path(run.filtered_drift, obs, cfg.model);
    std::vector<double> incr(innov.size() - 1);
    for (std::size_t i = 0; i + 1 < innov.size(); ++i)
      incr[i] = (innov[i + 1] - innov[i]) / std::sqrt(obs.grid.dt);
    const double d = jf::ks_statistic_standard_normal(incr);
    if (d > jf::ks_critical_value(0.01, incr.size())) ++rejections;
  }
  const bool innov_pass = rejections <= std::max(1, cfg.innovation_runs / 20);
  all_pass = all_pass && innov_pass;
  tests.push_back({{"name", "innovation_ks"},
                   {"runs", cfg.innovation_runs},
                   {"rejections", rejections},
                   {"pass", innov_pass}});

  json report = {{"tests", tests}, {"pass", all_pass}};
  jf::write_text_file(out_path(cfg, "diagnose.json"), report.dump(2) + "\n");
  std::cout << (all_pass ? "diagnostics pass" : "diagnostics FAIL") << "\n";
  return all_pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"simulation and filtering engine for jump-diffusion observations"};
  app.require_subcommand(1);

  CommonArgs args;
  auto add_common = [&](CLI::App* cmd, bool with_obs) {
    cmd->add_option("--config", args.config_path, "run config (JSON)")->required();
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "seed override")
        ->each([&](const std::string&) { args.seed_set = true; });
    cmd->add_option("--particles", args.particles, "particle count override");
    cmd->add_option("--dt", args.dt, "grid step override");
    cmd->add_option("--mode", args.mode, "exact|particle");
    if (with_obs) cmd->add_option("--obs", args.obs_path, "observation record (JSON)");
  };

  CLI::App* validate = app.add_subcommand("validate", "check the model assumptions");
  CLI::App* simulate = app.add_subcommand("simulate", "simulate one path");
  CLI::App* filter = app.add_subcommand("filter", "run the filter on an observation");
  CLI::App* compare = app.add_subcommand("compare", "filter vs reference posteriors");
  CLI::App* diagnose = app.add_subcommand("diagnose", "compensator and innovation checks");
  add_common(validate, false);
  add_common(simulate, false);
  add_common(filter, true);
  add_common(compare, true);
  add_common(diagnose, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return cmd_validate(args);
    if (simulate->parsed()) return cmd_simulate(args);
    if (filter->parsed()) return cmd_filter(args);
    if (compare->parsed()) return cmd_compare(args);
    if (diagnose->parsed()) return cmd_diagnose(args);
  } catch (const jf::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
