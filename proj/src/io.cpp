#include "jumpfilter/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "jumpfilter/errors.hpp"

namespace jumpfilter {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

nlohmann::json history_to_json(const History& h) {
  nlohmann::json jumps = nlohmann::json::array();
  for (const auto& j : h.jumps()) jumps.push_back({j.time, j.value});
  return {{"initial", h.initial()}, {"jumps", jumps}};
}

History history_from_json(const nlohmann::json& j) {
  std::vector<JumpRecord> jumps;
  for (const auto& rec : j.at("jumps"))
    jumps.push_back({rec.at(0).get<double>(), rec.at(1).get<double>()});
  return History(j.at("initial").get<double>(), std::move(jumps));
}

static nlohmann::json grid_to_json(const Grid& g) {
  return {{"dt", g.dt}, {"n_cells", g.n_cells}};
}

static Grid grid_from_json(const nlohmann::json& j) {
  return Grid{j.at("dt").get<double>(), j.at("n_cells").get<int>()};
}

nlohmann::json system_path_to_json(const SystemPath& path) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& ev : path.events)
    events.push_back({{"time", ev.time},
                      {"stream", to_string(ev.stream)},
                      {"mark", ev.mark},
                      {"obs_jump", ev.obs_jump},
                      {"y_before", ev.y_before}});
  return {{"grid", grid_to_json(path.grid)},
          {"latent_history", history_to_json(path.latent_history)},
          {"y", path.y_samples},
          {"w_increments", path.w_increments},
          {"events", events},
          {"seed", path.seed},
          {"suppressed_clock_firings", path.suppressed_clock_firings}};
}

nlohmann::json observation_to_json(const ObservationRecord& obs) {
  nlohmann::json jumps = nlohmann::json::array();
  for (const auto& j : obs.jumps) jumps.push_back({j.time, j.size});
  return {{"grid", grid_to_json(obs.grid)},
          {"y", obs.y_samples},
          {"jumps", jumps},
          {"signal_clock_times", obs.signal_clock_times},
          {"noise_clock_times", obs.noise_clock_times}};
}

ObservationRecord observation_from_json(const nlohmann::json& j) {
  ObservationRecord obs;
  obs.grid = grid_from_json(j.at("grid"));
  obs.y_samples = j.at("y").get<std::vector<double>>();
  for (const auto& rec : j.at("jumps"))
    obs.jumps.push_back({rec.at(0).get<double>(), rec.at(1).get<double>()});
  obs.signal_clock_times = j.at("signal_clock_times").get<std::vector<double>>();
  obs.noise_clock_times = j.at("noise_clock_times").get<std::vector<double>>();
  return obs;
}

std::string y_samples_csv(const Grid& grid, const std::vector<double>& y) {
  std::ostringstream os;
  os << "t,y\n";
  for (std::size_t i = 0; i < y.size(); ++i)
    os << format_double(grid.time(static_cast<int>(i))) << ','
       << format_double(y[i]) << '\n';
  return os.str();
}

std::string filter_trajectory_csv(const FilterRun& run) {
  std::ostringstream os;
  os << "t,f_id,estimate\n";
  for (int i = 0; i <= run.grid.n_cells; ++i) {
    for (std::size_t k = 0; k < run.functional_ids.size(); ++k)
      os << format_double(run.grid.time(i)) << ',' << run.functional_ids[k]
         << ',' << format_double(run.estimates[k][static_cast<std::size_t>(i)])
         << '\n';
  }
  return os.str();
}

nlohmann::json snapshots_to_json(const FilterRun& run) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [t, atoms] : run.snapshots) {
    nlohmann::json ja = nlohmann::json::array();
    for (const auto& a : atoms) {
      nlohmann::json entry = history_to_json(a.h);
      entry["weight"] = a.w;
      ja.push_back(entry);
    }
    out.push_back({{"t", t}, {"atoms", ja}});
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open for writing: " + path);
  f << content;
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open for reading: " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace jumpfilter
