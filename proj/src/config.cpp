#include "jumpfilter/config.hpp"

#include "jumpfilter/errors.hpp"
#include "jumpfilter/io.hpp"

namespace jumpfilter {

namespace {

const nlohmann::json& require(const nlohmann::json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end())
    throw InvalidArgument(std::string("config: missing field '") + field + "'");
  return *it;
}

Eigen::MatrixXd matrix_from(const nlohmann::json& j, const char* field) {
  if (!j.is_array() || j.empty() || !j.at(0).is_array())
    throw InvalidArgument(std::string("config: field '") + field +
                          "' must be an array of rows");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j.at(r).size()) != cols)
      throw InvalidArgument(std::string("config: ragged rows in '") + field + "'");
    for (int c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from(const nlohmann::json& j, int n, const char* field) {
  Eigen::VectorXd v(n);
  if (j.is_number()) {
    v.setConstant(j.get<double>());
    return v;
  }
  if (!j.is_array() || static_cast<int>(j.size()) != n)
    throw InvalidArgument(std::string("config: field '") + field + "' must have " +
                          std::to_string(n) + " entries");
  for (int i = 0; i < n; ++i) v(i) = j.at(i).get<double>();
  return v;
}

PredictableClock clock_from(const nlohmann::json& j) {
  const std::string kind = require(j, "kind").get<std::string>();
  if (kind == "deterministic")
    return PredictableClock::deterministic(
        require(j, "times").get<std::vector<double>>());
  if (kind == "threshold") {
    const double level = require(j, "level").get<double>();
    const std::string dir = j.value("direction", "any");
    PredictableClock::Direction d = PredictableClock::Direction::Any;
    if (dir == "up") d = PredictableClock::Direction::Up;
    else if (dir == "down") d = PredictableClock::Direction::Down;
    else if (dir != "any")
      throw InvalidArgument("config: clock direction must be up, down, or any");
    return PredictableClock::threshold(level, d);
  }
  throw InvalidArgument("config: clock kind must be deterministic or threshold");
}

LabelKernelFn matrix_kernel(const Eigen::MatrixXd& m, const LabelSpace& space) {
  return [m, space](double, const History& h) -> Eigen::VectorXd {
    const int i = space.index_of(h.current_value());
    if (i < 0) throw InvalidArgument("history value outside the label space");
    return m.row(i).transpose();
  };
}

ModelSpec custom_model_from_json(const nlohmann::json& j) {
  const int n = require(j, "states").get<int>();
  if (n < 1) throw InvalidArgument("config: 'states' must be >= 1");

  ModelSpec spec;
  spec.label_space = LabelSpace::finite_states(n);
  spec.value_homogeneous = true;

  const int init = j.value("initial", 0);
  if (init < 0 || init >= n) throw InvalidArgument("config: 'initial' out of range");
  spec.signal.initial = spec.label_space.labels[static_cast<std::size_t>(init)];
  spec.y0 = j.value("y0", 0.0);

  if (j.contains("signal_rate")) {
    const Eigen::VectorXd rates = vector_from(j.at("signal_rate"), n, "signal_rate");
    spec.signal.rate = [rates, space = spec.label_space](double, const History& h) {
      return rates(space.index_of(h.current_value()));
    };
    spec.signal.rate_bound = j.value("signal_rate_bound", rates.maxCoeff());
  }
  if (j.contains("q_matrix"))
    spec.signal.kernel_q = matrix_kernel(matrix_from(j.at("q_matrix"), "q_matrix"),
                                         spec.label_space);
  if (j.contains("r_matrix"))
    spec.signal.kernel_r = matrix_kernel(matrix_from(j.at("r_matrix"), "r_matrix"),
                                         spec.label_space);
  if (j.contains("signal_clock")) spec.signal.clock = clock_from(j.at("signal_clock"));

  if (j.contains("noise_marks")) {
    spec.mark_space =
        MarkSpace::finite_marks(j.at("noise_marks").get<std::vector<double>>());
    const int nz = spec.mark_space.size();
    auto mark_rows = [&](const char* field) -> std::function<Eigen::VectorXd(
                         double, const History&, double)> {
      if (!j.contains(field)) return {};
      const nlohmann::json& jj = j.at(field);
      Eigen::MatrixXd rows;
      if (jj.is_array() && !jj.empty() && jj.at(0).is_array()) {
        rows = matrix_from(jj, field);
        if (rows.rows() != n || rows.cols() != nz)
          throw InvalidArgument(std::string("config: '") + field +
                                "' must be states x marks");
      } else {
        const Eigen::VectorXd one_row = vector_from(jj, nz, field);
        rows = one_row.transpose().replicate(n, 1);
      }
      return [rows, space = spec.label_space](double, const History& h,
                                              double) -> Eigen::VectorXd {
        return rows.row(space.index_of(h.current_value())).transpose();
      };
    };
    spec.noise.kernel_q.mass = mark_rows("qn");
    spec.noise.kernel_r.mass = mark_rows("rn");
  }
  if (j.contains("noise_rate")) {
    const Eigen::VectorXd rates = vector_from(j.at("noise_rate"), n, "noise_rate");
    spec.noise.rate = [rates, space = spec.label_space](double, const History& h,
                                                        double) {
      return rates(space.index_of(h.current_value()));
    };
    spec.noise.rate_bound = j.value("noise_rate_bound", rates.maxCoeff());
  }
  if (j.contains("noise_clock")) spec.noise.clock = clock_from(j.at("noise_clock"));

  const Eigen::VectorXd drift = vector_from(require(j, "drift"), n, "drift");
  spec.obs.drift = [drift, space = spec.label_space](double, const History& h,
                                                     double) {
    return drift(space.index_of(h.current_value()));
  };
  const double sigma = require(j, "sigma").get<double>();
  if (!(sigma > 0.0)) throw InvalidArgument("config: 'sigma' must be positive");
  spec.obs.vol = [sigma](double, double) { return sigma; };
  spec.obs.vol_min = sigma;

  auto label_size_map = [&](const char* field)
      -> ObservationCoefficients::JumpMap {
    if (!j.contains(field)) return {};
    const Eigen::VectorXd table = vector_from(j.at(field), n, field);
    return [table, space = spec.label_space](double, const History&, double,
                                             double mark) {
      const int i = space.index_of(mark);
      return i >= 0 ? table(i) : 0.0;
    };
  };
  spec.obs.k_inaccessible = label_size_map("k_i");
  spec.obs.k_predictable = label_size_map("k_p");

  auto mark_size_map = [&](const char* field)
      -> ObservationCoefficients::JumpMap {
    if (!j.contains(field)) return {};
    const nlohmann::json& jj = j.at(field);
    if (jj.is_string() && jj.get<std::string>() == "identity")
      return [](double, const History&, double, double z) { return z; };
    const int nz = spec.mark_space.size();
    const Eigen::VectorXd table = vector_from(jj, nz, field);
    return [table, marks = spec.mark_space.values](double, const History&, double,
                                                   double z) {
      for (std::size_t i = 0; i < marks.size(); ++i)
        if (marks[i] == z) return table(static_cast<Eigen::Index>(i));
      return 0.0;
    };
  };
  spec.obs.g_inaccessible = mark_size_map("g_i");
  spec.obs.g_predictable = mark_size_map("g_p");

  return spec;
}

}  // namespace

ModelSpec model_from_json(const nlohmann::json& j) {
  const std::string preset = require(j, "preset").get<std::string>();
  if (preset == "custom") return custom_model_from_json(j);

  const int states = require(j, "states").get<int>();
  const int initial = j.value("initial", 0);
  const double y0 = j.value("y0", 0.0);
  const double sigma = require(j, "sigma").get<double>();

  if (preset == "deterministic_jumps") {
    return preset_deterministic_jumps(
        states, matrix_from(require(j, "r"), "r"),
        require(j, "times").get<std::vector<double>>(),
        vector_from(require(j, "drift"), states, "drift"), sigma, initial, y0);
  }
  if (preset == "threshold_regime") {
    return preset_threshold_regime(
        states, matrix_from(require(j, "r"), "r"), require(j, "level").get<double>(),
        vector_from(require(j, "drift"), states, "drift"), sigma, initial, y0);
  }
  if (preset == "reflecting") {
    ReflectingParams p;
    p.n_states = states;
    p.r_matrix = matrix_from(require(j, "r"), "r");
    p.barrier_low = require(j, "barrier_low").get<double>();
    p.barrier_up = require(j, "barrier_up").get<double>();
    p.drift_table = vector_from(require(j, "drift"), states, "drift");
    p.sigma = sigma;
    p.kick_low = j.value("kick_low", 0.2);
    p.kick_up = j.value("kick_up", -0.2);
    p.signal_rate = j.value("signal_rate", 0.0);
    p.noise_rate = j.value("noise_rate", 0.0);
    if (j.contains("noise_marks"))
      p.noise_marks = j.at("noise_marks").get<std::vector<double>>();
    p.initial_state = initial;
    p.y0 = y0;
    return preset_reflecting(p);
  }
  throw InvalidArgument("config: unknown preset '" + preset + "'");
}

RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig cfg;
  cfg.model = model_from_json(require(j, "model"));
  cfg.horizon = require(j, "horizon").get<double>();
  cfg.dt = j.value("dt", 1e-3);
  cfg.seed = j.value("seed", 1ULL);
  if (!(cfg.horizon > 0.0)) throw InvalidArgument("config: 'horizon' must be positive");
  if (!(cfg.dt > 0.0)) throw InvalidArgument("config: 'dt' must be positive");
  const std::string mode = j.value("mode", "exact");
  if (mode == "exact")
    cfg.mode = FilterMode::Exact;
  else if (mode == "particle")
    cfg.mode = FilterMode::Particle;
  else
    throw InvalidArgument("config: 'mode' must be exact or particle");
  cfg.n_particles = j.value("n_particles", 1000);
  if (cfg.n_particles < 1) throw InvalidArgument("config: 'n_particles' must be >= 1");
  if (j.contains("functionals"))
    cfg.functionals = j.at("functionals").get<std::vector<std::string>>();
  if (j.contains("prior")) cfg.prior = j.at("prior").get<std::vector<double>>();
  if (j.contains("snapshot_times"))
    cfg.snapshot_times = j.at("snapshot_times").get<std::vector<double>>();
  if (j.contains("outputs")) cfg.out_dir = j.at("outputs").value("dir", ".");
  if (j.contains("diagnose")) {
    cfg.diagnose_paths = j.at("diagnose").value("n_paths", 1000);
    cfg.innovation_runs = j.at("diagnose").value("innovation_runs", 20);
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config parse error: ") + e.what());
  }
  try {
    return parse_run_config(j);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config parse error: ") + e.what());
  }
}

FilterOptions filter_options_from(const RunConfig& cfg) {
  FilterOptions opts;
  opts.mode = cfg.mode;
  opts.n_particles = cfg.n_particles;
  opts.seed = cfg.seed;
  opts.prior = cfg.prior;
  opts.snapshot_times = cfg.snapshot_times;
  for (const auto& id : cfg.functionals) opts.functionals.push_back(make_functional(id));
  return opts;
}

}  // namespace jumpfilter
