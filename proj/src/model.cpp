#include "jumpfilter/model.hpp"

#include <cmath>
#include <sstream>

#include "jumpfilter/errors.hpp"

namespace jumpfilter {

namespace {

constexpr double kMassTol = 1e-9;

std::vector<History> probe_histories(const ModelSpec& spec) {
  std::vector<History> hs;
  if (spec.label_space.finite()) {
    const auto& ls = spec.label_space.labels;
    hs.emplace_back(ls.front());
    if (ls.size() > 1) {
      hs.emplace_back(ls.back());
      hs.push_back(History(ls.front()).joined(0.37, ls.back()));
    }
  } else {
    const double mid = 0.5 * (spec.label_space.lo + spec.label_space.hi);
    hs.emplace_back(mid);
    hs.push_back(History(spec.label_space.lo).joined(0.37, mid));
  }
  return hs;
}

void check_rate(const std::string& which,
                const std::function<double(double)>& eval, double bound,
                std::vector<Finding>& out) {
  const double probes[] = {1e-3, 0.1, 0.5, 1.0, 2.0, 5.0};
  for (double t : probes) {
    const double r = eval(t);
    if (!(r >= 0.0)) {
      std::ostringstream os;
      os << which << " rate negative (" << r << ") at t=" << t;
      out.push_back({"rate.negative", os.str()});
      return;
    }
    if (r > bound * (1.0 + 1e-12) + 1e-15) {
      std::ostringstream os;
      os << which << " rate sample " << r << " exceeds declared bound " << bound
         << " at t=" << t;
      out.push_back({"rate.exceeds_bound", os.str()});
      return;
    }
  }
}

void check_mass_vector(const std::string& which, const Eigen::VectorXd& m,
                       std::vector<Finding>& out) {
  if (m.minCoeff() < -kMassTol) {
    out.push_back({"kernel.negative", which + " kernel has a negative mass entry"});
    return;
  }
  const double s = m.sum();
  if (std::abs(s - 1.0) > kMassTol) {
    std::ostringstream os;
    os << which << " kernel mass " << s << " != 1";
    out.push_back({"kernel.mass", os.str()});
  }
}

void check_clock(const std::string& which, const PredictableClock& c,
                 std::vector<Finding>& out) {
  if (c.kind == PredictableClock::Kind::Deterministic) {
    double last = 0.0;
    for (double t : c.times) {
      if (!(t > last) || !std::isfinite(t)) {
        out.push_back({"clock.unrepresentable",
                       which + " clock times must be finite, positive, strictly increasing"});
        return;
      }
      last = t;
    }
  } else if (!std::isfinite(c.level)) {
    out.push_back({"clock.unrepresentable", which + " clock threshold level is not finite"});
  }
}

// Trapezoid mass of a continuous mark density over its declared support.
double density_mass(const MarkKernel& k, const MarkSpace& z, double t,
                    const History& h, double y) {
  const int n = 2000;
  const double dz = (z.hi - z.lo) / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    s += w * k.density(t, h, y, z.lo + i * dz);
  }
  return s * dz;
}

}  // namespace

std::vector<Finding> validate(const ModelSpec& spec) {
  std::vector<Finding> out;

  if (spec.label_space.finite() && spec.label_space.size() < 1)
    out.push_back({"space.empty", "label space is empty"});
  if (!spec.label_space.finite() && !(spec.label_space.lo < spec.label_space.hi))
    out.push_back({"space.interval", "label interval bounds must satisfy lo < hi"});

  const auto hs = probe_histories(spec);
  const double ys[] = {spec.y0, spec.y0 - 1.0, spec.y0 + 1.0};

  if (spec.signal.rate) {
    for (const auto& h : hs)
      check_rate("signal", [&](double t) { return spec.signal.rate(t, h); },
                 spec.signal.rate_bound, out);
  }
  if (spec.noise.rate) {
    for (const auto& h : hs)
      for (double y : ys)
        check_rate("noise", [&](double t) { return spec.noise.rate(t, h, y); },
                   spec.noise.rate_bound, out);
  }

  // Volatility bounded below by the declared floor.
  if (spec.obs.vol) {
    const double floor_ = std::max(spec.obs.vol_min, 0.0);
    for (double t : {1e-3, 0.5, 2.0})
      for (double y : ys) {
        const double s = spec.obs.vol(t, y);
        if (!(s > 0.0) || s + kMassTol < floor_) {
          out.push_back({"vol.lower_bound", "volatility not bounded below"});
          t = 2.0;
          break;
        }
      }
  } else {
    out.push_back({"vol.missing", "volatility function not set"});
  }

  if (spec.label_space.finite()) {
    for (const auto& h : hs)
      for (double t : {0.25, 1.5}) {
        if (spec.signal.kernel_q)
          check_mass_vector("signal Q", spec.signal.kernel_q(t, h), out);
        if (spec.signal.kernel_r)
          check_mass_vector("signal R", spec.signal.kernel_r(t, h), out);
      }
  }
  for (const auto* mk : {&spec.noise.kernel_q, &spec.noise.kernel_r}) {
    if (mk->mass && spec.mark_space.finite()) {
      for (const auto& h : hs)
        check_mass_vector("noise", mk->mass(0.5, h, spec.y0), out);
    } else if (mk->continuous()) {
      const double m = density_mass(*mk, spec.mark_space, 0.5, hs.front(), spec.y0);
      if (std::abs(m - 1.0) > 1e-4) {
        std::ostringstream os;
        os << "noise kernel density mass " << m << " != 1 over declared support";
        out.push_back({"kernel.mass", os.str()});
      }
    }
  }

  if (spec.signal.clock) check_clock("signal", *spec.signal.clock, out);
  if (spec.noise.clock) check_clock("noise", *spec.noise.clock, out);

  if (spec.signal.clock && spec.noise.clock &&
      spec.signal.clock->kind == PredictableClock::Kind::Deterministic &&
      spec.noise.clock->kind == PredictableClock::Kind::Deterministic) {
    for (double a : spec.signal.clock->times)
      for (double b : spec.noise.clock->times)
        if (a == b)
          out.push_back({"clock.collision",
                         "signal and noise clocks share a deterministic firing time"});
  }

  return out;
}

Characteristics evaluate_characteristics(const ModelSpec& spec, double t,
                                         const History& h, double y) {
  Characteristics c{};
  auto guarded = [&](const char* where, auto&& fn) -> double {
    try {
      return fn();
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << "model function failed (" << where << ") at t=" << t << ": " << e.what();
      throw EvaluationError(os.str());
    }
  };
  c.signal_rate =
      spec.signal.rate ? guarded("signal rate", [&] { return spec.signal.rate(t, h); }) : 0.0;
  c.noise_rate =
      spec.noise.rate ? guarded("noise rate", [&] { return spec.noise.rate(t, h, y); }) : 0.0;
  c.drift = spec.obs.drift ? guarded("drift", [&] { return spec.obs.drift(t, h, y); }) : 0.0;
  c.vol = guarded("vol", [&] { return spec.obs.vol(t, y); });

  auto armed = [&](const std::optional<PredictableClock>& clk) {
    if (!clk) return false;
    if (clk->kind == PredictableClock::Kind::Threshold) return true;
    for (double ft : clk->times)
      if (ft > t) return true;
    return false;
  };
  c.signal_clock_armed = armed(spec.signal.clock);
  c.noise_clock_armed = armed(spec.noise.clock);
  return c;
}

namespace {

void require_stochastic_zero_diagonal(const Eigen::MatrixXd& r, int n) {
  if (r.rows() != n || r.cols() != n)
    throw InvalidArgument("transition matrix must be n_states x n_states");
  for (int i = 0; i < n; ++i) {
    if (r(i, i) != 0.0)
      throw InvalidArgument("transition matrix must have a zero diagonal");
    double s = 0.0;
    for (int j = 0; j < n; ++j) {
      if (r(i, j) < 0.0) throw InvalidArgument("transition matrix entries must be nonnegative");
      s += r(i, j);
    }
    if (std::abs(s - 1.0) > kMassTol)
      throw InvalidArgument("transition matrix rows must sum to 1");
  }
}

LabelKernelFn row_kernel(const Eigen::MatrixXd& r, const LabelSpace& space) {
  return [r, space](double, const History& h) -> Eigen::VectorXd {
    const int i = space.index_of(h.current_value());
    if (i < 0) throw InvalidArgument("history value outside the label space");
    return r.row(i).transpose();
  };
}

std::function<double(double, const History&, double)> table_drift(
    const Eigen::VectorXd& table, const LabelSpace& space) {
  return [table, space](double, const History& h, double) {
    const int i = space.index_of(h.current_value());
    if (i < 0) throw InvalidArgument("history value outside the label space");
    return table(i);
  };
}

}  // namespace

ModelSpec preset_deterministic_jumps(int n_states, const Eigen::MatrixXd& r_matrix,
                                     std::vector<double> times,
                                     const Eigen::VectorXd& drift_table,
                                     double sigma, int initial_state, double y0) {
  require_stochastic_zero_diagonal(r_matrix, n_states);
  if (drift_table.size() != n_states)
    throw InvalidArgument("drift table must have one entry per state");
  if (!(sigma > 0.0)) throw InvalidArgument("sigma must be positive");
  if (initial_state < 0 || initial_state >= n_states)
    throw InvalidArgument("initial state out of range");

  ModelSpec spec;
  spec.label_space = LabelSpace::finite_states(n_states);
  spec.signal.rate = [](double, const History&) { return 0.0; };
  spec.signal.rate_bound = 0.0;
  spec.signal.kernel_r = row_kernel(r_matrix, spec.label_space);
  spec.signal.kernel_q = row_kernel(r_matrix, spec.label_space);
  if (!times.empty())
    spec.signal.clock = PredictableClock::deterministic(std::move(times));
  spec.signal.initial = spec.label_space.labels[static_cast<std::size_t>(initial_state)];
  spec.obs.drift = table_drift(drift_table, spec.label_space);
  spec.obs.vol = [sigma](double, double) { return sigma; };
  spec.obs.vol_min = sigma;
  spec.y0 = y0;
  spec.value_homogeneous = true;
  return spec;
}

ModelSpec preset_threshold_regime(int n_states, const Eigen::MatrixXd& r_matrix,
                                  double level, const Eigen::VectorXd& drift_table,
                                  double sigma, int initial_state, double y0) {
  ModelSpec spec = preset_deterministic_jumps(n_states, r_matrix, {}, drift_table,
                                              sigma, initial_state, y0);
  spec.signal.clock =
      PredictableClock::threshold(level, PredictableClock::Direction::Any);
  return spec;
}

ModelSpec preset_reflecting(const ReflectingParams& p) {
  if (!(p.barrier_low < p.barrier_up))
    throw InvalidArgument("reflecting barriers must satisfy low < up");
  if (!(p.y0 > p.barrier_low && p.y0 < p.barrier_up))
    throw InvalidArgument("initial observation must lie strictly between the barriers");
  require_stochastic_zero_diagonal(p.r_matrix, p.n_states);
  if (p.drift_table.size() != p.n_states)
    throw InvalidArgument("drift table must have one entry per state");
  if (!(p.sigma > 0.0)) throw InvalidArgument("sigma must be positive");
  if (p.kick_low == 0.0 || p.kick_up == 0.0)
    throw InvalidArgument("barrier kicks must be nonzero");

  ModelSpec spec;
  spec.label_space = LabelSpace::finite_states(p.n_states);
  spec.signal.initial = spec.label_space.labels[static_cast<std::size_t>(p.initial_state)];
  spec.signal.rate = [r = p.signal_rate](double, const History&) { return r; };
  spec.signal.rate_bound = p.signal_rate;
  spec.signal.kernel_r = row_kernel(p.r_matrix, spec.label_space);
  // Inaccessible marks: uniform over the other states.
  spec.signal.kernel_q = [n = p.n_states, space = spec.label_space](
                             double, const History& h) -> Eigen::VectorXd {
    Eigen::VectorXd m = Eigen::VectorXd::Constant(n, n > 1 ? 1.0 / (n - 1) : 0.0);
    const int i = space.index_of(h.current_value());
    if (i >= 0 && n > 1) m(i) = 0.0;
    if (n == 1) m(0) = 1.0;
    return m;
  };
  spec.signal.clock =
      PredictableClock::threshold(p.barrier_low, PredictableClock::Direction::Down);

  spec.mark_space = MarkSpace::finite_marks(p.noise_marks);
  const int nz = spec.mark_space.size();
  auto uniform_z = [nz](double, const History&, double) {
    return Eigen::VectorXd::Constant(nz, 1.0 / nz).eval();
  };
  spec.noise.rate = [r = p.noise_rate](double, const History&, double) { return r; };
  spec.noise.rate_bound = p.noise_rate;
  spec.noise.kernel_q.mass = uniform_z;
  spec.noise.kernel_r.mass = uniform_z;
  spec.noise.clock =
      PredictableClock::threshold(p.barrier_up, PredictableClock::Direction::Up);

  spec.obs.drift = table_drift(p.drift_table, spec.label_space);
  spec.obs.vol = [s = p.sigma](double, double) { return s; };
  spec.obs.vol_min = p.sigma;
  spec.obs.g_inaccessible = [](double, const History&, double, double z) { return z; };
  spec.obs.k_predictable = [k = p.kick_low](double, const History&, double, double) {
    return k;
  };
  spec.obs.g_predictable = [k = p.kick_up](double, const History&, double, double) {
    return k;
  };
  spec.y0 = p.y0;
  spec.value_homogeneous = true;
  return spec;
}

}  // namespace jumpfilter
