#include "jumpfilter/compensators.hpp"

#include <cmath>
#include <future>
#include <limits>
#include <thread>

#include "jumpfilter/errors.hpp"

namespace jumpfilter {

SizeSet SizeSet::whole_line() {
  return {{{-std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity()}}};
}

namespace {

double clamp_quad_dt(TimeInterval iv, double quad_dt) {
  if (!(iv.hi > iv.lo)) throw InvalidArgument("empty compensator interval");
  if (!(quad_dt > 0.0)) throw InvalidArgument("quadrature step must be positive");
  return std::min(quad_dt, iv.hi - iv.lo);
}

// Left-endpoint rectangle rule over (lo, hi].
template <typename F>
double left_rectangles(TimeInterval iv, double quad_dt, F&& integrand) {
  quad_dt = clamp_quad_dt(iv, quad_dt);
  const int n = std::max(1, static_cast<int>(std::llround((iv.hi - iv.lo) / quad_dt)));
  const double dt = (iv.hi - iv.lo) / n;
  double acc = 0.0;
  for (int k = 0; k < n; ++k) acc += integrand(iv.lo + k * dt) * dt;
  return acc;
}

double finite_label_mass(const ModelSpec& spec, const Eigen::VectorXd& mass,
                         const ValueSet& target) {
  double s = 0.0;
  for (int i = 0; i < mass.size(); ++i)
    if (target.contains(spec.label_space.labels[static_cast<std::size_t>(i)]))
      s += mass(i);
  return s;
}

double mark_mass(const ModelSpec& spec, const MarkKernel& kernel, double t,
                 const History& h, double y, const ValueSet& target) {
  if (!kernel.mass && !kernel.continuous()) return 0.0;
  if (kernel.continuous()) {
    if (target.full) return 1.0;
    throw InvalidArgument("finite mark target requested on a continuous mark kernel");
  }
  const Eigen::VectorXd m = kernel.mass(t, h, y);
  double s = 0.0;
  for (int i = 0; i < m.size(); ++i)
    if (target.contains(spec.mark_space.values[static_cast<std::size_t>(i)])) s += m(i);
  return s;
}

// Mass of {mark : size_map(mark) in sizes \ {0}} under a mark kernel.
double mark_image_mass(const ModelSpec& spec, const MarkKernel& kernel,
                       const ObservationCoefficients::JumpMap& size_map,
                       double t, const History& h, double y,
                       const SizeSet& sizes) {
  if (!kernel.mass && !kernel.continuous()) return 0.0;
  auto hit = [&](double mark) {
    const double s = size_map ? size_map(t, h, y, mark) : 0.0;
    return s != 0.0 && sizes.contains(s);
  };
  if (kernel.continuous()) {
    // Trapezoid over the declared support.
    const int n = 800;
    const double dz = (spec.mark_space.hi - spec.mark_space.lo) / n;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double z = spec.mark_space.lo + i * dz;
      if (!hit(z)) continue;
      const double w = (i == 0 || i == n) ? 0.5 : 1.0;
      acc += w * kernel.density(t, h, y, z);
    }
    return acc * dz;
  }
  const Eigen::VectorXd m = kernel.mass(t, h, y);
  double acc = 0.0;
  for (int i = 0; i < m.size(); ++i)
    if (hit(spec.mark_space.values[static_cast<std::size_t>(i)])) acc += m(i);
  return acc;
}

// Mass of {label : size_map(label) in sizes \ {0}} under a label kernel.
double label_image_mass(const ModelSpec& spec, const LabelKernelFn& kernel,
                        const ObservationCoefficients::JumpMap& size_map,
                        double t, const History& h, double y,
                        const SizeSet& sizes) {
  if (!kernel) return 0.0;
  if (!spec.label_space.finite())
    throw InvalidArgument("size preimages need a finite label space");
  const Eigen::VectorXd m = kernel(t, h);
  double acc = 0.0;
  for (int i = 0; i < m.size(); ++i) {
    const double e = spec.label_space.labels[static_cast<std::size_t>(i)];
    const double s = size_map ? size_map(t, h, y, e) : 0.0;
    if (s != 0.0 && sizes.contains(s)) acc += m(i);
  }
  return acc;
}

}  // namespace

CompensatorIncrement signal_compensator_increment(const ModelSpec& spec,
                                                  const History& h,
                                                  TimeInterval interval,
                                                  const ValueSet& target,
                                                  const PathSegment& segment,
                                                  double quad_dt) {
  double v = 0.0;
  if (spec.signal.rate && spec.signal.rate_bound > 0.0) {
    v += left_rectangles(interval, quad_dt, [&](double u) {
      if (!spec.label_space.finite() && !target.full)
        throw InvalidArgument("finite label target requested on an interval label space");
      const double mass = spec.label_space.finite()
                              ? finite_label_mass(spec, spec.signal.kernel_q(u, h), target)
                              : 1.0;
      return spec.signal.rate(u, h) * mass;
    });
  }
  for (const auto& f : segment.signal_firings) {
    if (f.time > interval.lo && f.time <= interval.hi) {
      const double mass = spec.label_space.finite()
                              ? finite_label_mass(spec, spec.signal.kernel_r(f.time, h), target)
                              : (target.full ? 1.0 : 0.0);
      v += mass;
    }
  }
  return {interval, v};
}

CompensatorIncrement noise_compensator_increment(const ModelSpec& spec,
                                                 const History& h,
                                                 TimeInterval interval,
                                                 const ValueSet& target,
                                                 const PathSegment& segment,
                                                 double quad_dt) {
  double v = 0.0;
  auto y_at = [&](double u) { return segment.y_left ? segment.y_left(u) : 0.0; };
  if (spec.noise.rate && spec.noise.rate_bound > 0.0) {
    v += left_rectangles(interval, quad_dt, [&](double u) {
      const double y = y_at(u);
      return spec.noise.rate(u, h, y) * mark_mass(spec, spec.noise.kernel_q, u, h, y, target);
    });
  }
  for (const auto& f : segment.noise_firings) {
    if (f.time > interval.lo && f.time <= interval.hi)
      v += mark_mass(spec, spec.noise.kernel_r, f.time, h, f.y_before, target);
  }
  return {interval, v};
}

CompensatorIncrement history_compensator_increment(
    const ModelSpec& spec, const History& h, TimeInterval interval,
    const std::function<bool(const History&)>& target,
    const PathSegment& segment, double quad_dt) {
  if (!spec.label_space.finite())
    throw InvalidArgument("history compensator needs a finite label space");
  // Kernel mass pushed through the join map: the mark kernels lifted to the
  // history space put their mass on one-jump extensions of h. Probe joins
  // at a rectangle's left endpoint are nudged past the last recorded jump.
  auto joined_mass = [&](const LabelKernelFn& kernel, double u) {
    const Eigen::VectorXd m = kernel(u, h);
    double probe = u;
    const double floor_t = std::max(0.0, h.last_jump_time());
    if (!(probe > floor_t)) probe = std::nextafter(floor_t, kNoJump);
    double s = 0.0;
    for (int i = 0; i < m.size(); ++i) {
      const double e = spec.label_space.labels[static_cast<std::size_t>(i)];
      if (m(i) != 0.0 && target(h.joined(probe, e))) s += m(i);
    }
    return s;
  };
  double v = 0.0;
  if (spec.signal.rate && spec.signal.rate_bound > 0.0) {
    v += left_rectangles(interval, quad_dt, [&](double u) {
      return spec.signal.rate(u, h) * joined_mass(spec.signal.kernel_q, u);
    });
  }
  for (const auto& f : segment.signal_firings) {
    if (f.time > interval.lo && f.time <= interval.hi)
      v += joined_mass(spec.signal.kernel_r, f.time);
  }
  return {interval, v};
}

CompensatorIncrement jump_size_compensator_increment(
    const ModelSpec& spec, const History& h, TimeInterval interval,
    const SizeSet& sizes, const PathSegment& segment, double quad_dt) {
  auto y_at = [&](double u) { return segment.y_left ? segment.y_left(u) : 0.0; };
  double v = left_rectangles(interval, quad_dt, [&](double u) {
    const double y = y_at(u);
    double rate = 0.0;
    if (spec.signal.rate && spec.signal.rate_bound > 0.0)
      rate += spec.signal.rate(u, h) *
              label_image_mass(spec, spec.signal.kernel_q, spec.obs.k_inaccessible, u, h, y, sizes);
    if (spec.noise.rate && spec.noise.rate_bound > 0.0)
      rate += spec.noise.rate(u, h, y) *
              mark_image_mass(spec, spec.noise.kernel_q, spec.obs.g_inaccessible, u, h, y, sizes);
    return rate;
  });
  for (const auto& f : segment.signal_firings) {
    if (f.time > interval.lo && f.time <= interval.hi)
      v += label_image_mass(spec, spec.signal.kernel_r, spec.obs.k_predictable, f.time, h,
                            f.y_before, sizes);
  }
  for (const auto& f : segment.noise_firings) {
    if (f.time > interval.lo && f.time <= interval.hi)
      v += mark_image_mass(spec, spec.noise.kernel_r, spec.obs.g_predictable, f.time, h,
                           f.y_before, sizes);
  }
  return {interval, v};
}

CompensatorIncrement filtered_jump_size_compensator_increment(
    const std::vector<WeightedHistory>& atoms, const ModelSpec& spec,
    TimeInterval interval, const SizeSet& sizes, const PathSegment& segment,
    double quad_dt) {
  double v = 0.0;
  for (const auto& a : atoms)
    v += a.w *
         jump_size_compensator_increment(spec, a.h, interval, sizes, segment, quad_dt).value;
  return {interval, v};
}

// --- Residual diagnostics ---------------------------------------------------

namespace {

struct PathResiduals {
  double signal = 0.0, noise = 0.0, jump_size = 0.0;
};

// One simulated path, all integrands at once.
void accumulate_path(const ModelSpec& spec, const SystemPath& path,
                     const std::vector<Integrand>& cs,
                     std::vector<PathResiduals>& out) {
  const SizeSet nonzero = SizeSet::whole_line();
  const int n = path.grid.n_cells;
  const double dt = path.grid.dt;
  const auto& jumps = path.latent_history.jumps();
  std::size_t jump_idx = 0;
  History h(path.latent_history.initial());

  std::size_t ev_idx = 0;
  for (int i = 0; i < n; ++i) {
    const double t = i * dt;
    // History caglad at the node (jumps at <= t applied).
    while (jump_idx < jumps.size() && jumps[jump_idx].time <= t) {
      h = h.joined(jumps[jump_idx].time, jumps[jump_idx].value);
      ++jump_idx;
    }
    const double y = path.y_samples[static_cast<std::size_t>(i)];

    double lam_m = 0.0, lam_n = 0.0, lam_size = 0.0;
    if (spec.signal.rate && spec.signal.rate_bound > 0.0) {
      lam_m = spec.signal.rate(t, h);
      lam_size += lam_m == 0.0 ? 0.0
                               : lam_m * label_image_mass(spec, spec.signal.kernel_q,
                                                          spec.obs.k_inaccessible, t, h, y,
                                                          nonzero);
    }
    if (spec.noise.rate && spec.noise.rate_bound > 0.0) {
      lam_n = spec.noise.rate(t, h, y);
      lam_size += lam_n == 0.0 ? 0.0
                               : lam_n * mark_image_mass(spec, spec.noise.kernel_q,
                                                         spec.obs.g_inaccessible, t, h, y,
                                                         nonzero);
    }
    for (std::size_t k = 0; k < cs.size(); ++k) {
      const double c = cs[k](t, h, y);
      out[k].signal -= c * lam_m * dt;
      out[k].noise -= c * lam_n * dt;
      out[k].jump_size -= c * lam_size * dt;
    }
    // Events inside (t, t+dt].
    const double t1 = t + dt;
    while (ev_idx < path.events.size() && path.events[ev_idx].time <= t1) {
      const auto& ev = path.events[ev_idx];
      const History h_before = path.latent_history.prefix_before(ev.time);
      for (std::size_t k = 0; k < cs.size(); ++k) {
        const double c = cs[k](ev.time, h_before, ev.y_before);
        switch (ev.stream) {
          case EventStream::SignalInaccessible:
            out[k].signal += c;
            break;
          case EventStream::SignalPredictable:
            out[k].signal += c;  // counting
            out[k].signal -= c;  // kernel atom of the compensator (mass 1)
            out[k].jump_size -= c * label_image_mass(spec, spec.signal.kernel_r,
                                                     spec.obs.k_predictable, ev.time,
                                                     h_before, ev.y_before, nonzero);
            break;
          case EventStream::NoiseInaccessible:
            out[k].noise += c;
            break;
          case EventStream::NoisePredictable:
            out[k].noise += c;
            out[k].noise -= c;
            out[k].jump_size -= c * mark_image_mass(spec, spec.noise.kernel_r,
                                                    spec.obs.g_predictable, ev.time,
                                                    h_before, ev.y_before, nonzero);
            break;
        }
        if (ev.obs_jump != 0.0) out[k].jump_size += c;
      }
      ++ev_idx;
    }
  }
}

int resolve_threads(int n_threads) {
  if (n_threads > 0) return n_threads;
  if (const char* env = std::getenv("JUMPFILTER_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

}  // namespace

std::vector<ResidualReport> compensator_residual_battery(
    const ModelSpec& spec, const std::vector<Integrand>& integrands,
    int n_paths, double horizon, double dt, std::uint64_t seed,
    int n_threads) {
  if (n_paths < 1) throw InvalidArgument("n_paths must be >= 1");
  const int threads = resolve_threads(n_threads);
  const std::size_t ni = integrands.size();

  struct Moments {
    std::vector<double> s1, s2;  // per integrand x measure (3 measures)
    explicit Moments(std::size_t k) : s1(3 * k, 0.0), s2(3 * k, 0.0) {}
    void add(std::size_t k, const PathResiduals& r) {
      const double v[3] = {r.signal, r.noise, r.jump_size};
      for (int m = 0; m < 3; ++m) {
        s1[3 * k + m] += v[m];
        s2[3 * k + m] += v[m] * v[m];
      }
    }
  };

  auto worker = [&](int lo, int hi) {
    Moments acc(ni);
    std::vector<PathResiduals> res(ni);
    for (int p = lo; p < hi; ++p) {
      const SystemPath path = simulate(spec, horizon, dt, derive_seed(seed, p));
      for (auto& r : res) r = PathResiduals{};
      accumulate_path(spec, path, integrands, res);
      for (std::size_t k = 0; k < ni; ++k) acc.add(k, res[k]);
    }
    return acc;
  };

  Moments total(ni);
  if (threads <= 1 || n_paths < 4) {
    total = worker(0, n_paths);
  } else {
    std::vector<std::future<Moments>> futs;
    const int chunk = (n_paths + threads - 1) / threads;
    for (int lo = 0; lo < n_paths; lo += chunk)
      futs.push_back(std::async(std::launch::async, worker, lo,
                                std::min(n_paths, lo + chunk)));
    for (auto& f : futs) {
      Moments m = f.get();
      for (std::size_t k = 0; k < total.s1.size(); ++k) {
        total.s1[k] += m.s1[k];
        total.s2[k] += m.s2[k];
      }
    }
  }

  std::vector<ResidualReport> reports(ni);
  for (std::size_t k = 0; k < ni; ++k) {
    auto stats = [&](int m) {
      ResidualStats st;
      st.n_paths = n_paths;
      const double mean = total.s1[3 * k + m] / n_paths;
      const double var =
          n_paths > 1
              ? std::max(0.0, (total.s2[3 * k + m] - n_paths * mean * mean) / (n_paths - 1))
              : 0.0;
      st.mean = mean;
      st.stderr_ = std::sqrt(var / n_paths);
      return st;
    };
    reports[k].signal = stats(0);
    reports[k].noise = stats(1);
    reports[k].jump_size = stats(2);
  }
  return reports;
}

ResidualReport compensator_residual(const ModelSpec& spec, const Integrand& C,
                                    int n_paths, double horizon, double dt,
                                    std::uint64_t seed, int n_threads) {
  return compensator_residual_battery(spec, {C}, n_paths, horizon, dt, seed,
                                      n_threads)[0];
}

std::vector<std::pair<std::string, Integrand>> standard_integrands() {
  std::vector<std::pair<std::string, Integrand>> out;
  out.emplace_back("one", [](double, const History&, double) { return 1.0; });
  out.emplace_back("time", [](double t, const History&, double) {
    return t / (1.0 + t);
  });
  out.emplace_back("state", [](double, const History& h, double) {
    const double v = h.current_value();
    return v / (1.0 + std::abs(v));
  });
  out.emplace_back("obs", [](double, const History&, double y) {
    return std::tanh(y);
  });
  out.emplace_back("jumps", [](double, const History& h, double) {
    return 1.0 / (1.0 + h.total_jumps());
  });
  return out;
}

std::vector<double> innovation_path(const std::vector<double>& filtered_drift,
                                    const ObservationRecord& obs,
                                    const ModelSpec& spec) {
  const int n = obs.grid.n_cells;
  if (static_cast<int>(filtered_drift.size()) < n)
    throw InvalidArgument("innovation needs a filtered drift value per grid node");
  const double dt = obs.grid.dt;
  std::vector<double> innov(static_cast<std::size_t>(n) + 1, 0.0);
  std::size_t jidx = 0;
  for (int i = 0; i < n; ++i) {
    const double t = i * dt;
    const double y = obs.y_samples[static_cast<std::size_t>(i)];
    double dy = obs.y_samples[static_cast<std::size_t>(i) + 1] - y;
    while (jidx < obs.jumps.size() && obs.jumps[jidx].time <= t + dt) {
      if (obs.jumps[jidx].time > t) dy -= obs.jumps[jidx].size;
      ++jidx;
    }
    const double sig = spec.obs.vol(t, y);
    innov[static_cast<std::size_t>(i) + 1] =
        innov[static_cast<std::size_t>(i)] +
        (dy - filtered_drift[static_cast<std::size_t>(i)] * dt) / sig;
  }
  return innov;
}

}  // namespace jumpfilter
