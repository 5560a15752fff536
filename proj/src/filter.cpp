#include "jumpfilter/filter.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "jumpfilter/errors.hpp"

namespace jumpfilter {

namespace {

double normalize(std::vector<WeightedHistory>& atoms, double t,
                 const char* what) {
  double s = 0.0;
  for (const auto& a : atoms) s += a.w;
  if (!(s > 0.0) || !std::isfinite(s)) {
    std::ostringstream os;
    os << what << " at t=" << t;
    throw FilterError(os.str(), t);
  }
  for (auto& a : atoms) a.w /= s;
  return s;
}

// Merge atoms with identical histories (exact mode keeps the set small).
void dedup(std::vector<WeightedHistory>& atoms) {
  std::vector<WeightedHistory> out;
  out.reserve(atoms.size());
  for (auto& a : atoms) {
    bool merged = false;
    for (auto& b : out) {
      if (b.h == a.h) {
        b.w += a.w;
        merged = true;
        break;
      }
    }
    if (!merged) out.push_back(std::move(a));
  }
  atoms = std::move(out);
}

bool size_matches(double image, double observed, double tol) {
  return std::abs(image - observed) <= tol;
}

// Likelihood of the observed size under the noise channel of one atom.
// Finite kernels enumerate marks through the size map; continuous kernels
// need the map to be the identity at the observed size (otherwise a
// user-supplied likelihood is required). A missing size map means the
// channel is invisible: only size 0 is explained.
double noise_size_likelihood(const ModelSpec& spec, const MarkKernel& kernel,
                             const ObservationCoefficients::SizeLikelihood& ell,
                             const ObservationCoefficients::JumpMap& gmap,
                             double t, const History& h, double y_left,
                             double size) {
  if (ell) return ell(t, h, y_left, size);
  if (!gmap) return size == 0.0 ? 1.0 : 0.0;
  const double tol = spec.size_match_tol;
  if (kernel.continuous()) {
    if (size == 0.0) return 0.0;  // continuous sizes put no mass on a point
    if (size_matches(gmap(t, h, y_left, size), size, 0.0))
      return kernel.density(t, h, y_left, size);
    throw FilterError(
        "continuous noise marks with a non-identity size map need a "
        "user-supplied size likelihood",
        t);
  }
  if (!kernel.mass) return size == 0.0 ? 1.0 : 0.0;
  const Eigen::VectorXd m = kernel.mass(t, h, y_left);
  double acc = 0.0;
  for (int i = 0; i < m.size(); ++i) {
    const double z = spec.mark_space.values[static_cast<std::size_t>(i)];
    if (size_matches(gmap(t, h, y_left, z), size, tol)) acc += m(i);
  }
  return acc;
}

// Mass of noise marks whose size map is nonzero (jumps visible in the
// observation path).
double noise_visible_mass(const ModelSpec& spec, const MarkKernel& kernel,
                          const ObservationCoefficients::JumpMap& gmap,
                          double t, const History& h, double y_left) {
  if (!gmap) return 0.0;
  if (kernel.continuous()) return 1.0;  // a density puts no mass on size 0
  if (!kernel.mass) return 0.0;
  const Eigen::VectorXd m = kernel.mass(t, h, y_left);
  double acc = 0.0;
  for (int i = 0; i < m.size(); ++i) {
    const double z = spec.mark_space.values[static_cast<std::size_t>(i)];
    if (gmap(t, h, y_left, z) != 0.0) acc += m(i);
  }
  return acc;
}

int find_or_create(std::vector<WeightedHistory>& atoms, const History& h) {
  for (std::size_t k = 0; k < atoms.size(); ++k)
    if (atoms[k].h == h) return static_cast<int>(k);
  atoms.push_back({h, 0.0});
  return static_cast<int>(atoms.size()) - 1;
}

struct AtomChannel {
  double b = 0.0;
  double lam_m = 0.0;
  double visible_rate = 0.0;  // intensity of observation-visible jumps
  Eigen::VectorXd q_mass;     // signal kernel masses (finite spaces)
  std::vector<char> silent;   // per mark: size map vanishes
};

AtomChannel atom_channel(const ModelSpec& spec, double t, const History& h,
                         double y_left) {
  AtomChannel c;
  c.b = spec.obs.drift ? spec.obs.drift(t, h, y_left) : 0.0;
  c.lam_m = spec.signal.rate ? spec.signal.rate(t, h) : 0.0;
  if (c.lam_m > 0.0 && spec.label_space.finite()) {
    c.q_mass = spec.signal.kernel_q(t, h);
    c.silent.resize(static_cast<std::size_t>(c.q_mass.size()), 1);
    double vis = 0.0;
    for (int i = 0; i < c.q_mass.size(); ++i) {
      if (c.q_mass(i) == 0.0) continue;
      const double e = spec.label_space.labels[static_cast<std::size_t>(i)];
      const double s = spec.obs.k_inaccessible
                           ? spec.obs.k_inaccessible(t, h, y_left, e)
                           : 0.0;
      if (s != 0.0) {
        c.silent[static_cast<std::size_t>(i)] = 0;
        vis += c.q_mass(i);
      }
    }
    c.visible_rate += c.lam_m * vis;
  }
  const double lam_n = spec.noise.rate ? spec.noise.rate(t, h, y_left) : 0.0;
  if (lam_n > 0.0)
    c.visible_rate += lam_n * noise_visible_mass(spec, spec.noise.kernel_q,
                                                 spec.obs.g_inaccessible, t, h,
                                                 y_left);
  return c;
}

}  // namespace

Functional make_functional(const std::string& id) {
  Functional f;
  f.id = id;
  if (id == "one") {
    f.eval = [](const History&) { return 1.0; };
    f.bound = 1.0;
  } else if (id == "current_value") {
    f.eval = [](const History& h) { return h.current_value(); };
  } else if (id == "running_max") {
    f.eval = [](const History& h) {
      double m = h.initial();
      for (const auto& j : h.jumps()) m = std::max(m, j.value);
      return m;
    };
  } else if (id == "jump_count") {
    f.eval = [](const History& h) { return static_cast<double>(h.total_jumps()); };
  } else if (id.rfind("indicator:", 0) == 0) {
    const double v = std::stod(id.substr(10));
    f.eval = [v](const History& h) { return h.current_value() == v ? 1.0 : 0.0; };
    f.bound = 1.0;
  } else {
    throw InvalidArgument("unknown functional id: " + id);
  }
  return f;
}

FilterState filter_init(const ModelSpec& spec, const std::vector<double>& prior,
                        FilterMode mode, int n_particles, Rng& rng) {
  FilterState st;
  st.mode = mode;
  st.t = 0.0;

  std::vector<std::pair<double, double>> support;  // (label, weight)
  if (prior.empty()) {
    support.emplace_back(spec.signal.initial, 1.0);
  } else {
    if (!spec.label_space.finite() ||
        static_cast<int>(prior.size()) != spec.label_space.size())
      throw InvalidArgument("prior must have one weight per label");
    double s = 0.0;
    for (double p : prior) {
      if (p < 0.0) throw InvalidArgument("prior weights must be nonnegative");
      s += p;
    }
    if (!(s > 0.0)) throw InvalidArgument("prior has empty support");
    for (std::size_t i = 0; i < prior.size(); ++i)
      if (prior[i] > 0.0) support.emplace_back(spec.label_space.labels[i], prior[i] / s);
  }

  if (mode == FilterMode::Exact) {
    for (const auto& [label, w] : support) st.atoms.push_back({History(label), w});
  } else {
    if (n_particles < 1) throw InvalidArgument("n_particles must be >= 1");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    st.atoms.reserve(static_cast<std::size_t>(n_particles));
    for (int k = 0; k < n_particles; ++k) {
      const double u = unif(rng);
      double acc = 0.0;
      double label = support.back().first;
      for (const auto& [l, w] : support) {
        acc += w;
        if (u <= acc) {
          label = l;
          break;
        }
      }
      st.atoms.push_back({History(label), 1.0 / n_particles});
    }
    std::exponential_distribution<double> exp_dist(
        std::max(spec.signal.rate_bound, 1e-300));
    st.next_proposal.resize(st.atoms.size(), kNoJump);
    if (spec.signal.rate_bound > 0.0)
      for (auto& np : st.next_proposal) np = exp_dist(rng);
  }
  return st;
}

double inaccessible_generator(const FilterState& state, const ModelSpec& spec,
                              double t,
                              const std::function<double(const History&)>& f) {
  double acc = 0.0;
  for (const auto& a : state.atoms) {
    const double lam = spec.signal.rate ? spec.signal.rate(t, a.h) : 0.0;
    if (lam == 0.0 || a.w == 0.0) continue;
    const double fh = f(a.h);
    double inner = 0.0;
    if (spec.label_space.finite()) {
      const Eigen::VectorXd m = spec.signal.kernel_q(t, a.h);
      for (int i = 0; i < m.size(); ++i) {
        if (m(i) == 0.0) continue;
        const double e = spec.label_space.labels[static_cast<std::size_t>(i)];
        inner += m(i) * (f(a.h.joined(t, e)) - fh);
      }
    } else {
      // Interval label space: trapezoid quadrature of the kernel density
      // is the model author's responsibility; not provided by presets.
      throw InvalidArgument("generator quadrature needs a finite label space");
    }
    acc += a.w * lam * inner;
  }
  return acc;
}

double predictable_generator(const FilterState& state, const ModelSpec& spec,
                             double t,
                             const std::function<double(const History&)>& f) {
  double acc = 0.0;
  for (const auto& a : state.atoms) {
    if (a.w == 0.0) continue;
    const double fh = f(a.h);
    if (!spec.label_space.finite())
      throw InvalidArgument("generator quadrature needs a finite label space");
    const Eigen::VectorXd m = spec.signal.kernel_r(t, a.h);
    double inner = 0.0;
    for (int i = 0; i < m.size(); ++i) {
      if (m(i) == 0.0) continue;
      const double e = spec.label_space.labels[static_cast<std::size_t>(i)];
      inner += m(i) * (f(a.h.joined(t, e)) - fh);
    }
    acc += a.w * inner;
  }
  return acc;
}

namespace {

void step_exact(FilterState& state, const ModelSpec& spec, double t0,
                double dt, double dy_c, double y_left, ContinuousForm form,
                double* gamma_const_out) {
  auto& atoms = state.atoms;
  std::vector<AtomChannel> ch;
  ch.reserve(atoms.size());
  for (const auto& a : atoms) ch.push_back(atom_channel(spec, t0, a.h, y_left));

  // Silent signal-jump flows move weight between current-value variants of
  // the same jump skeleton; only sound for value-homogeneous models.
  std::vector<double> delta(atoms.size(), 0.0);
  const std::size_t n_before = atoms.size();
  for (std::size_t j = 0; j < n_before; ++j) {
    // By value: find_or_create below may grow (and reallocate) ch.
    const AtomChannel c = ch[j];
    if (c.lam_m == 0.0 || atoms[j].w == 0.0 || c.q_mass.size() == 0) continue;
    const double cur = atoms[j].h.current_value();
    for (int i = 0; i < c.q_mass.size(); ++i) {
      if (!c.silent[static_cast<std::size_t>(i)] || c.q_mass(i) == 0.0) continue;
      const double e = spec.label_space.labels[static_cast<std::size_t>(i)];
      if (e == cur) continue;
      if (!spec.value_homogeneous)
        throw UnsupportedMode(
            "exact mode unsupported: the model has observation-invisible "
            "inaccessible signal jumps and is not value-homogeneous; use "
            "particle mode");
      const double amount = atoms[j].w * c.lam_m * c.q_mass(i) * dt;
      if (amount == 0.0) continue;
      const int k = find_or_create(atoms, atoms[j].h.with_current_value(e));
      if (static_cast<std::size_t>(k) >= delta.size()) {
        delta.resize(static_cast<std::size_t>(k) + 1, 0.0);
        ch.push_back(atom_channel(spec, t0, atoms[static_cast<std::size_t>(k)].h, y_left));
      }
      delta[j] -= amount;
      delta[static_cast<std::size_t>(k)] += amount;
    }
  }

  const double sigma = spec.obs.vol(t0, y_left);
  const double sig2 = sigma * sigma;

  if (gamma_const_out) {
    double pb = 0.0;
    for (std::size_t j = 0; j < atoms.size(); ++j) pb += atoms[j].w * ch[j].b;
    double pf = 0.0;
    for (const auto& a : atoms) pf += a.w;
    double g = 0.0;
    for (std::size_t j = 0; j < atoms.size(); ++j)
      g += atoms[j].w * (1.0 - pf) * (ch[j].b - pb);
    *gamma_const_out = g / sigma;
  }

  if (form == ContinuousForm::Likelihood) {
    for (std::size_t j = 0; j < atoms.size(); ++j) {
      atoms[j].w += delta[j];
      if (atoms[j].w < 0.0) atoms[j].w = 0.0;
    }
    double gmax = -std::numeric_limits<double>::infinity();
    std::vector<double> g(atoms.size());
    for (std::size_t j = 0; j < atoms.size(); ++j) {
      g[j] = -ch[j].visible_rate * dt + ch[j].b * dy_c / sig2 -
             ch[j].b * ch[j].b * dt / (2.0 * sig2);
      gmax = std::max(gmax, g[j]);
    }
    for (std::size_t j = 0; j < atoms.size(); ++j)
      atoms[j].w *= std::exp(g[j] - gmax);
    normalize(atoms, t0, "filter collapse: all weights vanished in a cell");
  } else {
    double pb = 0.0, lam_bar = 0.0;
    for (std::size_t j = 0; j < atoms.size(); ++j) {
      pb += atoms[j].w * ch[j].b;
      lam_bar += atoms[j].w * ch[j].visible_rate;
    }
    const double di = (dy_c - pb * dt) / sigma;
    for (std::size_t j = 0; j < atoms.size(); ++j) {
      const double w = atoms[j].w;
      atoms[j].w = w + delta[j] - w * (ch[j].visible_rate - lam_bar) * dt +
                   w * (ch[j].b - pb) * di / sigma;
      if (atoms[j].w < 0.0) atoms[j].w = 0.0;
    }
    normalize(atoms, t0, "filter collapse: all weights vanished in a cell");
  }
  state.t = t0 + dt;
}

void step_particle(FilterState& state, const ModelSpec& spec, double t0,
                   double dt, double dy_c, double y_left, Rng* rng,
                   double* gamma_const_out) {
  if (!rng) throw InvalidArgument("particle mode needs a random generator");
  auto& atoms = state.atoms;
  const double t1 = t0 + dt;
  const double bound = spec.signal.rate_bound;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> exp_dist(std::max(bound, 1e-300));

  std::vector<double> bvals(atoms.size());
  std::vector<double> survive(atoms.size(), 0.0);
  for (std::size_t j = 0; j < atoms.size(); ++j) {
    bvals[j] = spec.obs.drift ? spec.obs.drift(t0, atoms[j].h, y_left) : 0.0;
    const double lam_n =
        spec.noise.rate ? spec.noise.rate(t0, atoms[j].h, y_left) : 0.0;
    if (lam_n > 0.0)
      survive[j] = lam_n * noise_visible_mass(spec, spec.noise.kernel_q,
                                              spec.obs.g_inaccessible, t0,
                                              atoms[j].h, y_left);
  }

  // Propagate latent jumps by thinning; a proposal whose size map is
  // nonzero contradicts the event-free piece and kills the particle.
  if (bound > 0.0) {
    for (std::size_t j = 0; j < atoms.size(); ++j) {
      while (state.next_proposal[j] <= t1) {
        const double tau = state.next_proposal[j];
        state.next_proposal[j] += exp_dist(*rng);
        if (atoms[j].w == 0.0) continue;
        const double lam = spec.signal.rate ? spec.signal.rate(tau, atoms[j].h) : 0.0;
        if (lam > bound * (1.0 + 1e-12))
          throw SimulationError("majorant violated: signal rate exceeds declared bound");
        if (unif(*rng) * bound >= lam) continue;
        double e;
        if (spec.label_space.finite()) {
          const Eigen::VectorXd m = spec.signal.kernel_q(tau, atoms[j].h);
          const double u = unif(*rng) * m.sum();
          double acc = 0.0;
          int idx = static_cast<int>(m.size()) - 1;
          for (int i = 0; i < m.size(); ++i) {
            acc += m(i);
            if (u <= acc) {
              idx = i;
              break;
            }
          }
          e = spec.label_space.labels[static_cast<std::size_t>(idx)];
        } else if (spec.signal.sampler_q) {
          e = spec.signal.sampler_q(tau, atoms[j].h, *rng);
        } else {
          throw UnsupportedMode(
              "particle propagation over an interval label space needs a "
              "signal mark sampler");
        }
        const double s = spec.obs.k_inaccessible
                             ? spec.obs.k_inaccessible(tau, atoms[j].h, y_left, e)
                             : 0.0;
        if (s != 0.0)
          atoms[j].w = 0.0;  // visible jump in a jump-free piece
        else
          atoms[j].h = atoms[j].h.joined(tau, e);
      }
    }
  }

  const double sigma = spec.obs.vol(t0, y_left);
  const double sig2 = sigma * sigma;
  if (gamma_const_out) {
    double pb = 0.0, pw = 0.0;
    for (std::size_t j = 0; j < atoms.size(); ++j) {
      pb += atoms[j].w * bvals[j];
      pw += atoms[j].w;
    }
    double g = 0.0;
    for (std::size_t j = 0; j < atoms.size(); ++j)
      g += atoms[j].w * (1.0 - pw) * (bvals[j] - pb);
    *gamma_const_out = g / sigma;
  }
  double gmax = -std::numeric_limits<double>::infinity();
  std::vector<double> g(atoms.size());
  for (std::size_t j = 0; j < atoms.size(); ++j) {
    g[j] = -survive[j] * dt + bvals[j] * dy_c / sig2 -
           bvals[j] * bvals[j] * dt / (2.0 * sig2);
    gmax = std::max(gmax, g[j]);
  }
  for (std::size_t j = 0; j < atoms.size(); ++j)
    atoms[j].w *= std::exp(g[j] - gmax);
  normalize(atoms, t0, "filter collapse: all particle weights vanished");
  state.t = t1;
}

}  // namespace

void step_continuous(FilterState& state, const ModelSpec& spec, double t0,
                     double dt, double dy_c, double y_left,
                     ContinuousForm form, Rng* rng, double* gamma_const_out) {
  if (!(dt > 0.0)) return;
  if (state.mode == FilterMode::Exact)
    step_exact(state, spec, t0, dt, dy_c, y_left, form, gamma_const_out);
  else
    step_particle(state, spec, t0, dt, dy_c, y_left, rng, gamma_const_out);
}

double update_inaccessible_jump(FilterState& state, const ModelSpec& spec,
                                double t, double size, double y_left) {
  double sum_before = 0.0;
  for (const auto& a : state.atoms) sum_before += a.w;

  std::vector<WeightedHistory> next;
  std::vector<double> next_prop;
  next.reserve(state.atoms.size());
  const bool particle = state.mode == FilterMode::Particle;
  const double tol = spec.size_match_tol;

  for (std::size_t j = 0; j < state.atoms.size(); ++j) {
    const auto& a = state.atoms[j];
    if (a.w == 0.0 && !particle) continue;
    // Noise-channel explanation: the signal does not move.
    const double lam_n = spec.noise.rate ? spec.noise.rate(t, a.h, y_left) : 0.0;
    if (lam_n > 0.0) {
      const double lik =
          noise_size_likelihood(spec, spec.noise.kernel_q, spec.obs.ell_ig,
                                spec.obs.g_inaccessible, t, a.h, y_left, size);
      if (lik > 0.0 || particle) {
        next.push_back({a.h, a.w * lam_n * lik});
        if (particle) next_prop.push_back(state.next_proposal[j]);
      }
    } else if (particle) {
      next.push_back({a.h, 0.0});
      next_prop.push_back(state.next_proposal[j]);
    }
    // Signal-channel explanation: the signal jumps to a matching mark.
    const double lam_m = spec.signal.rate ? spec.signal.rate(t, a.h) : 0.0;
    if (lam_m > 0.0) {
      if (!spec.label_space.finite())
        throw FilterError(
            "observed-jump update over an interval label space needs "
            "user-supplied size likelihoods",
            t);
      if (spec.obs.ell_ik) {
        const double lik = spec.obs.ell_ik(t, a.h, y_left, size);
        if (lik > 0.0) {
          const Eigen::VectorXd m = spec.signal.kernel_q(t, a.h);
          for (int i = 0; i < m.size(); ++i) {
            if (m(i) == 0.0) continue;
            const double e = spec.label_space.labels[static_cast<std::size_t>(i)];
            next.push_back({a.h.joined(t, e), a.w * lam_m * m(i) * lik});
            if (particle) next_prop.push_back(state.next_proposal[j]);
          }
        }
      } else if (spec.obs.k_inaccessible) {
        const Eigen::VectorXd m = spec.signal.kernel_q(t, a.h);
        for (int i = 0; i < m.size(); ++i) {
          if (m(i) == 0.0) continue;
          const double e = spec.label_space.labels[static_cast<std::size_t>(i)];
          const double s = spec.obs.k_inaccessible(t, a.h, y_left, e);
          if (s != 0.0 && size_matches(s, size, tol)) {
            next.push_back({a.h.joined(t, e), a.w * lam_m * m(i)});
            if (particle) next_prop.push_back(state.next_proposal[j]);
          }
        }
      }
    }
  }

  if (state.mode == FilterMode::Exact) dedup(next);
  state.atoms = std::move(next);
  if (particle) state.next_proposal = std::move(next_prop);
  normalize(state.atoms, t,
            "incompatible observation: observed jump size has zero "
            "likelihood under every atom");
  state.t = t;
  return 1.0 - sum_before;
}

double update_predictable_signal(FilterState& state, const ModelSpec& spec,
                                 double t, double size, double y_left) {
  double sum_before = 0.0;
  for (const auto& a : state.atoms) sum_before += a.w;
  if (!spec.label_space.finite())
    throw UnsupportedMode("clock updates need a finite label space");

  std::vector<WeightedHistory> next;
  std::vector<double> next_prop;
  const bool particle = state.mode == FilterMode::Particle;
  const double tol = spec.size_match_tol;

  for (std::size_t j = 0; j < state.atoms.size(); ++j) {
    const auto& a = state.atoms[j];
    const Eigen::VectorXd m = spec.signal.kernel_r(t, a.h);
    const double atom_lik =
        spec.obs.ell_pk ? spec.obs.ell_pk(t, a.h, y_left, size) : 1.0;
    for (int i = 0; i < m.size(); ++i) {
      if (m(i) == 0.0) continue;
      const double e = spec.label_space.labels[static_cast<std::size_t>(i)];
      double lik = atom_lik;
      if (!spec.obs.ell_pk) {
        const double s = spec.obs.k_predictable
                             ? spec.obs.k_predictable(t, a.h, y_left, e)
                             : 0.0;
        lik = size_matches(s, size, tol) ? 1.0 : 0.0;
      }
      if (lik == 0.0 && !particle) continue;
      next.push_back({a.h.joined(t, e), a.w * m(i) * lik});
      if (particle) next_prop.push_back(state.next_proposal[j]);
    }
  }

  if (state.mode == FilterMode::Exact) dedup(next);
  state.atoms = std::move(next);
  if (particle) state.next_proposal = std::move(next_prop);
  normalize(state.atoms, t, "incompatible observation at clock time");
  state.t = t;
  return 1.0 - sum_before;
}

double update_predictable_noise(FilterState& state, const ModelSpec& spec,
                                double t, double size, double y_left) {
  double sum_before = 0.0;
  for (const auto& a : state.atoms) sum_before += a.w;
  for (auto& a : state.atoms) {
    const double lik =
        noise_size_likelihood(spec, spec.noise.kernel_r, spec.obs.ell_pg,
                              spec.obs.g_predictable, t, a.h, y_left, size);
    a.w *= lik;
  }
  normalize(state.atoms, t, "incompatible observation at clock time");
  state.t = t;
  return 1.0 - sum_before;
}

namespace {

void systematic_resample(FilterState& state, const ModelSpec& spec, int n,
                         double t, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u0 = unif(rng) / n;
  std::vector<WeightedHistory> next;
  next.reserve(static_cast<std::size_t>(n));
  std::size_t idx = 0;
  double cum_idx = state.atoms.empty() ? 0.0 : state.atoms[0].w;
  for (int k = 0; k < n; ++k) {
    const double pos = u0 + static_cast<double>(k) / n;
    while (cum_idx < pos && idx + 1 < state.atoms.size()) {
      ++idx;
      cum_idx += state.atoms[idx].w;
    }
    next.push_back({state.atoms[idx].h, 1.0 / n});
  }
  state.atoms = std::move(next);
  state.next_proposal.assign(static_cast<std::size_t>(n), kNoJump);
  if (spec.signal.rate_bound > 0.0) {
    std::exponential_distribution<double> exp_dist(spec.signal.rate_bound);
    for (auto& np : state.next_proposal) np = t + exp_dist(rng);
  }
}

// Merge exact-mode atoms onto current-value classes, keeping the heaviest
// member's history as the class representative. Sound when every model
// function reads the history through its current value only.
void collapse_to_values(FilterState& state) {
  std::vector<WeightedHistory> classes;
  for (auto& a : state.atoms) {
    bool merged = false;
    for (auto& c : classes) {
      if (c.h.current_value() == a.h.current_value()) {
        if (a.w > c.w) c.h = a.h;
        c.w += a.w;
        merged = true;
        break;
      }
    }
    if (!merged) classes.push_back(std::move(a));
  }
  state.atoms = std::move(classes);
}

struct ObsEvent {
  double t;
  enum class Kind { Inaccessible, SignalClock, NoiseClock } kind;
  double size = 0.0;
};

std::vector<ObsEvent> classify_events(const ObservationRecord& obs) {
  std::vector<ObsEvent> evs;
  for (double t : obs.signal_clock_times)
    evs.push_back({t, ObsEvent::Kind::SignalClock, 0.0});
  for (double t : obs.noise_clock_times)
    evs.push_back({t, ObsEvent::Kind::NoiseClock, 0.0});
  for (const auto& j : obs.jumps) {
    bool matched = false;
    for (auto& e : evs) {
      if (e.t == j.time) {
        e.size = j.size;
        matched = true;
        break;
      }
    }
    if (!matched) evs.push_back({j.time, ObsEvent::Kind::Inaccessible, j.size});
  }
  std::sort(evs.begin(), evs.end(),
            [](const ObsEvent& a, const ObsEvent& b) { return a.t < b.t; });
  return evs;
}

}  // namespace

FilterRun run_filter(const ModelSpec& spec, const ObservationRecord& obs,
                     const FilterOptions& opts) {
  if (opts.mode == FilterMode::Exact && !spec.label_space.finite())
    throw UnsupportedMode("exact mode needs a finite label space");
  if (obs.grid.n_cells < 1 || obs.y_samples.size() !=
                                  static_cast<std::size_t>(obs.grid.n_cells) + 1)
    throw InvalidArgument("observation record grid and samples disagree");

  Rng rng = make_rng(derive_seed(opts.seed, 0x46494c54ULL));
  FilterState state =
      filter_init(spec, opts.prior, opts.mode, opts.n_particles, rng);

  const int n = obs.grid.n_cells;
  const double dt = obs.grid.dt;
  const int n_labels = spec.label_space.finite() ? spec.label_space.size() : 0;

  FilterRun run;
  run.grid = obs.grid;
  for (const auto& f : opts.functionals) run.functional_ids.push_back(f.id);
  run.estimates.assign(opts.functionals.size(),
                       std::vector<double>(static_cast<std::size_t>(n) + 1, 0.0));
  run.filtered_drift.assign(static_cast<std::size_t>(n) + 1, 0.0);
  if (n_labels > 0) {
    run.marginals.grid = obs.grid;
    run.marginals.probs = Eigen::MatrixXd::Zero(n + 1, n_labels);
  }

  const std::vector<ObsEvent> events = classify_events(obs);
  for (const auto& e : events)
    if (!(e.t > 0.0) || e.t > obs.grid.horizon() * (1.0 + 1e-12))
      throw InvalidArgument("observation event outside the grid horizon");

  std::vector<double> snapshot_times = opts.snapshot_times;
  std::sort(snapshot_times.begin(), snapshot_times.end());
  std::size_t snap_idx = 0;

  auto record_node = [&](int i) {
    const double t = obs.grid.time(i);
    const double y = obs.y_samples[static_cast<std::size_t>(i)];
    double sum_w = 0.0;
    for (const auto& a : state.atoms) sum_w += a.w;
    run.max_norm_defect = std::max(run.max_norm_defect, std::abs(sum_w - 1.0));

    for (std::size_t k = 0; k < opts.functionals.size(); ++k) {
      const auto& f = opts.functionals[k];
      double acc = 0.0;
      for (const auto& a : state.atoms) {
        const double v = f.eval(a.h);
        if (std::abs(v) > f.bound)
          throw EvaluationError("functional '" + f.id +
                                "' exceeds its declared bound on a filter atom");
        acc += a.w * v;
      }
      run.estimates[k][static_cast<std::size_t>(i)] = acc;
    }
    double drift_acc = 0.0;
    if (spec.obs.drift)
      for (const auto& a : state.atoms) drift_acc += a.w * spec.obs.drift(t, a.h, y);
    run.filtered_drift[static_cast<std::size_t>(i)] = drift_acc;

    if (n_labels > 0) {
      for (const auto& a : state.atoms) {
        const int idx = spec.label_space.index_of(a.h.current_value());
        if (idx >= 0) run.marginals.probs(i, idx) += a.w;
      }
    }
    while (snap_idx < snapshot_times.size() &&
           t >= snapshot_times[snap_idx] - 1e-12) {
      run.snapshots.emplace_back(t, state.atoms);
      ++snap_idx;
    }
  };

  record_node(0);

  std::size_t ev_idx = 0;
  for (int i = 0; i < n; ++i) {
    const double t0 = obs.grid.time(i);
    const double t1 = obs.grid.time(i + 1);
    const double y0 = obs.y_samples[static_cast<std::size_t>(i)];
    double dy_total = obs.y_samples[static_cast<std::size_t>(i) + 1] - y0;

    // Events inside this cell, their sizes removed from the continuous part.
    std::size_t ev_end = ev_idx;
    double size_sum = 0.0;
    while (ev_end < events.size() && events[ev_end].t <= t1 * (1.0 + 1e-15)) {
      size_sum += events[ev_end].size;
      ++ev_end;
    }
    const double dy_c = dy_total - size_sum;

    double cursor = t0;
    double y_run = y0;
    for (std::size_t k = ev_idx; k < ev_end; ++k) {
      const ObsEvent& ev = events[k];
      const double piece = ev.t - cursor;
      if (piece > 0.0) {
        const double dy_piece = dy_c * (piece / dt);
        double gamma_c = 0.0;
        step_continuous(state, spec, cursor, piece, dy_piece, y_run,
                        opts.form, &rng, &gamma_c);
        run.max_gamma_constant =
            std::max(run.max_gamma_constant, std::abs(gamma_c));
        y_run += dy_piece;
        cursor = ev.t;
      }
      // Threshold firings pin the observation left limit to the level.
      double y_left = y_run;
      if (ev.kind == ObsEvent::Kind::SignalClock && spec.signal.clock &&
          spec.signal.clock->kind == PredictableClock::Kind::Threshold)
        y_left = spec.signal.clock->level;
      if (ev.kind == ObsEvent::Kind::NoiseClock && spec.noise.clock &&
          spec.noise.clock->kind == PredictableClock::Kind::Threshold)
        y_left = spec.noise.clock->level;

      double defect = 0.0;
      switch (ev.kind) {
        case ObsEvent::Kind::Inaccessible:
          defect = update_inaccessible_jump(state, spec, ev.t, ev.size, y_left);
          break;
        case ObsEvent::Kind::SignalClock:
          defect = update_predictable_signal(state, spec, ev.t, ev.size, y_left);
          break;
        case ObsEvent::Kind::NoiseClock:
          defect = update_predictable_noise(state, spec, ev.t, ev.size, y_left);
          break;
      }
      run.max_unit_update_defect =
          std::max(run.max_unit_update_defect, std::abs(defect));
      y_run = y_left + ev.size;
      cursor = ev.t;
    }
    ev_idx = ev_end;

    if (t1 - cursor > 0.0) {
      const double piece = t1 - cursor;
      const double dy_piece = dy_c * (piece / dt);
      double gamma_c = 0.0;
      step_continuous(state, spec, cursor, piece, dy_piece, y_run, opts.form,
                      &rng, &gamma_c);
      run.max_gamma_constant =
          std::max(run.max_gamma_constant, std::abs(gamma_c));
    }

    if (state.mode == FilterMode::Particle) {
      double ess_inv = 0.0;
      for (const auto& a : state.atoms) ess_inv += a.w * a.w;
      const double ess = ess_inv > 0.0 ? 1.0 / ess_inv : 0.0;
      const bool grew =
          static_cast<int>(state.atoms.size()) > opts.n_particles;
      if (grew || ess < opts.ess_fraction * opts.n_particles) {
        systematic_resample(state, spec, opts.n_particles, t1, rng);
        ++run.resample_count;
      }
    } else if (static_cast<int>(state.atoms.size()) > opts.max_exact_atoms) {
      if (!spec.value_homogeneous)
        throw UnsupportedMode(
            "exact mode unsupported: the reachable atom set outgrows the cap "
            "and the model is not value-homogeneous; use particle mode");
      collapse_to_values(state);
      ++run.collapse_count;
    }

    record_node(i + 1);
  }
  return run;
}

}  // namespace jumpfilter
