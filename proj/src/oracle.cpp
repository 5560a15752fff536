#include "jumpfilter/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "jumpfilter/errors.hpp"

namespace jumpfilter {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_gauss(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * d * d / var - 0.5 * std::log(2.0 * M_PI * var);
}

struct ObsEventView {
  double t;
  bool signal_clock;
  bool noise_clock;
  double size;
};

std::vector<ObsEventView> merged_events(const ObservationRecord& obs) {
  std::vector<ObsEventView> evs;
  for (double t : obs.signal_clock_times) evs.push_back({t, true, false, 0.0});
  for (double t : obs.noise_clock_times) evs.push_back({t, false, true, 0.0});
  for (const auto& j : obs.jumps) {
    bool found = false;
    for (auto& e : evs)
      if (e.t == j.time) {
        e.size = j.size;
        found = true;
        break;
      }
    if (!found) evs.push_back({j.time, false, false, j.size});
  }
  std::sort(evs.begin(), evs.end(),
            [](const ObsEventView& a, const ObsEventView& b) { return a.t < b.t; });
  return evs;
}

// Mass of noise marks matching an observed size through a size map.
double mark_match_mass(const ModelSpec& spec, const MarkKernel& kernel,
                       const ObservationCoefficients::JumpMap& gmap, double t,
                       const History& h, double y, double size) {
  if (!gmap) return size == 0.0 ? 1.0 : 0.0;
  if (kernel.continuous()) {
    if (size == 0.0) return 0.0;
    return kernel.density(t, h, y, size);
  }
  if (!kernel.mass) return size == 0.0 ? 1.0 : 0.0;
  const Eigen::VectorXd m = kernel.mass(t, h, y);
  double acc = 0.0;
  for (int i = 0; i < m.size(); ++i) {
    const double z = spec.mark_space.values[static_cast<std::size_t>(i)];
    if (std::abs(gmap(t, h, y, z) - size) <= spec.size_match_tol) acc += m(i);
  }
  return acc;
}

double noise_visible(const ModelSpec& spec, const MarkKernel& kernel,
                     const ObservationCoefficients::JumpMap& gmap, double t,
                     const History& h, double y) {
  if (!gmap) return 0.0;
  if (kernel.continuous()) return 1.0;
  if (!kernel.mass) return 0.0;
  const Eigen::VectorXd m = kernel.mass(t, h, y);
  double acc = 0.0;
  for (int i = 0; i < m.size(); ++i) {
    const double z = spec.mark_space.values[static_cast<std::size_t>(i)];
    if (gmap(t, h, y, z) != 0.0) acc += m(i);
  }
  return acc;
}

std::vector<std::pair<double, double>> prior_support(
    const ModelSpec& spec, const std::vector<double>& prior) {
  std::vector<std::pair<double, double>> supp;
  if (prior.empty()) {
    supp.emplace_back(spec.signal.initial, 1.0);
    return supp;
  }
  if (!spec.label_space.finite() ||
      static_cast<int>(prior.size()) != spec.label_space.size())
    throw InvalidArgument("prior must have one weight per label");
  double s = 0.0;
  for (double p : prior) s += p;
  if (!(s > 0.0)) throw InvalidArgument("prior has empty support");
  for (std::size_t i = 0; i < prior.size(); ++i)
    if (prior[i] > 0.0) supp.emplace_back(spec.label_space.labels[i], prior[i] / s);
  return supp;
}

}  // namespace

EnumeratedPosterior enumerate_posterior(const ModelSpec& spec,
                                        const ObservationRecord& obs,
                                        const std::vector<double>& prior,
                                        std::int64_t cap) {
  if (!spec.label_space.finite())
    throw InvalidArgument("enumeration needs a finite label space");
  const bool thinned_signal = spec.signal.rate_bound > 0.0;
  if (thinned_signal && !spec.obs.k_inaccessible)
    throw InvalidArgument(
        "enumeration needs signal jumps visible in the observation "
        "(vanishing intensity, or a nonzero size map)");

  const auto events = merged_events(obs);
  // Signal-jump opportunities: clock firings always; observed non-clock
  // jumps when the thinned signal channel is active. At a jump the extra
  // digit value means "explained by the noise channel".
  struct Opportunity {
    double t;
    bool clock;
    int radix;
  };
  std::vector<Opportunity> opportunities;
  const int n_labels = spec.label_space.size();
  for (const auto& e : events) {
    if (e.signal_clock)
      opportunities.push_back({e.t, true, n_labels});
    else if (!e.noise_clock && thinned_signal)
      opportunities.push_back({e.t, false, n_labels + 1});
  }

  const auto supp = prior_support(spec, prior);
  std::int64_t n_cfg = static_cast<std::int64_t>(supp.size());
  for (const auto& opp : opportunities) {
    n_cfg *= opp.radix;
    if (n_cfg > cap)
      throw InvalidArgument("configuration count exceeds the enumeration cap");
  }

  EnumeratedPosterior post;
  for (const auto& opp : opportunities) post.opportunity_times.push_back(opp.t);

  const int n = obs.grid.n_cells;
  const double dt = obs.grid.dt;
  const std::size_t n_opp = opportunities.size();

  // Visible fraction of the thinned signal kernel; enumeration is exact
  // only when no invisible thinned jump can occur.
  auto signal_visible_mass = [&](double t, const History& h, double y) {
    const Eigen::VectorXd m = spec.signal.kernel_q(t, h);
    double vis = 0.0, silent = 0.0;
    for (int i = 0; i < m.size(); ++i) {
      const double e = spec.label_space.labels[static_cast<std::size_t>(i)];
      const double s = spec.obs.k_inaccessible(t, h, y, e);
      (s != 0.0 ? vis : silent) += m(i);
    }
    if (silent > 1e-12)
      throw InvalidArgument(
          "enumeration requires every thinned signal jump to be visible "
          "in the observation");
    return vis;
  };

  // Materialize the configuration skeletons by a mixed-radix counter.
  for (std::size_t s0 = 0; s0 < supp.size(); ++s0) {
    std::vector<int> digits(n_opp, 0);
    for (;;) {
      Configuration cfg;
      cfg.initial = supp[s0].first;
      cfg.log_weight = std::log(supp[s0].second);
      cfg.h = History(cfg.initial);
      for (std::size_t k = 0; k < n_opp; ++k) {
        const int d = digits[k];
        cfg.marks.push_back(d < n_labels
                                ? spec.label_space.labels[static_cast<std::size_t>(d)]
                                : std::numeric_limits<double>::quiet_NaN());
      }
      post.configs.push_back(std::move(cfg));
      std::size_t pos = 0;
      while (pos < n_opp) {
        if (++digits[pos] < opportunities[pos].radix) break;
        digits[pos] = 0;
        ++pos;
      }
      if (n_opp == 0 || pos == n_opp) break;
    }
  }

  post.marginals.grid = obs.grid;
  post.marginals.probs = Eigen::MatrixXd::Zero(n + 1, n_labels);

  // Record the filtering marginal at a node: configurations weighted by
  // their likelihood accumulated so far (log-sum-exp normalized).
  auto record_node = [&](int node) {
    double mx = kNegInf;
    for (const auto& c : post.configs) mx = std::max(mx, c.log_weight);
    if (mx == kNegInf)
      throw InvalidArgument("every configuration has zero posterior weight");
    double z = 0.0;
    for (const auto& c : post.configs) {
      if (c.log_weight == kNegInf) continue;
      z += std::exp(c.log_weight - mx);
    }
    for (const auto& c : post.configs) {
      if (c.log_weight == kNegInf) continue;
      const int vi = spec.label_space.index_of(c.h.current_value());
      if (vi >= 0)
        post.marginals.probs(node, vi) += std::exp(c.log_weight - mx) / z;
    }
  };

  record_node(0);

  // Lockstep walk over the grid: all configurations advance one cell at a
  // time so the per-node filtering law is available as we go. Pieces
  // between events share the continuous increment in proportion to their
  // length, with coefficients frozen at piece starts (the discretization
  // the filter and the simulator share).
  std::vector<std::size_t> opp_idx(post.configs.size(), 0);
  std::size_t ev_idx = 0;
  for (int i = 0; i < n; ++i) {
    const double t = obs.grid.time(i);
    const double t1 = t + dt;
    const double y = obs.y_samples[static_cast<std::size_t>(i)];
    double size_sum = 0.0;
    std::size_t ev_end = ev_idx;
    while (ev_end < events.size() && events[ev_end].t <= t1) {
      size_sum += events[ev_end].size;
      ++ev_end;
    }
    const double dy_c =
        obs.y_samples[static_cast<std::size_t>(i) + 1] - y - size_sum;

    for (std::size_t ci = 0; ci < post.configs.size(); ++ci) {
      Configuration& cfg = post.configs[ci];
      if (cfg.log_weight == kNegInf) continue;
      History& h = cfg.h;
      double& logw = cfg.log_weight;
      double y_run = y;
      double cursor = t;

      auto continuous_piece = [&](double upto) {
        const double piece = upto - cursor;
        if (!(piece > 0.0)) return;
        const double dy_piece = dy_c * (piece / dt);
        const double bb = spec.obs.drift ? spec.obs.drift(cursor, h, y_run) : 0.0;
        const double sig = spec.obs.vol(cursor, y_run);
        logw += log_gauss(dy_piece, bb * piece, sig * sig * piece);
        const double lam_n =
            spec.noise.rate ? spec.noise.rate(cursor, h, y_run) : 0.0;
        if (lam_n > 0.0)
          logw -= lam_n *
                  noise_visible(spec, spec.noise.kernel_q, spec.obs.g_inaccessible,
                                cursor, h, y_run) *
                  piece;
        if (thinned_signal) {
          const double lam_m = spec.signal.rate ? spec.signal.rate(cursor, h) : 0.0;
          if (lam_m > 0.0)
            logw -= lam_m * signal_visible_mass(cursor, h, y_run) * piece;
        }
        y_run += dy_piece;
        cursor = upto;
      };

      for (std::size_t k = ev_idx; k < ev_end && logw != kNegInf; ++k) {
        const auto& ev = events[k];
        continuous_piece(ev.t);
        double y_left = y_run;
        if (ev.signal_clock && spec.signal.clock &&
            spec.signal.clock->kind == PredictableClock::Kind::Threshold)
          y_left = spec.signal.clock->level;
        if (ev.noise_clock && spec.noise.clock &&
            spec.noise.clock->kind == PredictableClock::Kind::Threshold)
          y_left = spec.noise.clock->level;

        if (ev.signal_clock) {
          const double mark = cfg.marks[opp_idx[ci]];
          const Eigen::VectorXd m = spec.signal.kernel_r(ev.t, h);
          const int mi = spec.label_space.index_of(mark);
          const double pmark = mi >= 0 ? m(mi) : 0.0;
          const double s = spec.obs.k_predictable
                               ? spec.obs.k_predictable(ev.t, h, y_left, mark)
                               : 0.0;
          const bool size_ok = std::abs(s - ev.size) <= spec.size_match_tol;
          logw += (pmark > 0.0 && size_ok) ? std::log(pmark) : kNegInf;
          if (logw != kNegInf) h = h.joined(ev.t, mark);
          ++opp_idx[ci];
        } else if (ev.noise_clock) {
          const double mass =
              mark_match_mass(spec, spec.noise.kernel_r, spec.obs.g_predictable,
                              ev.t, h, y_left, ev.size);
          logw += mass > 0.0 ? std::log(mass) : kNegInf;
        } else if (thinned_signal) {
          // Observed thinned jump: the digit names the explanation.
          const double mark = cfg.marks[opp_idx[ci]];
          if (!std::isnan(mark)) {
            const double lam = spec.signal.rate ? spec.signal.rate(ev.t, h) : 0.0;
            const Eigen::VectorXd m = spec.signal.kernel_q(ev.t, h);
            const int mi = spec.label_space.index_of(mark);
            const double pmark = mi >= 0 ? m(mi) : 0.0;
            const double s = spec.obs.k_inaccessible(ev.t, h, y_left, mark);
            const bool ok = lam > 0.0 && pmark > 0.0 && s != 0.0 &&
                            std::abs(s - ev.size) <= spec.size_match_tol;
            logw += ok ? std::log(lam * pmark) : kNegInf;
            if (logw != kNegInf) h = h.joined(ev.t, mark);
          } else {
            const double lam =
                spec.noise.rate ? spec.noise.rate(ev.t, h, y_left) : 0.0;
            const double mass =
                mark_match_mass(spec, spec.noise.kernel_q, spec.obs.g_inaccessible,
                                ev.t, h, y_left, ev.size);
            logw += (lam > 0.0 && mass > 0.0) ? std::log(lam * mass) : kNegInf;
          }
          ++opp_idx[ci];
        } else {
          // Thinned noise jump (the signal cannot jump here).
          const double lam =
              spec.noise.rate ? spec.noise.rate(ev.t, h, y_left) : 0.0;
          const double mass =
              mark_match_mass(spec, spec.noise.kernel_q, spec.obs.g_inaccessible,
                              ev.t, h, y_left, ev.size);
          logw += (lam > 0.0 && mass > 0.0) ? std::log(lam * mass) : kNegInf;
        }
        y_run = y_left + ev.size;
      }
      if (logw != kNegInf) continuous_piece(t1);
    }
    ev_idx = ev_end;
    record_node(i + 1);
  }

  // Terminal normalized weights.
  double mx = kNegInf;
  for (const auto& c : post.configs) mx = std::max(mx, c.log_weight);
  if (mx == kNegInf)
    throw InvalidArgument("every configuration has zero posterior weight");
  double z = 0.0;
  post.weights.resize(post.configs.size());
  for (std::size_t k = 0; k < post.configs.size(); ++k) {
    post.weights[k] =
        post.configs[k].log_weight == kNegInf
            ? 0.0
            : std::exp(post.configs[k].log_weight - mx);
    z += post.weights[k];
  }
  for (auto& w : post.weights) w /= z;
  return post;
}

BootstrapPosterior bootstrap_particle_filter(const ModelSpec& spec,
                                             const ObservationRecord& obs,
                                             int n_particles,
                                             std::uint64_t seed,
                                             const std::vector<double>& prior) {
  if (n_particles < 1) throw InvalidArgument("n_particles must be >= 1");
  if (!spec.label_space.finite())
    throw InvalidArgument("the bootstrap reference needs a finite label space");

  Rng rng = make_rng(derive_seed(seed, 0x0b007572ULL));
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const auto supp = prior_support(spec, prior);
  const int n = obs.grid.n_cells;
  const double dt = obs.grid.dt;
  const int n_labels = spec.label_space.size();
  const auto events = merged_events(obs);
  const double bound = spec.signal.rate_bound;

  struct Particle {
    History h{0.0};
    double logw = 0.0;
    double next_prop = kNoJump;
  };
  std::vector<Particle> ps(static_cast<std::size_t>(n_particles));
  std::exponential_distribution<double> exp_dist(std::max(bound, 1e-300));
  for (auto& p : ps) {
    const double u = unif(rng);
    double acc = 0.0;
    double label = supp.back().first;
    for (const auto& [l, w] : supp) {
      acc += w;
      if (u <= acc) {
        label = l;
        break;
      }
    }
    p.h = History(label);
    if (bound > 0.0) p.next_prop = exp_dist(rng);
  }

  BootstrapPosterior out;
  out.marginals.grid = obs.grid;
  out.marginals.probs = Eigen::MatrixXd::Zero(n + 1, n_labels);

  auto record_node = [&](int i) {
    double mx = kNegInf;
    for (const auto& p : ps) mx = std::max(mx, p.logw);
    if (mx == kNegInf)
      throw FilterError("particle degeneracy: all weights vanished",
                        obs.grid.time(i));
    double z = 0.0;
    std::vector<double> w(ps.size());
    for (std::size_t k = 0; k < ps.size(); ++k) {
      w[k] = std::exp(ps[k].logw - mx);
      z += w[k];
    }
    for (std::size_t k = 0; k < ps.size(); ++k) {
      const int vi = spec.label_space.index_of(ps[k].h.current_value());
      if (vi >= 0) out.marginals.probs(i, vi) += w[k] / z;
    }
  };

  auto sample_label_kernel = [&](const LabelKernelFn& kernel, double t,
                                 const History& h) {
    const Eigen::VectorXd m = kernel(t, h);
    const double u = unif(rng) * m.sum();
    double acc = 0.0;
    int idx = static_cast<int>(m.size()) - 1;
    for (int i = 0; i < m.size(); ++i) {
      acc += m(i);
      if (u <= acc) {
        idx = i;
        break;
      }
    }
    return spec.label_space.labels[static_cast<std::size_t>(idx)];
  };

  // Advance one particle's thinned jumps up to time t_to; killing happens
  // only when a proposed jump would have been visible in the observation.
  auto advance_thinning = [&](Particle& p, double t_to, double y_left) {
    if (bound <= 0.0) return;
    while (p.next_prop <= t_to) {
      const double tau = p.next_prop;
      p.next_prop += exp_dist(rng);
      if (p.logw == kNegInf) continue;
      const double lam = spec.signal.rate ? spec.signal.rate(tau, p.h) : 0.0;
      if (unif(rng) * bound >= lam) continue;
      const double e = sample_label_kernel(spec.signal.kernel_q, tau, p.h);
      const double s = spec.obs.k_inaccessible
                           ? spec.obs.k_inaccessible(tau, p.h, y_left, e)
                           : 0.0;
      if (s != 0.0)
        p.logw = kNegInf;
      else
        p.h = p.h.joined(tau, e);
    }
  };

  record_node(0);

  std::size_t ev_idx = 0;
  for (int i = 0; i < n; ++i) {
    const double t = obs.grid.time(i);
    const double t1 = t + dt;
    const double y = obs.y_samples[static_cast<std::size_t>(i)];
    double dy = obs.y_samples[static_cast<std::size_t>(i) + 1] - y;
    std::size_t ev_end = ev_idx;
    double size_sum = 0.0;
    while (ev_end < events.size() && events[ev_end].t <= t1) {
      size_sum += events[ev_end].size;
      ++ev_end;
    }
    const double dy_c = dy - size_sum;

    // Cell likelihood with the coefficients frozen at the cell start.
    for (auto& p : ps) {
      if (p.logw == kNegInf) continue;
      const double bb = spec.obs.drift ? spec.obs.drift(t, p.h, y) : 0.0;
      const double sig = spec.obs.vol(t, y);
      p.logw += log_gauss(dy_c, bb * dt, sig * sig * dt);
      const double lam_n = spec.noise.rate ? spec.noise.rate(t, p.h, y) : 0.0;
      if (lam_n > 0.0)
        p.logw -= lam_n *
                  noise_visible(spec, spec.noise.kernel_q, spec.obs.g_inaccessible,
                                t, p.h, y) *
                  dt;
    }

    // Events in time order, with thinned propagation between them.
    double cursor = t;
    double y_run = y;
    for (std::size_t k = ev_idx; k < ev_end; ++k) {
      const auto& ev = events[k];
      y_run += dy_c * ((ev.t - cursor) / dt);
      cursor = ev.t;
      double y_left = y_run;
      if (ev.signal_clock && spec.signal.clock &&
          spec.signal.clock->kind == PredictableClock::Kind::Threshold)
        y_left = spec.signal.clock->level;
      if (ev.noise_clock && spec.noise.clock &&
          spec.noise.clock->kind == PredictableClock::Kind::Threshold)
        y_left = spec.noise.clock->level;

      for (auto& p : ps) {
        advance_thinning(p, ev.t, y_left);
        if (p.logw == kNegInf) continue;
        if (ev.signal_clock) {
          const double mark = sample_label_kernel(spec.signal.kernel_r, ev.t, p.h);
          const double s = spec.obs.k_predictable
                               ? spec.obs.k_predictable(ev.t, p.h, y_left, mark)
                               : 0.0;
          if (std::abs(s - ev.size) > spec.size_match_tol)
            p.logw = kNegInf;
          else
            p.h = p.h.joined(ev.t, mark);
        } else if (ev.noise_clock) {
          const double mass =
              mark_match_mass(spec, spec.noise.kernel_r, spec.obs.g_predictable,
                              ev.t, p.h, y_left, ev.size);
          p.logw += mass > 0.0 ? std::log(mass) : kNegInf;
        } else {
          // Observed thinned jump: mixture of the two explanations.
          const double lam_n =
              spec.noise.rate ? spec.noise.rate(ev.t, p.h, y_left) : 0.0;
          const double g_mass =
              lam_n > 0.0 ? lam_n * mark_match_mass(spec, spec.noise.kernel_q,
                                                    spec.obs.g_inaccessible, ev.t,
                                                    p.h, y_left, ev.size)
                          : 0.0;
          double k_mass = 0.0;
          Eigen::VectorXd match = Eigen::VectorXd::Zero(n_labels);
          const double lam_m =
              spec.signal.rate ? spec.signal.rate(ev.t, p.h) : 0.0;
          if (lam_m > 0.0 && spec.obs.k_inaccessible) {
            const Eigen::VectorXd m = spec.signal.kernel_q(ev.t, p.h);
            for (int li = 0; li < n_labels; ++li) {
              const double e = spec.label_space.labels[static_cast<std::size_t>(li)];
              const double s = spec.obs.k_inaccessible(ev.t, p.h, y_left, e);
              if (s != 0.0 && std::abs(s - ev.size) <= spec.size_match_tol)
                match(li) = m(li);
            }
            k_mass = lam_m * match.sum();
          }
          const double total = g_mass + k_mass;
          if (total <= 0.0) {
            p.logw = kNegInf;
            continue;
          }
          p.logw += std::log(total);
          if (k_mass > 0.0 && unif(rng) * total < k_mass) {
            const double u = unif(rng) * match.sum();
            double acc = 0.0;
            int idx = n_labels - 1;
            for (int li = 0; li < n_labels; ++li) {
              acc += match(li);
              if (u <= acc) {
                idx = li;
                break;
              }
            }
            p.h = p.h.joined(ev.t,
                             spec.label_space.labels[static_cast<std::size_t>(idx)]);
          }
        }
      }
      y_run = y_left + ev.size;
    }
    ev_idx = ev_end;
    for (auto& p : ps) advance_thinning(p, t1, y_run);

    // Systematic resampling below half the nominal sample size.
    double mx = kNegInf;
    for (const auto& p : ps) mx = std::max(mx, p.logw);
    if (mx == kNegInf)
      throw FilterError("particle degeneracy: all weights vanished", t1);
    double z = 0.0, z2 = 0.0;
    std::vector<double> w(ps.size());
    for (std::size_t k = 0; k < ps.size(); ++k) {
      w[k] = std::exp(ps[k].logw - mx);
      z += w[k];
    }
    for (auto& x : w) {
      x /= z;
      z2 += x * x;
    }
    const double ess = 1.0 / z2;
    if (ess < 0.5 * n_particles) {
      std::vector<Particle> next(ps.size());
      const double u0 = unif(rng) / n_particles;
      std::size_t idx = 0;
      double cum = w[0];
      for (int k = 0; k < n_particles; ++k) {
        const double pos = u0 + static_cast<double>(k) / n_particles;
        while (cum < pos && idx + 1 < ps.size()) {
          ++idx;
          cum += w[idx];
        }
        next[static_cast<std::size_t>(k)].h = ps[idx].h;
        next[static_cast<std::size_t>(k)].logw = 0.0;
        next[static_cast<std::size_t>(k)].next_prop =
            bound > 0.0 ? t1 + exp_dist(rng) : kNoJump;
      }
      ps = std::move(next);
      ++out.resample_count;
    }
    record_node(i + 1);
  }

  // Terminal normalized weights and particles.
  double mx = kNegInf;
  for (const auto& p : ps) mx = std::max(mx, p.logw);
  double z = 0.0;
  for (const auto& p : ps) z += std::exp(p.logw - mx);
  for (const auto& p : ps) {
    out.particles.push_back(p.h);
    out.weights.push_back(std::exp(p.logw - mx) / z);
  }
  return out;
}

}  // namespace jumpfilter
