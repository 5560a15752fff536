#include "jumpfilter/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "jumpfilter/errors.hpp"

namespace jumpfilter {

const char* to_string(EventStream s) {
  switch (s) {
    case EventStream::SignalInaccessible: return "m_inaccessible";
    case EventStream::SignalPredictable: return "m_predictable";
    case EventStream::NoiseInaccessible: return "n_inaccessible";
    case EventStream::NoisePredictable: return "n_predictable";
  }
  return "?";
}

double next_inaccessible_time(const std::function<double(double)>& rate,
                              double bound, double t_from, Rng& rng,
                              double t_max) {
  if (!(bound > 0.0)) return kNoJump;
  std::exponential_distribution<double> exp_dist(bound);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double t = t_from;
  for (;;) {
    t += exp_dist(rng);
    if (t > t_max) return kNoJump;
    const double r = rate(t);
    if (r > bound * (1.0 + 1e-12))
      throw SimulationError("majorant violated: rate sample exceeds declared bound");
    if (unif(rng) * bound < r) return t;
  }
}

ClockFiring detect_clock_event(const PredictableClock& clock, double y_start,
                               double y_end, double t_start, double t_end) {
  ClockFiring out;
  if (clock.kind == PredictableClock::Kind::Deterministic) {
    for (double ft : clock.times) {
      if (ft > t_start && ft <= t_end) {
        out.fired = true;
        out.time = ft;
        return out;
      }
    }
    return out;
  }
  const double level = clock.level;
  const bool up = y_start < level && y_end >= level;
  const bool down = y_start > level && y_end <= level;
  bool crossed = false;
  switch (clock.direction) {
    case PredictableClock::Direction::Up: crossed = up; break;
    case PredictableClock::Direction::Down: crossed = down; break;
    case PredictableClock::Direction::Any: crossed = up || down; break;
  }
  if (!crossed) return out;
  const double denom = y_end - y_start;
  double frac = denom != 0.0 ? (level - y_start) / denom : 1.0;
  frac = std::clamp(frac, 0.0, 1.0);
  double t = t_start + frac * (t_end - t_start);
  // Snap into the half-open cell.
  if (t <= t_start) t = std::nextafter(t_start, t_end);
  if (t > t_end) t = t_end;
  out.fired = true;
  out.time = t;
  return out;
}

namespace {

// Candidate kinds, in tie-break order (predictable before thinned).
enum class CandKind { SignalClock, NoiseClock, SignalThinned, NoiseThinned, None };

int sample_finite(const Eigen::VectorXd& mass, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng) * mass.sum();
  double acc = 0.0;
  for (int i = 0; i < mass.size(); ++i) {
    acc += mass(i);
    if (u <= acc) return i;
  }
  return static_cast<int>(mass.size()) - 1;
}

double map_or_zero(const ObservationCoefficients::JumpMap& m, double t,
                   const History& h, double y, double mark) {
  return m ? m(t, h, y, mark) : 0.0;
}

struct ExpStream {
  double bound = 0.0;
  double next = kNoJump;

  void init(double b, Rng& rng) {
    bound = b;
    next = kNoJump;
    if (bound > 0.0) {
      std::exponential_distribution<double> e(bound);
      next = e(rng);
    }
  }
  void advance(Rng& rng) {
    std::exponential_distribution<double> e(bound);
    next += e(rng);
  }
};

}  // namespace

SystemPath simulate(const ModelSpec& spec, double horizon, double dt,
                    std::uint64_t seed) {
  if (!(horizon > 0.0) || !(dt > 0.0) || dt > horizon)
    throw InvalidArgument("simulate requires 0 < dt <= horizon");
  const int n = static_cast<int>(std::llround(horizon / dt));
  if (n < 1 || std::abs(n * dt - horizon) > 1e-9 * std::max(1.0, horizon))
    throw InvalidArgument("horizon must be an integer number of dt cells");

  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  SystemPath path;
  path.grid = Grid{dt, n};
  path.seed = seed;
  path.y_samples.reserve(static_cast<std::size_t>(n) + 1);
  path.w_increments.reserve(static_cast<std::size_t>(n));

  History h(spec.signal.initial);
  double y = spec.y0;
  path.y_samples.push_back(y);

  ExpStream m_stream, n_stream;
  m_stream.init(spec.signal.rate_bound, rng);
  n_stream.init(spec.noise.rate_bound, rng);

  // Refractory ends for the threshold clocks (one grid cell after a firing).
  double m_refractory_until = 0.0;
  double n_refractory_until = 0.0;
  std::size_t m_det_idx = 0, n_det_idx = 0;
  int clock_events = 0;
  double last_event_time = -1.0;

  auto draw_signal_mark = [&](double t, const LabelKernelFn& kernel,
                              const std::function<double(double, const History&, Rng&)>&
                                  sampler) -> double {
    if (!spec.label_space.finite()) {
      if (!sampler)
        throw InvalidArgument("interval label space needs a signal mark sampler");
      return sampler(t, h, rng);
    }
    const Eigen::VectorXd mass = kernel(t, h);
    return spec.label_space.labels[static_cast<std::size_t>(sample_finite(mass, rng))];
  };
  auto draw_noise_mark = [&](double t, const MarkKernel& kernel, double y_left) -> double {
    if (kernel.continuous()) return kernel.sample(t, h, y_left, rng);
    const Eigen::VectorXd mass = kernel.mass(t, h, y_left);
    return spec.mark_space.values[static_cast<std::size_t>(sample_finite(mass, rng))];
  };

  auto next_det_time = [](const std::optional<PredictableClock>& clk, std::size_t idx,
                          double t_lo, double t_hi) -> double {
    if (!clk || clk->kind != PredictableClock::Kind::Deterministic) return kNoJump;
    for (std::size_t k = idx; k < clk->times.size(); ++k) {
      const double ft = clk->times[k];
      // An unfired listed time colliding with the running cursor is nudged
      // forward so event times stay pairwise distinct.
      if (ft == t_lo) return std::min(std::nextafter(t_lo, kNoJump), t_hi);
      if (ft > t_lo && ft <= t_hi) return ft;
      if (ft > t_hi) break;
    }
    return kNoJump;
  };

  for (int i = 0; i < n; ++i) {
    const double t0 = i * dt;
    const double t1 = t0 + dt;
    const double dw = normal(rng) * std::sqrt(dt);
    path.w_increments.push_back(dw);

    double s = t0;
    bool m_suppression_counted = false;
    bool n_suppression_counted = false;
    for (;;) {
      const double rem_frac = (t1 - s) / dt;
      // Tentative diffusion-only end-of-cell value used for clock detection.
      const double drift_here =
          spec.obs.drift ? spec.obs.drift(s, h, y) : 0.0;
      const double vol_here = spec.obs.vol(s, y);
      const double y_tent = y + drift_here * (t1 - s) + vol_here * dw * rem_frac;

      double best_t = kNoJump;
      CandKind best = CandKind::None;

      auto consider = [&](double t, CandKind kind) {
        if (t == kNoJump || t <= s || t > t1) return;
        if (t < best_t) {
          best_t = t;
          best = kind;
        }
      };

      // Signal clock.
      if (spec.signal.clock) {
        if (spec.signal.clock->kind == PredictableClock::Kind::Deterministic) {
          consider(next_det_time(spec.signal.clock, m_det_idx, s, t1), CandKind::SignalClock);
        } else {
          const ClockFiring f = detect_clock_event(*spec.signal.clock, y, y_tent, s, t1);
          if (f.fired) {
            if (s >= m_refractory_until) {
              consider(f.time, CandKind::SignalClock);
            } else if (!m_suppression_counted) {
              ++path.suppressed_clock_firings;
              m_suppression_counted = true;
            }
          }
        }
      }
      // Noise clock.
      if (spec.noise.clock) {
        if (spec.noise.clock->kind == PredictableClock::Kind::Deterministic) {
          consider(next_det_time(spec.noise.clock, n_det_idx, s, t1), CandKind::NoiseClock);
        } else {
          const ClockFiring f = detect_clock_event(*spec.noise.clock, y, y_tent, s, t1);
          if (f.fired) {
            if (s >= n_refractory_until) {
              consider(f.time, CandKind::NoiseClock);
            } else if (!n_suppression_counted) {
              ++path.suppressed_clock_firings;
              n_suppression_counted = true;
            }
          }
        }
      }
      consider(m_stream.next, CandKind::SignalThinned);
      consider(n_stream.next, CandKind::NoiseThinned);

      if (best == CandKind::None) {
        y += drift_here * (t1 - s) + vol_here * dw * rem_frac;
        break;
      }

      // Distinct event times: a proposal landing exactly on an already used
      // time is re-drawn past it.
      if (best_t == last_event_time &&
          (best == CandKind::SignalThinned || best == CandKind::NoiseThinned)) {
        (best == CandKind::SignalThinned ? m_stream : n_stream).advance(rng);
        continue;
      }

      // Advance the diffusion to the candidate time (left limit there).
      const double seg_frac = (best_t - s) / dt;
      y += drift_here * (best_t - s) + vol_here * dw * seg_frac;

      switch (best) {
        case CandKind::SignalThinned: {
          const double r = spec.signal.rate ? spec.signal.rate(best_t, h) : 0.0;
          if (r > spec.signal.rate_bound * (1.0 + 1e-12))
            throw SimulationError("majorant violated: signal rate exceeds declared bound");
          const bool accept = unif(rng) * spec.signal.rate_bound < r;
          m_stream.advance(rng);
          if (accept) {
            const double mark =
                draw_signal_mark(best_t, spec.signal.kernel_q, spec.signal.sampler_q);
            const double dy = map_or_zero(spec.obs.k_inaccessible, best_t, h, y, mark);
            path.events.push_back({best_t, EventStream::SignalInaccessible, mark, dy, y});
            h = h.joined(best_t, mark);
            y += dy;
            last_event_time = best_t;
          }
          break;
        }
        case CandKind::NoiseThinned: {
          const double r = spec.noise.rate ? spec.noise.rate(best_t, h, y) : 0.0;
          if (r > spec.noise.rate_bound * (1.0 + 1e-12))
            throw SimulationError("majorant violated: noise rate exceeds declared bound");
          const bool accept = unif(rng) * spec.noise.rate_bound < r;
          n_stream.advance(rng);
          if (accept) {
            const double mark = draw_noise_mark(best_t, spec.noise.kernel_q, y);
            const double dy = map_or_zero(spec.obs.g_inaccessible, best_t, h, y, mark);
            path.events.push_back({best_t, EventStream::NoiseInaccessible, mark, dy, y});
            y += dy;
            last_event_time = best_t;
          }
          break;
        }
        case CandKind::SignalClock: {
          if (++clock_events > spec.clock_event_cap)
            throw SimulationError("clock-event cap exceeded");
          if (spec.signal.clock->kind == PredictableClock::Kind::Deterministic) {
            const auto& ts = spec.signal.clock->times;
            while (m_det_idx < ts.size() && ts[m_det_idx] <= best_t) ++m_det_idx;
          } else {
            y = spec.signal.clock->level;  // the crossing instant sits on the level
            m_refractory_until = best_t + dt;
          }
          const double mark =
              draw_signal_mark(best_t, spec.signal.kernel_r, spec.signal.sampler_r);
          const double dy = map_or_zero(spec.obs.k_predictable, best_t, h, y, mark);
          path.events.push_back({best_t, EventStream::SignalPredictable, mark, dy, y});
          h = h.joined(best_t, mark);
          y += dy;
          last_event_time = best_t;
          break;
        }
        case CandKind::NoiseClock: {
          if (++clock_events > spec.clock_event_cap)
            throw SimulationError("clock-event cap exceeded");
          if (spec.noise.clock->kind == PredictableClock::Kind::Deterministic) {
            const auto& ts = spec.noise.clock->times;
            while (n_det_idx < ts.size() && ts[n_det_idx] <= best_t) ++n_det_idx;
          } else {
            y = spec.noise.clock->level;
            n_refractory_until = best_t + dt;
          }
          const double mark = draw_noise_mark(best_t, spec.noise.kernel_r, y);
          const double dy = map_or_zero(spec.obs.g_predictable, best_t, h, y, mark);
          path.events.push_back({best_t, EventStream::NoisePredictable, mark, dy, y});
          y += dy;
          last_event_time = best_t;
          break;
        }
        case CandKind::None: break;
      }
      s = best_t;
      if (s >= t1) break;
    }
    path.y_samples.push_back(y);
  }

  path.latent_history = h;
  return path;
}

ObservationRecord observe(const SystemPath& path) {
  ObservationRecord rec;
  rec.grid = path.grid;
  rec.y_samples = path.y_samples;
  for (const auto& ev : path.events) {
    if (ev.obs_jump != 0.0) rec.jumps.push_back({ev.time, ev.obs_jump});
    if (ev.stream == EventStream::SignalPredictable)
      rec.signal_clock_times.push_back(ev.time);
    else if (ev.stream == EventStream::NoisePredictable)
      rec.noise_clock_times.push_back(ev.time);
  }
  return rec;
}

}  // namespace jumpfilter
