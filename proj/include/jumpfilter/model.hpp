#ifndef JUMPFILTER_MODEL_HPP
#define JUMPFILTER_MODEL_HPP

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "jumpfilter/history.hpp"
#include "jumpfilter/rng.hpp"

namespace jumpfilter {

/// Signal label space: a finite set of real labels with the discrete
/// metric, or a bounded interval with the absolute-value metric.
struct LabelSpace {
  std::vector<double> labels;  // finite variant; empty means interval
  double lo = 0.0, hi = 0.0;   // interval variant

  bool finite() const { return !labels.empty(); }
  int size() const { return static_cast<int>(labels.size()); }

  double metric(double a, double b) const {
    if (finite()) return a == b ? 0.0 : 1.0;
    return std::abs(a - b);
  }

  // Index of a finite label value; -1 if absent.
  int index_of(double v) const {
    for (int i = 0; i < size(); ++i)
      if (labels[static_cast<std::size_t>(i)] == v) return i;
    return -1;
  }

  static LabelSpace finite_states(int n) {
    LabelSpace s;
    s.labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) s.labels[static_cast<std::size_t>(i)] = i;
    return s;
  }
  static LabelSpace interval(double lo, double hi) {
    LabelSpace s;
    s.lo = lo;
    s.hi = hi;
    return s;
  }
};

/// Mark space of the observation-noise measure: finite real values or the
/// real line restricted to a bounded support (for densities/quadrature).
struct MarkSpace {
  std::vector<double> values;  // finite variant; empty means continuous
  double lo = -1.0, hi = 1.0;  // support of continuous densities

  bool finite() const { return !values.empty(); }
  int size() const { return static_cast<int>(values.size()); }

  static MarkSpace finite_marks(std::vector<double> vals) {
    MarkSpace z;
    z.values = std::move(vals);
    return z;
  }
  static MarkSpace continuous(double lo, double hi) {
    MarkSpace z;
    z.lo = lo;
    z.hi = hi;
    return z;
  }
};

/// A clock announcing predictable event times: either a fixed list of
/// dates or a threshold crossed by the observation path.
struct PredictableClock {
  enum class Kind { Deterministic, Threshold };
  enum class Direction { Up, Down, Any };

  Kind kind = Kind::Deterministic;
  std::vector<double> times;  // Deterministic: sorted, strictly positive
  double level = 0.0;         // Threshold
  Direction direction = Direction::Any;

  static PredictableClock deterministic(std::vector<double> ts) {
    PredictableClock c;
    c.kind = Kind::Deterministic;
    c.times = std::move(ts);
    return c;
  }
  static PredictableClock threshold(double level, Direction dir) {
    PredictableClock c;
    c.kind = Kind::Threshold;
    c.level = level;
    c.direction = dir;
    return c;
  }
};

// Mass vector of a kernel over the finite label space, as a function of
// (t, history). Entry i is the probability of label i.
using LabelKernelFn =
    std::function<Eigen::VectorXd(double t, const History& h)>;

/// Kernel over the mark space Z, possibly depending on the observation
/// left limit. Finite variant: a mass vector over MarkSpace::values.
/// Continuous variant: density + sampler on the declared support.
struct MarkKernel {
  std::function<Eigen::VectorXd(double t, const History& h, double y)> mass;
  std::function<double(double t, const History& h, double y, double z)> density;
  std::function<double(double t, const History& h, double y, Rng& rng)> sample;

  bool continuous() const { return static_cast<bool>(density); }
};

// Observation SDE coefficients and jump maps. The four jump maps give the
// observation increment caused by a mark of the corresponding stream; a
// zero value means the event is invisible in the observation path.
struct ObservationCoefficients {
  std::function<double(double t, const History& h, double y)> drift;
  std::function<double(double t, double y)> vol;
  double vol_min = 0.0;

  using JumpMap = std::function<double(double t, const History& h, double y, double mark)>;
  JumpMap k_inaccessible;  // signal mark -> dY, at thinned signal jumps
  JumpMap k_predictable;   // signal mark -> dY, at signal-clock firings
  JumpMap g_inaccessible;  // noise mark  -> dY, at thinned noise jumps
  JumpMap g_predictable;   // noise mark  -> dY, at noise-clock firings

  // Optional user-supplied observed-size likelihoods, needed when marks are
  // continuous and the size law is not derivable by enumerating the kernel.
  // Signature: (t, h, y_left, observed size) -> nonnegative value.
  using SizeLikelihood =
      std::function<double(double t, const History& h, double y, double size)>;
  SizeLikelihood ell_ik, ell_pk, ell_ig, ell_pg;
};

struct SignalModel {
  std::function<double(double t, const History& h)> rate;  // inaccessible intensity
  double rate_bound = 0.0;                                 // thinning majorant
  LabelKernelFn kernel_q;  // marks at thinned jump times
  LabelKernelFn kernel_r;  // marks at clock firings
  // Interval label spaces: samplers replace the mass vectors (exact mode
  // and enumeration stay finite-only).
  std::function<double(double t, const History& h, Rng& rng)> sampler_q;
  std::function<double(double t, const History& h, Rng& rng)> sampler_r;
  std::optional<PredictableClock> clock;
  double initial = 0.0;
};

struct NoiseModel {
  std::function<double(double t, const History& h, double y)> rate;
  double rate_bound = 0.0;
  MarkKernel kernel_q;  // marks at thinned jump times
  MarkKernel kernel_r;  // marks at clock firings
  std::optional<PredictableClock> clock;
};

/// Every local characteristic of the pair (signal, observation), plus the
/// space descriptors. Immutable after construction; user functions must be
/// pure.
struct ModelSpec {
  LabelSpace label_space;
  MarkSpace mark_space;
  SignalModel signal;
  NoiseModel noise;
  ObservationCoefficients obs;
  double y0 = 0.0;

  // True when all model functions read the history only through its
  // current label. Enables the collapsed exact filter for models whose
  // inaccessible signal jumps are invisible in the observation.
  bool value_homogeneous = false;

  int clock_event_cap = 100000;

  // Observed-size matching tolerance for finite-mark size likelihoods.
  double size_match_tol = 1e-9;
};

struct Finding {
  std::string code;
  std::string message;
};

// Numerical spot-checks of the standing assumptions: nonnegative rates
// below their declared bounds, volatility bounded away from zero, kernel
// rows summing to one, representable clocks.
std::vector<Finding> validate(const ModelSpec& spec);

// Pointwise bundle of local characteristics at (t, h, y).
struct Characteristics {
  double signal_rate;
  double noise_rate;
  double drift;
  double vol;
  bool signal_clock_armed;
  bool noise_clock_armed;
};
Characteristics evaluate_characteristics(const ModelSpec& spec, double t,
                                         const History& h, double y);

// --- Worked presets -------------------------------------------------------

// Finite-state signal jumping at fixed dates through a zero-diagonal
// stochastic matrix; the observation is a pure diffusion whose drift is a
// per-state table.
ModelSpec preset_deterministic_jumps(int n_states,
                                     const Eigen::MatrixXd& r_matrix,
                                     std::vector<double> times,
                                     const Eigen::VectorXd& drift_table,
                                     double sigma, int initial_state = 0,
                                     double y0 = 0.0);

// Signal jumps triggered whenever the observation reaches a threshold
// (regime switching); drift depends on the current state.
ModelSpec preset_threshold_regime(int n_states,
                                  const Eigen::MatrixXd& r_matrix,
                                  double level,
                                  const Eigen::VectorXd& drift_table,
                                  double sigma, int initial_state = 0,
                                  double y0 = 0.0);

// Jump-diffusion observation bounced between two barriers; the lower one
// triggers signal jumps, the upper one noise-measure jumps. Optional
// inaccessible activity on both streams.
struct ReflectingParams {
  int n_states = 2;
  Eigen::MatrixXd r_matrix;      // marks at lower-barrier firings
  double barrier_low = -1.0;
  double barrier_up = 1.0;
  Eigen::VectorXd drift_table;
  double sigma = 1.0;
  double kick_low = 0.2;    // dY applied at a lower-barrier firing
  double kick_up = -0.2;    // dY applied at an upper-barrier firing
  double signal_rate = 0.0; // inaccessible signal intensity (uniform kernel)
  double noise_rate = 0.0;  // inaccessible noise intensity
  std::vector<double> noise_marks = {0.3, -0.3};  // finite Z, uniform masses
  int initial_state = 0;
  double y0 = 0.0;
};
ModelSpec preset_reflecting(const ReflectingParams& p);

}  // namespace jumpfilter

#endif
