#include <doctest.h>

#include <cmath>

#include "jumpfilter/compensators.hpp"
#include "jumpfilter/errors.hpp"

using namespace jumpfilter;

namespace {

Eigen::MatrixXd swap2() {
  Eigen::MatrixXd r(2, 2);
  r << 0, 1, 1, 0;
  return r;
}

Eigen::VectorXd drift2() {
  Eigen::VectorXd b(2);
  b << -0.5, 0.5;
  return b;
}

// Two states, constant thinned signal intensity, uniform-swap kernel.
ModelSpec rate_one_model() {
  ModelSpec spec = preset_deterministic_jumps(2, swap2(), {}, drift2(), 1.0);
  spec.signal.rate = [](double, const History&) { return 1.0; };
  spec.signal.rate_bound = 1.0;
  return spec;
}

// Noise stream with one mark of size 0.7 mapped through the identity.
ModelSpec single_mark_noise_model() {
  ModelSpec spec = preset_deterministic_jumps(2, swap2(), {}, drift2(), 1.0);
  spec.mark_space = MarkSpace::finite_marks({0.7});
  spec.noise.rate = [](double, const History&, double) { return 1.0; };
  spec.noise.rate_bound = 1.0;
  spec.noise.kernel_q.mass = [](double, const History&, double) {
    return Eigen::VectorXd::Ones(1).eval();
  };
  spec.noise.kernel_r.mass = spec.noise.kernel_q.mass;
  spec.obs.g_inaccessible = [](double, const History&, double, double z) { return z; };
  return spec;
}

const PathSegment kEmptySegment{};

}  // namespace

TEST_CASE("signal compensator: unit rate over a unit interval") {
  const ModelSpec spec = rate_one_model();
  const auto inc = signal_compensator_increment(spec, History(0.0), {0.0, 1.0},
                                                ValueSet::all(), kEmptySegment, 1e-3);
  CHECK(inc.value == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("signal compensator: one clock firing carries full kernel mass") {
  const ModelSpec spec = preset_deterministic_jumps(2, swap2(), {0.5}, drift2(), 1.0);
  PathSegment seg;
  seg.signal_firings = {{0.5, 0.0}};
  const auto inc = signal_compensator_increment(spec, History(0.0), {0.0, 1.0},
                                                ValueSet::all(), seg, 1e-3);
  CHECK(inc.value == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("signal compensator: kernel row entry for a single target state") {
  Eigen::MatrixXd r(2, 2);
  r << 0, 1, 1, 0;
  ModelSpec spec = preset_deterministic_jumps(2, r, {0.5}, drift2(), 1.0);
  spec.signal.kernel_r = [](double, const History&) {
    Eigen::VectorXd m(2);
    m << 0.7, 0.3;
    return m;
  };
  PathSegment seg;
  seg.signal_firings = {{0.5, 0.0}};
  const auto inc = signal_compensator_increment(
      spec, History(0.0), {0.0, 1.0}, ValueSet::of({1.0}), seg, 1e-3);
  CHECK(inc.value == doctest::Approx(0.3).epsilon(1e-14));
}

TEST_CASE("noise compensator mirrors the signal structure") {
  const ModelSpec spec = single_mark_noise_model();
  const auto inc = noise_compensator_increment(spec, History(0.0), {0.0, 1.0},
                                               ValueSet::all(), kEmptySegment, 1e-3);
  CHECK(inc.value == doctest::Approx(1.0).epsilon(1e-12));

  const auto none = noise_compensator_increment(
      spec, History(0.0), {0.0, 1.0}, ValueSet::of({0.123}), kEmptySegment, 1e-3);
  CHECK(none.value == 0.0);
}

TEST_CASE("history compensator agrees with the label form through joins") {
  Rng rng = make_rng(77);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const ModelSpec plain = rate_one_model();
  const ModelSpec clocked =
      preset_deterministic_jumps(2, swap2(), {0.25, 0.75}, drift2(), 1.0);

  for (int trial = 0; trial < 100; ++trial) {
    const bool with_clock = trial % 2 == 1;
    const ModelSpec& spec = with_clock ? clocked : plain;
    History h(trial % 2 ? 1.0 : 0.0);
    if (unif(rng) < 0.5) h = h.joined(0.05 + 0.1 * unif(rng), h.initial() == 0.0 ? 1.0 : 0.0);
    const double lo = 0.1 + 0.3 * unif(rng);
    const double hi = lo + 0.1 + 0.5 * unif(rng);
    ValueSet target = unif(rng) < 0.3 ? ValueSet::all()
                      : unif(rng) < 0.5 ? ValueSet::of({0.0})
                                        : ValueSet::of({1.0});
    PathSegment seg;
    if (with_clock) {
      seg.signal_firings = {{0.25, 0.0}, {0.75, 0.0}};
    }
    const double direct =
        signal_compensator_increment(spec, h, {lo, hi}, target, seg, 1e-3).value;
    // The lifted target: one-jump extensions of h landing in the label set.
    const auto lifted = [&](const History& x) {
      if (x.total_jumps() != h.total_jumps() + 1) return false;
      if (!(x.prefix_before(x.last_jump_time()) == h)) return false;
      return target.contains(x.current_value());
    };
    const double through_joins =
        history_compensator_increment(spec, h, {lo, hi}, lifted, seg, 1e-3).value;
    CHECK(std::abs(direct - through_joins) <= 1e-12);
  }
}

TEST_CASE("history compensator: empty target, full target") {
  const ModelSpec spec = rate_one_model();
  const auto none = history_compensator_increment(
      spec, History(0.0), {0.0, 1.0}, [](const History&) { return false; },
      kEmptySegment, 1e-3);
  CHECK(none.value == 0.0);
  const auto all = history_compensator_increment(
      spec, History(0.0), {0.0, 1.0}, [](const History&) { return true; },
      kEmptySegment, 1e-3);
  CHECK(all.value == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("jump-size compensator: frozen examples") {
  // All size maps vanish: nothing is ever observed.
  const ModelSpec silent = rate_one_model();
  CHECK(jump_size_compensator_increment(silent, History(0.0), {0.0, 1.0},
                                        SizeSet::whole_line(), kEmptySegment, 1e-3)
            .value == 0.0);

  const ModelSpec spec = single_mark_noise_model();
  const auto hit = jump_size_compensator_increment(
      spec, History(0.0), {0.0, 1.0}, SizeSet::interval(0.5, 1.0), kEmptySegment, 1e-3);
  CHECK(hit.value == doctest::Approx(1.0).epsilon(1e-12));
  const auto miss = jump_size_compensator_increment(
      spec, History(0.0), {0.0, 1.0}, SizeSet::interval(0.0, 0.5), kEmptySegment, 1e-3);
  CHECK(miss.value == 0.0);
}

TEST_CASE("filtered jump-size compensator: point mass and mixtures") {
  ModelSpec spec = single_mark_noise_model();
  // Make the noise intensity depend on the current state so atoms differ.
  spec.noise.rate = [](double, const History& h, double) {
    return h.current_value() == 0.0 ? 1.0 : 2.0;
  };
  spec.noise.rate_bound = 2.0;

  const History h0(0.0), h1(1.0);
  const SizeSet sizes = SizeSet::interval(0.5, 1.0);
  const double v0 =
      jump_size_compensator_increment(spec, h0, {0.0, 1.0}, sizes, kEmptySegment, 1e-3)
          .value;
  const double v1 =
      jump_size_compensator_increment(spec, h1, {0.0, 1.0}, sizes, kEmptySegment, 1e-3)
          .value;
  CHECK(v0 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(v1 == doctest::Approx(2.0).epsilon(1e-12));

  // Point mass reproduces the per-atom value.
  const double point = filtered_jump_size_compensator_increment(
                           {{h0, 1.0}}, spec, {0.0, 1.0}, sizes, kEmptySegment, 1e-3)
                           .value;
  CHECK(point == doctest::Approx(v0).epsilon(1e-14));

  // Identical atoms are indistinguishable from either one alone.
  const double sym = filtered_jump_size_compensator_increment(
                         {{h0, 0.5}, {History(0.0), 0.5}}, spec, {0.0, 1.0}, sizes,
                         kEmptySegment, 1e-3)
                         .value;
  CHECK(sym == doctest::Approx(v0).epsilon(1e-14));

  // Mixtures are weighted averages.
  const double mix = filtered_jump_size_compensator_increment(
                         {{h0, 0.3}, {h1, 0.7}}, spec, {0.0, 1.0}, sizes,
                         kEmptySegment, 1e-3)
                         .value;
  CHECK(mix == doctest::Approx(0.3 * v0 + 0.7 * v1).epsilon(1e-14));
}

TEST_CASE("increments are additive over aligned partitions and nonnegative") {
  ModelSpec spec = rate_one_model();
  spec.signal.rate = [](double t, const History&) { return 1.0 + 0.5 * std::sin(t); };
  spec.signal.rate_bound = 1.5;
  const History h(0.0);
  const double whole =
      signal_compensator_increment(spec, h, {0.0, 1.0}, ValueSet::all(), kEmptySegment, 1e-3)
          .value;
  const double left =
      signal_compensator_increment(spec, h, {0.0, 0.3}, ValueSet::all(), kEmptySegment, 1e-3)
          .value;
  const double right =
      signal_compensator_increment(spec, h, {0.3, 1.0}, ValueSet::all(), kEmptySegment, 1e-3)
          .value;
  CHECK(whole >= 0.0);
  CHECK(left >= 0.0);
  CHECK(right >= 0.0);
  CHECK(std::abs(whole - (left + right)) <= 1e-10);
}

TEST_CASE("residuals vanish identically without any jump activity") {
  const ModelSpec spec = preset_deterministic_jumps(2, swap2(), {}, drift2(), 1.0);
  const auto rep = compensator_residual(
      spec, [](double, const History&, double) { return 1.0; }, 200, 1.0, 1e-2, 5);
  CHECK(rep.signal.mean == 0.0);
  CHECK(rep.signal.stderr_ == 0.0);
  CHECK(rep.noise.mean == 0.0);
  CHECK(rep.jump_size.mean == 0.0);
}

TEST_CASE("clock-only residual cancels pathwise") {
  const ModelSpec spec = preset_deterministic_jumps(2, swap2(), {0.5}, drift2(), 1.0);
  const auto rep = compensator_residual(
      spec, [](double, const History&, double) { return 1.0; }, 200, 1.0, 1e-2, 6);
  CHECK(rep.signal.mean == 0.0);
  CHECK(rep.signal.stderr_ == 0.0);
}

TEST_CASE("unit-integrand residual is unbiased under a constant rate") {
  const ModelSpec spec = rate_one_model();
  const auto rep = compensator_residual(
      spec, [](double, const History&, double) { return 1.0; }, 4000, 1.0, 1e-3, 7);
  CHECK(std::abs(rep.signal.mean) <= 3.0 * rep.signal.stderr_);
  CHECK(rep.signal.stderr_ > 0.0);
}

TEST_CASE("innovation with zero drift reconstructs the Gaussian increments") {
  ModelSpec spec = preset_deterministic_jumps(2, swap2(), {}, drift2(), 1.0);
  spec.obs.drift = [](double, const History&, double) { return 0.0; };
  const SystemPath path = simulate(spec, 1.0, 1e-3, 9);
  const ObservationRecord obs = observe(path);
  const std::vector<double> pi_b(1001, 0.0);
  const std::vector<double> innov = innovation_path(pi_b, obs, spec);
  REQUIRE(innov.size() == 1001);
  double w = 0.0;
  for (int i = 0; i < 1000; ++i) {
    w += path.w_increments[static_cast<std::size_t>(i)];
    CHECK(innov[static_cast<std::size_t>(i) + 1] == doctest::Approx(w).epsilon(1e-9));
  }
}

TEST_CASE("innovation requires a drift value per node") {
  ModelSpec spec = preset_deterministic_jumps(2, swap2(), {}, drift2(), 1.0);
  const ObservationRecord obs = observe(simulate(spec, 1.0, 1e-2, 9));
  CHECK_THROWS_AS(innovation_path(std::vector<double>(3, 0.0), obs, spec),
                  InvalidArgument);
}

TEST_CASE("jump-size compensator with a continuous mark density") {
  ModelSpec spec = rate_one_model();
  spec.signal.rate = [](double, const History&) { return 0.0; };
  spec.signal.rate_bound = 0.0;
  spec.mark_space = MarkSpace::continuous(0.0, 1.0);
  spec.noise.rate = [](double, const History&, double) { return 1.0; };
  spec.noise.rate_bound = 1.0;
  spec.noise.kernel_q.density = [](double, const History&, double, double z) {
    return (z >= 0.0 && z <= 1.0) ? 2.0 * z : 0.0;
  };
  spec.obs.g_inaccessible = [](double, const History&, double, double z) { return z; };

  // Sizes in [0.5, 1]: density mass 1 - 0.25 = 0.75 per unit time. The
  // set boundary is resolved at the mark-quadrature step, hence the loose
  // tolerance.
  const auto inc = jump_size_compensator_increment(
      spec, History(0.0), {0.0, 1.0}, SizeSet::interval(0.5, 1.0), kEmptySegment, 1e-3);
  CHECK(inc.value == doctest::Approx(0.75).epsilon(2e-3));
}

TEST_CASE("innovation under a perfect filter reproduces the driving noise") {
  // One-state signal: the filter is a point mass at the truth, so the
  // centered increments are exactly the Gaussian ones.
  ModelSpec spec;
  spec.label_space = LabelSpace::finite_states(1);
  spec.value_homogeneous = true;
  spec.signal.initial = 0.0;
  spec.obs.drift = [](double, const History&, double) { return 0.3; };
  spec.obs.vol = [](double, double) { return 0.7; };
  spec.obs.vol_min = 0.7;

  const SystemPath path = simulate(spec, 1.0, 1e-3, 13);
  const ObservationRecord obs = observe(path);
  const std::vector<double> pi_b(1001, 0.3);
  const std::vector<double> innov = innovation_path(pi_b, obs, spec);
  double w = 0.0;
  for (int i = 0; i < 1000; ++i) {
    w += path.w_increments[static_cast<std::size_t>(i)];
    CHECK(innov[static_cast<std::size_t>(i) + 1] ==
          doctest::Approx(w).epsilon(1e-9));
  }
}
