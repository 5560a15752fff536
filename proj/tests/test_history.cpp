#include <doctest.h>

#include <random>

#include "jumpfilter/history.hpp"
#include "jumpfilter/model.hpp"

using namespace jumpfilter;

namespace {

const auto discrete_metric = [](double a, double b) { return a == b ? 0.0 : 1.0; };

// Random stutter-free history over a small finite label set.
History random_history(Rng& rng, int max_jumps = 6) {
  std::uniform_int_distribution<int> n_dist(0, max_jumps);
  std::uniform_int_distribution<int> label(0, 3);
  std::uniform_real_distribution<double> gap(0.05, 1.0);
  double v = label(rng);
  History h(v);
  double t = 0.0;
  const int n = n_dist(rng);
  for (int k = 0; k < n; ++k) {
    t += gap(rng);
    double e = label(rng);
    while (e == v) e = label(rng);
    h = h.joined(t, e);
    v = e;
  }
  return h;
}

}  // namespace

TEST_CASE("trajectory of a constant history") {
  History h(2.0);
  Trajectory x = to_trajectory(h);
  CHECK(x.value_at(0.0) == 2.0);
  CHECK(x.value_at(100.0) == 2.0);
  CHECK(from_trajectory(x) == h);
}

TEST_CASE("trajectory of a one-jump history") {
  History h = History(0.0).joined(1.0, 1.0);
  Trajectory x = to_trajectory(h);
  CHECK(x.value_at(0.0) == 0.0);
  CHECK(x.value_at(0.999) == 0.0);
  CHECK(x.value_at(1.0) == 1.0);  // right continuity
  CHECK(x.value_at(5.0) == 1.0);
}

TEST_CASE("round trips over 1000 random histories") {
  Rng rng = make_rng(7);
  for (int i = 0; i < 1000; ++i) {
    const History h = random_history(rng);
    CHECK(from_trajectory(to_trajectory(h)) == h);
    const Trajectory x = to_trajectory(h);
    CHECK(to_trajectory(from_trajectory(x)) == x);
  }
}

TEST_CASE("from_trajectory on an explicit two-piece path") {
  Trajectory x(0.0, {{2.0, 2.0}});
  const History h = from_trajectory(x);
  CHECK(h.initial() == 0.0);
  REQUIRE(h.total_jumps() == 1);
  CHECK(h.jumps()[0].time == 2.0);
  CHECK(h.jumps()[0].value == 2.0);
}

TEST_CASE("jump counting is strict") {
  History h = History(0.0).joined(1.0, 1.0).joined(3.0, 0.0);
  CHECK(h.jump_count_before(2.0) == 1);
  CHECK(h.jump_count_before(1.0) == 0);  // strict "<"
  CHECK(h.jump_count_before(3.0 + 1e-12) == 2);
  CHECK(History(5.0).jump_count_before(42.0) == 0);
  CHECK(h.total_jumps() == 2);
}

TEST_CASE("current value and join identities") {
  History h(0.0);
  CHECK(h.current_value() == 0.0);
  History h1 = join(h, 2.0, 3.0);
  CHECK(h1.current_value() == 3.0);
  CHECK(h1.total_jumps() == h.total_jumps() + 1);
  CHECK_THROWS_AS(join(h1, 0.5, 1.0), InvalidArgument);

  // join agrees with the trajectory-side append through the bijection.
  Trajectory left = to_trajectory(join(h1, 4.0, 1.0));
  Trajectory right = join_trajectory(to_trajectory(h1), 4.0, 1.0);
  CHECK(left == right);
  CHECK(left.value_at(3.9) == 3.0);
  CHECK(left.value_at(4.0) == 1.0);
}

TEST_CASE("current value equals the trajectory tail") {
  Rng rng = make_rng(11);
  for (int i = 0; i < 200; ++i) {
    const History h = random_history(rng);
    const Trajectory x = to_trajectory(h);
    CHECK(h.current_value() == x.value_at(h.last_jump_time()));
    CHECK(h.current_value() == x.value_at(h.last_jump_time() + 10.0));
  }
}

TEST_CASE("metric: frozen example values") {
  History h(0.0);
  CHECK(distance(h, h, discrete_metric) == 0.0);

  // Different jump counts sit at distance 1.
  CHECK(distance(h, h.joined(1.0, 1.0), discrete_metric) == 1.0);

  // Same labels, times 1 vs 2: weight 2^-3 times rho(1) = 1/2.
  History a = History(0.0).joined(1.0, 1.0);
  History b = History(0.0).joined(2.0, 1.0);
  CHECK(distance(a, b, discrete_metric) == doctest::Approx(0.0625).epsilon(1e-14));
}

TEST_CASE("metric axioms on random pairs and triples") {
  Rng rng = make_rng(23);
  for (int i = 0; i < 300; ++i) {
    const History a = random_history(rng);
    const History b = random_history(rng);
    const History c = random_history(rng);
    const double dab = distance(a, b, discrete_metric);
    const double dba = distance(b, a, discrete_metric);
    CHECK(dab == dba);
    CHECK(dab <= 1.0);
    CHECK(dab >= 0.0);
    if (dab == 0.0) CHECK(a == b);
    const double dac = distance(a, c, discrete_metric);
    const double dcb = distance(c, b, discrete_metric);
    CHECK(dab <= dac + dcb + 1e-12);
  }
}

TEST_CASE("histories reject bad jump lists") {
  CHECK_THROWS_AS(History(0.0, {{-1.0, 1.0}}), InvalidArgument);
  CHECK_THROWS_AS(History(0.0, {{1.0, 1.0}, {1.0, 0.0}}), InvalidArgument);
  CHECK_NOTHROW(History(0.0, {{1.0, 1.0}, {2.0, 0.0}}));
}

TEST_CASE("prefix_before cuts strictly") {
  History h = History(0.0).joined(1.0, 1.0).joined(2.0, 2.0);
  CHECK(h.prefix_before(1.0) == History(0.0));
  CHECK(h.prefix_before(1.5) == History(0.0).joined(1.0, 1.0));
  CHECK(h.prefix_before(10.0) == h);
}

TEST_CASE("jump counting before and after each jump time") {
  Rng rng = make_rng(29);
  for (int i = 0; i < 100; ++i) {
    const History h = random_history(rng);
    int prev = 0;
    for (int n = 1; n <= h.total_jumps(); ++n) {
      const double tn = h.jumps()[static_cast<std::size_t>(n - 1)].time;
      CHECK(h.jump_count_before(tn) == n - 1);
      CHECK(h.jump_count_before(std::nextafter(tn, 1e300)) == n);
      CHECK(h.jump_count_before(tn) >= prev);
      prev = h.jump_count_before(tn);
    }
  }
}
