#include "jumpfilter/history.hpp"

#include <cmath>

namespace jumpfilter {

Trajectory to_trajectory(const History& h) {
  return Trajectory(h.initial(), h.jumps());
}

History from_trajectory(const Trajectory& x) {
  // t_n = inf{t > t_{n-1} : x(t) != x(t_{n-1})}: scan the records and keep
  // only genuine value changes.
  Trajectory c = x.canonical();
  return History(c.initial(), c.jumps());
}

History join(const History& h, double t, double e) { return h.joined(t, e); }

Trajectory join_trajectory(const Trajectory& x, double t, double e) {
  if (!(t > 0)) throw InvalidArgument("join time must be positive");
  std::vector<JumpRecord> js;
  for (const auto& j : x.jumps()) {
    if (j.time < t)
      js.push_back(j);
    else
      break;
  }
  if (!js.empty() && !(t > js.back().time))
    throw InvalidArgument("join time must exceed the last retained jump time");
  js.push_back({t, e});
  return Trajectory(x.initial(), std::move(js));
}

double distance(const History& a, const History& b,
                const std::function<double(double, double)>& label_metric) {
  if (a.total_jumps() != b.total_jumps()) return 1.0;
  const auto rho = [](double x) { return x / (1.0 + x); };
  const int n = a.total_jumps();
  // Coordinate 0 compares the initial labels (t_0 = t_0' = 0).
  double d = 0.25 * rho(label_metric(a.initial(), b.initial()));
  for (int k = 1; k <= n; ++k) {
    const JumpRecord& ja = a.jumps()[static_cast<std::size_t>(k - 1)];
    const JumpRecord& jb = b.jumps()[static_cast<std::size_t>(k - 1)];
    const double w = std::ldexp(1.0, -(k + 2));
    d += w * (rho(std::fabs(ja.time - jb.time)) + rho(label_metric(ja.value, jb.value)));
  }
  return d;
}

}  // namespace jumpfilter
