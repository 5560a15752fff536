#ifndef JUMPFILTER_HISTORY_HPP
#define JUMPFILTER_HISTORY_HPP

#include <cstddef>
#include <functional>
#include <vector>

#include "jumpfilter/errors.hpp"

namespace jumpfilter {

// One recorded jump of the signal: strictly positive time, new label value.
struct JumpRecord {
  double time;
  double value;

  friend bool operator==(const JumpRecord& a, const JumpRecord& b) {
    return a.time == b.time && a.value == b.value;
  }
};

/// A signal history: an initial label plus the finite, strictly
/// time-increasing list of jumps taken so far. Immutable value type; the
/// canonical memory object for path-dependent model functions.
class History {
 public:
  explicit History(double initial) : initial_(initial) {}

  History(double initial, std::vector<JumpRecord> jumps)
      : initial_(initial), jumps_(std::move(jumps)) {
    double last = 0.0;
    for (const auto& j : jumps_) {
      if (!(j.time > last))
        throw InvalidArgument("history jump times must be strictly increasing and > 0");
      last = j.time;
    }
  }

  double initial() const { return initial_; }
  const std::vector<JumpRecord>& jumps() const { return jumps_; }

  // Total number of recorded jumps.
  int total_jumps() const { return static_cast<int>(jumps_.size()); }

  // Number of jumps strictly before t (the count is left-continuous in t:
  // a jump exactly at t is not yet counted).
  int jump_count_before(double t) const {
    int n = 0;
    for (const auto& j : jumps_) {
      if (j.time < t)
        ++n;
      else
        break;
    }
    return n;
  }

  // Label after the last recorded jump; the initial label if none.
  double current_value() const {
    return jumps_.empty() ? initial_ : jumps_.back().value;
  }

  // Time of the last recorded jump, 0 if none.
  double last_jump_time() const {
    return jumps_.empty() ? 0.0 : jumps_.back().time;
  }

  // Right-continuous piecewise-constant evaluation at time t >= 0.
  double value_at(double t) const {
    double v = initial_;
    for (const auto& j : jumps_) {
      if (j.time <= t)
        v = j.value;
      else
        break;
    }
    return v;
  }

  // Append a jump at time t (strictly after the last one) to label e.
  History joined(double t, double e) const {
    if (!(t > last_jump_time()))
      throw InvalidArgument("join time must exceed the last jump time");
    std::vector<JumpRecord> js = jumps_;
    js.push_back({t, e});
    History out(initial_);
    out.jumps_ = std::move(js);
    return out;
  }

  // The history as seen strictly before time t (jumps at >= t dropped).
  History prefix_before(double t) const {
    History out(initial_);
    for (const auto& j : jumps_) {
      if (j.time < t)
        out.jumps_.push_back(j);
      else
        break;
    }
    return out;
  }

  // Copy with the current label replaced, keeping the jump skeleton.
  History with_current_value(double e) const {
    History out = *this;
    if (out.jumps_.empty())
      out.initial_ = e;
    else
      out.jumps_.back().value = e;
    return out;
  }

  friend bool operator==(const History& a, const History& b) {
    return a.initial_ == b.initial_ && a.jumps_ == b.jumps_;
  }

 private:
  double initial_;
  std::vector<JumpRecord> jumps_;
};

/// A piecewise-constant right-continuous path on [0, inf): the same data as
/// a History read as a function of time. Jump records whose value repeats
/// the previous one are representational no-ops; canonical() drops them.
class Trajectory {
 public:
  explicit Trajectory(double initial) : initial_(initial) {}
  Trajectory(double initial, std::vector<JumpRecord> jumps)
      : initial_(initial), jumps_(std::move(jumps)) {
    double last = 0.0;
    for (const auto& j : jumps_) {
      if (!(j.time > last))
        throw InvalidArgument("trajectory jump times must be strictly increasing and > 0");
      last = j.time;
    }
  }

  double initial() const { return initial_; }
  const std::vector<JumpRecord>& jumps() const { return jumps_; }

  double value_at(double t) const {
    double v = initial_;
    for (const auto& j : jumps_) {
      if (j.time <= t)
        v = j.value;
      else
        break;
    }
    return v;
  }

  // Drop stuttering records (a "jump" to the value already held).
  Trajectory canonical() const {
    Trajectory out(initial_);
    double v = initial_;
    for (const auto& j : jumps_) {
      if (j.value != v) {
        out.jumps_.push_back(j);
        v = j.value;
      }
    }
    return out;
  }

  // Pointwise equality of the paths (representation-independent).
  friend bool operator==(const Trajectory& a, const Trajectory& b) {
    Trajectory ca = a.canonical(), cb = b.canonical();
    return ca.initial_ == cb.initial_ && ca.jumps_ == cb.jumps_;
  }

 private:
  double initial_;
  std::vector<JumpRecord> jumps_;
};

// Bijection between histories and piecewise-constant paths: a history is
// read as the path holding each label until the next jump, the last label
// forever.
Trajectory to_trajectory(const History& h);
History from_trajectory(const Trajectory& x);

// Append semantics on both sides of the bijection.
History join(const History& h, double t, double e);
Trajectory join_trajectory(const Trajectory& x, double t, double e);

// Bounded metric on histories. Histories with different jump counts are at
// distance 1; otherwise the times and labels are compared coordinate-wise
// with geometrically decaying weights. label_metric supplies the distance
// on the label space.
double distance(const History& a, const History& b,
                const std::function<double(double, double)>& label_metric);

}  // namespace jumpfilter

#endif
