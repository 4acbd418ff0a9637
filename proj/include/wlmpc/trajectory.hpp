#pragma once

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <vector>

#include "wlmpc/vehicle_model.hpp"

namespace wlmpc {

struct TrajectoryStep {
  VehicleState state;  ///< rear-frame canonical storage
  ControlInput input;
};

/// Time-indexed nominal state/control sequence produced by the planner and
/// consumed as the tracking reference. States are stored in the rear frame;
/// per-step frame tags record which representation the tracking controllers
/// use along each segment.
struct Trajectory {
  double ts = 0.2;
  std::vector<TrajectoryStep> steps;
  std::vector<Frame> frames;
  std::vector<int> direction_switches;  ///< first index of each new-direction segment

  int size() const { return static_cast<int>(steps.size()); }
  bool empty() const { return steps.empty(); }

  const VehicleState& state(int i) const { return steps[static_cast<size_t>(i)].state; }
  const ControlInput& input(int i) const { return steps[static_cast<size_t>(i)].input; }

  VehicleState state_in(int i, Frame f, const VehicleParams& p) const {
    return to_frame(state(i), f, p);
  }

  /// Recomputes frame tags and direction-switch indices from the stored speeds.
  void finalize(const VehicleParams& p);
};

/// Tracking-frame selection: front body coordinates while driving forward,
/// rear while reversing; the previous frame is held through the near-zero
/// speed at loading/unloading/turning points.
inline Frame select_frame(double nominal_v, Frame previous) {
  if (nominal_v > 1e-6) return Frame::Front;
  if (nominal_v < -1e-6) return Frame::Rear;
  return previous;
}

inline void Trajectory::finalize(const VehicleParams& p) {
  (void)p;
  const int n = size();
  frames.assign(static_cast<size_t>(n), Frame::Rear);
  direction_switches.clear();
  if (n == 0) return;
  // Leading at-rest steps take the first moving direction.
  Frame prev = Frame::Rear;
  for (int i = 0; i < n; ++i) {
    const double v = input(i).v;
    if (v > 1e-6 || v < -1e-6) {
      prev = select_frame(v, prev);
      break;
    }
  }
  for (int i = 0; i < n; ++i) {
    prev = select_frame(input(i).v, prev);
    frames[static_cast<size_t>(i)] = prev;
    if (i > 0 && frames[static_cast<size_t>(i)] != frames[static_cast<size_t>(i - 1)])
      direction_switches.push_back(i);
  }
}

/// Index of the trajectory step whose same-frame position is nearest to the
/// query, searched in a window around the hint. Progress is monotone: the
/// returned index never falls below the hint. Ties break to the larger index.
inline int nearest_index(const Trajectory& traj, const Vec2& position, Frame frame,
                         const VehicleParams& params, int hint, int window = 5) {
  if (traj.empty()) throw std::invalid_argument("nearest_index: empty trajectory");
  const int n = traj.size();
  hint = std::clamp(hint, 0, n - 1);
  const int lo = std::max(0, hint - window);
  const int hi = std::min(n - 1, hint + window);
  int best = lo;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (int i = lo; i <= hi; ++i) {
    const VehicleState s = traj.state_in(i, frame, params);
    const double d2 = (Vec2(s.x, s.y) - position).squaredNorm();
    if (d2 <= best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return std::max(best, hint);
}

}  // namespace wlmpc
