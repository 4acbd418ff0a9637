#pragma once

#include <stdexcept>
#include <vector>

#include "wlmpc/trajectory.hpp"
#include "wlmpc/vehicle_model.hpp"

namespace wlmpc {

/// Scheduling parameter vector rho(k): the nominal-trajectory quantities the
/// Jacobians are evaluated at. Positions do not enter the Jacobians.
struct SchedulingPoint {
  double theta_nom = 0.0;
  double gamma_nom = 0.0;
  double v_nom = 0.0;
  double gamma_rate_nom = 0.0;
  Frame frame = Frame::Rear;

  static SchedulingPoint from(const TrajectoryStep& step, Frame frame) {
    return SchedulingPoint{step.state.theta, step.state.gamma, step.input.v,
                           step.input.gamma_rate, frame};
  }
};

/// Discrete time-varying pair evaluated at one scheduling point:
///   A(rho) = I + ts * df/dx|rho,   B(rho) = ts * df/du|rho.
struct LpvMatrices {
  Mat4 a;
  Mat42 b;
};

inline LpvMatrices embed_at(const SchedulingPoint& rho, const VehicleParams& params,
                            double ts) {
  if (!(ts > 0.0)) throw std::invalid_argument("embed_at: ts must be > 0");
  const VehicleState s{0.0, 0.0, rho.theta_nom, rho.gamma_nom, rho.frame};
  const ControlInput u{rho.v_nom, rho.gamma_rate_nom};
  LpvMatrices m;
  m.a = Mat4::Identity() + ts * jacobian_state(s, u, params);
  m.b = ts * jacobian_control(s, u, params);
  return m;
}

/// Matrix sequence along a nominal trajectory window. The window is clipped at
/// the trajectory end and at the next direction switch (one frame tag per
/// horizon); clipped steps hold the last in-range point.
inline std::vector<LpvMatrices> embed_horizon(const Trajectory& traj, int start_index,
                                              int n, const VehicleParams& params,
                                              double ts) {
  if (traj.empty()) throw std::invalid_argument("no nominal trajectory");
  if (n <= 0) throw std::invalid_argument("embed_horizon: horizon must be positive");
  start_index = std::clamp(start_index, 0, traj.size() - 1);
  const Frame frame = traj.frames.empty() ? Frame::Rear
                                          : traj.frames[static_cast<size_t>(start_index)];
  // Last index sharing the start frame.
  int last = traj.size() - 1;
  for (int i = start_index; i < traj.size(); ++i) {
    if (traj.frames[static_cast<size_t>(i)] != frame) {
      last = i - 1;
      break;
    }
  }
  std::vector<LpvMatrices> seq;
  seq.reserve(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) {
    const int i = std::min(start_index + k, last);
    seq.push_back(embed_at(SchedulingPoint::from(traj.steps[static_cast<size_t>(i)], frame),
                           params, ts));
  }
  return seq;
}

}  // namespace wlmpc
