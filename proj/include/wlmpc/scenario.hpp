#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "wlmpc/vehicle_model.hpp"

namespace wlmpc {

/// Oriented rectangle (pile, dump truck).
struct RectObstacle {
  Vec2 center = Vec2::Zero();
  Vec2 half_extents = Vec2::Ones();
  double rotation = 0.0;  ///< [rad]

  void validate() const {
    if (!(half_extents(0) > 0.0 && half_extents(1) > 0.0))
      throw std::invalid_argument("obstacle: half_extents must be > 0");
  }
};

/// Squared Euclidean distance from a point to the rectangle, 0 inside.
/// Computed by clamping the point in the rectangle's local frame.
inline double point_rect_distance_sq(const Vec2& p, const RectObstacle& r) {
  const double c = std::cos(r.rotation), s = std::sin(r.rotation);
  const Vec2 d = p - r.center;
  const Vec2 local(c * d(0) + s * d(1), -s * d(0) + c * d(1));
  const Vec2 clamped = local.cwiseMax(-r.half_extents).cwiseMin(r.half_extents);
  return (local - clamped).squaredNorm();
}

/// Signed variant used inside the planner: equals the squared distance
/// outside, and minus the squared penetration depth inside, so constraint
/// gradients stay informative when an iterate dips into a rectangle.
inline double point_rect_signed_sq(const Vec2& p, const RectObstacle& r) {
  const double c = std::cos(r.rotation), s = std::sin(r.rotation);
  const Vec2 d = p - r.center;
  const Vec2 local(c * d(0) + s * d(1), -s * d(0) + c * d(1));
  const Vec2 outside = (local.cwiseAbs() - r.half_extents).cwiseMax(0.0);
  const double out_sq = outside.squaredNorm();
  if (out_sq > 0.0) return out_sq;
  const double depth =
      std::min(r.half_extents(0) - std::abs(local(0)), r.half_extents(1) - std::abs(local(1)));
  return -depth * depth;
}

/// The vehicle points checked against obstacles: rear axle center,
/// articulation joint, front axle center.
inline std::array<Vec2, 3> collision_points(const VehicleState& state,
                                            const VehicleParams& p) {
  const VehicleState rear = to_frame(state, Frame::Rear, p);
  const Vec2 rear_pt(rear.x, rear.y);
  const Vec2 joint = rear_pt + p.l_rear * Vec2(std::cos(rear.theta), std::sin(rear.theta));
  const Vec2 front =
      joint + p.l_front * Vec2(std::cos(rear.theta + rear.gamma),
                               std::sin(rear.theta + rear.gamma));
  return {rear_pt, joint, front};
}

/// Minimum squared clearance over all checked points and obstacles; 0 when any
/// point is inside a rectangle.
inline double obstacle_clearance_sq(const VehicleState& state,
                                    const std::vector<RectObstacle>& obstacles,
                                    const VehicleParams& p) {
  double best = std::numeric_limits<double>::infinity();
  const auto pts = collision_points(state, p);
  for (const auto& obs : obstacles)
    for (const auto& pt : pts) best = std::min(best, point_rect_distance_sq(pt, obs));
  return best;
}

/// Full description of a loading-cycle planning task.
struct Scenario {
  VehicleParams params;
  VehicleState loading_pose;    ///< rear frame
  VehicleState unloading_pose;  ///< rear frame
  std::vector<RectObstacle> obstacles;
  double d_safe = 0.5;  ///< [m]
  double ts = 0.2;      ///< [s]
  int n_plan = 100;

  void validate() const {
    params.validate();
    if (!(ts > 0.0)) throw std::invalid_argument("scenario: ts must be > 0");
    if (n_plan < 2) throw std::invalid_argument("scenario: n_plan must be >= 2");
    if (d_safe < 0.0) throw std::invalid_argument("scenario: d_safe must be >= 0");
    for (const auto& o : obstacles) o.validate();
    for (const VehicleState* pose : {&loading_pose, &unloading_pose}) {
      if (std::abs(pose->gamma) > params.gamma_max)
        throw std::invalid_argument("scenario: pose articulation exceeds gamma_max");
      if (!obstacles.empty() &&
          obstacle_clearance_sq(*pose, obstacles, params) < d_safe * d_safe)
        throw std::invalid_argument(
            "scenario: loading/unloading pose closer than d_safe to an obstacle");
    }
  }
};

}  // namespace wlmpc
