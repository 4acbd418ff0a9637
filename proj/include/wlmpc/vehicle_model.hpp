#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace wlmpc {

using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;
using Mat42 = Eigen::Matrix<double, 4, 2>;
using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;

/// Which axle center the (x, y) of a state refers to. The heading angle theta
/// is that of the rear body in both representations; the front body heading is
/// theta + gamma.
enum class Frame { Rear, Front };

inline const char* to_string(Frame f) { return f == Frame::Rear ? "rear" : "front"; }

/// Geometry and actuation limits of the articulated vehicle.
struct VehicleParams {
  double l_front = 1.6;          ///< articulation joint -> front axle [m]
  double l_rear = 1.7;           ///< articulation joint -> rear axle [m]
  double gamma_max = 0.40;       ///< articulation angle bound [rad]
  double v_max = 2.0;            ///< speed bound [m/s]
  double gamma_rate_max = 0.35;  ///< articulation rate bound [rad/s]

  void validate() const {
    if (!(l_front > 0.0)) throw std::invalid_argument("vehicle: l_front must be > 0");
    if (!(l_rear > 0.0)) throw std::invalid_argument("vehicle: l_rear must be > 0");
    if (!(gamma_max > 0.0 && gamma_max < M_PI / 2.0))
      throw std::invalid_argument("vehicle: gamma_max must lie in (0, pi/2)");
    if (!(v_max > 0.0)) throw std::invalid_argument("vehicle: v_max must be > 0");
    if (!(gamma_rate_max > 0.0))
      throw std::invalid_argument("vehicle: gamma_rate_max must be > 0");
  }
};

/// Pose of the vehicle. theta is kept unwrapped internally; wrap only for display.
struct VehicleState {
  double x = 0.0;      ///< [m]
  double y = 0.0;      ///< [m]
  double theta = 0.0;  ///< rear body heading [rad], unwrapped
  double gamma = 0.0;  ///< articulation angle [rad]
  Frame frame = Frame::Rear;

  Vec4 vec() const { return Vec4(x, y, theta, gamma); }

  static VehicleState from_vec(const Vec4& v, Frame f) {
    return VehicleState{v(0), v(1), v(2), v(3), f};
  }
};

struct ControlInput {
  double v = 0.0;           ///< speed [m/s], signed; negative = reversing
  double gamma_rate = 0.0;  ///< articulation rate [rad/s]

  Vec2 vec() const { return Vec2(v, gamma_rate); }
};

struct StateDerivative {
  double dx = 0.0;
  double dy = 0.0;
  double dtheta = 0.0;
  double dgamma = 0.0;

  Vec4 vec() const { return Vec4(dx, dy, dtheta, dgamma); }
};

/// Wrap an angle to (-pi, pi]. Report/display use only.
inline double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a <= 0.0) a += 2.0 * M_PI;
  return a - M_PI;
}

/// Continuous kinematics:
///   xdot = v cos(h), ydot = v sin(h)   with h = theta (rear) or theta + gamma (front)
///   thetadot = (v sin(gamma) - L_r gammadot cos(gamma)) / (L_f cos(gamma) + L_r)
///   gammadot = input rate
/// One speed input v feeds all equations of the active frame.
inline StateDerivative dynamics_continuous(const VehicleState& s, const ControlInput& u,
                                           const VehicleParams& p) {
  const double cg = std::cos(s.gamma);
  const double sg = std::sin(s.gamma);
  const double den = p.l_front * cg + p.l_rear;
  const double h = (s.frame == Frame::Front) ? s.theta + s.gamma : s.theta;
  StateDerivative d;
  d.dx = u.v * std::cos(h);
  d.dy = u.v * std::sin(h);
  d.dtheta = (u.v * sg - p.l_rear * u.gamma_rate * cg) / den;
  d.dgamma = u.gamma_rate;
  return d;
}

/// One forward-Euler step: x(k+1) = x(k) + ts * f(x(k), u(k)). Frame tag preserved.
inline VehicleState step_euler(const VehicleState& s, const ControlInput& u,
                               const VehicleParams& p, double ts) {
  const StateDerivative d = dynamics_continuous(s, u, p);
  VehicleState out = s;
  out.x += ts * d.dx;
  out.y += ts * d.dy;
  out.theta += ts * d.dtheta;
  out.gamma += ts * d.dgamma;
  return out;
}

/// d(thetadot)/d(gamma), common to both frames.
inline double dthetadot_dgamma(const ControlInput& u, double gamma, const VehicleParams& p) {
  const double cg = std::cos(gamma);
  const double sg = std::sin(gamma);
  const double den = p.l_front * cg + p.l_rear;
  return (u.v * cg + p.l_rear * u.gamma_rate * sg) / den +
         (p.l_front * sg) * (u.v * sg - p.l_rear * u.gamma_rate * cg) / (den * den);
}

/// Analytic df/dx (4x4). Front-frame rows 1-2 pick up the extra d/dgamma terms
/// from the theta + gamma argument.
inline Mat4 jacobian_state(const VehicleState& s, const ControlInput& u,
                           const VehicleParams& p) {
  Mat4 j = Mat4::Zero();
  const double f4 = dthetadot_dgamma(u, s.gamma, p);
  if (s.frame == Frame::Rear) {
    j(0, 2) = -u.v * std::sin(s.theta);
    j(1, 2) = u.v * std::cos(s.theta);
  } else {
    const double h = s.theta + s.gamma;
    j(0, 2) = -u.v * std::sin(h);
    j(0, 3) = -u.v * std::sin(h);
    j(1, 2) = u.v * std::cos(h);
    j(1, 3) = u.v * std::cos(h);
  }
  j(2, 3) = f4;
  return j;
}

/// Analytic df/du (4x2).
inline Mat42 jacobian_control(const VehicleState& s, const ControlInput& /*u*/,
                              const VehicleParams& p) {
  const double cg = std::cos(s.gamma);
  const double sg = std::sin(s.gamma);
  const double den = p.l_front * cg + p.l_rear;
  const double h = (s.frame == Frame::Front) ? s.theta + s.gamma : s.theta;
  Mat42 j = Mat42::Zero();
  j(0, 0) = std::cos(h);
  j(1, 0) = std::sin(h);
  j(2, 0) = sg / den;
  j(2, 1) = -p.l_rear * cg / den;
  j(3, 1) = 1.0;
  return j;
}

/// Front axle position from a rear-frame state:
///   p_front = p_rear + L_r (cos th, sin th) + L_f (cos(th+g), sin(th+g))
inline VehicleState rear_to_front(const VehicleState& s, const VehicleParams& p) {
  if (s.frame != Frame::Rear)
    throw std::invalid_argument("rear_to_front: state is not rear-tagged");
  VehicleState out = s;
  out.x = s.x + p.l_rear * std::cos(s.theta) + p.l_front * std::cos(s.theta + s.gamma);
  out.y = s.y + p.l_rear * std::sin(s.theta) + p.l_front * std::sin(s.theta + s.gamma);
  out.frame = Frame::Front;
  return out;
}

inline VehicleState front_to_rear(const VehicleState& s, const VehicleParams& p) {
  if (s.frame != Frame::Front)
    throw std::invalid_argument("front_to_rear: state is not front-tagged");
  VehicleState out = s;
  out.x = s.x - p.l_rear * std::cos(s.theta) - p.l_front * std::cos(s.theta + s.gamma);
  out.y = s.y - p.l_rear * std::sin(s.theta) - p.l_front * std::sin(s.theta + s.gamma);
  out.frame = Frame::Rear;
  return out;
}

/// Convert a state to the requested frame (no-op when already there).
inline VehicleState to_frame(const VehicleState& s, Frame f, const VehicleParams& p) {
  if (s.frame == f) return s;
  return f == Frame::Front ? rear_to_front(s, p) : front_to_rear(s, p);
}

}  // namespace wlmpc
