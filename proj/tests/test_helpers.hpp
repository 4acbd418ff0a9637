#pragma once

#include <Eigen/Dense>

#include <random>

#include "wlmpc/vehicle_model.hpp"

// Shared test-only oracles. These deliberately avoid the library code paths
// they are used to check.

namespace wlmpc::test {

// Central finite differences of dynamics_continuous w.r.t. the state.
inline Mat4 fd_jacobian_state(const VehicleState& s, const ControlInput& u,
                              const VehicleParams& p, double h = 1e-6) {
  Mat4 j;
  for (int c = 0; c < 4; ++c) {
    Vec4 lo = s.vec();
    Vec4 hi = s.vec();
    lo(c) -= h;
    hi(c) += h;
    const Vec4 flo = dynamics_continuous(VehicleState::from_vec(lo, s.frame), u, p).vec();
    const Vec4 fhi = dynamics_continuous(VehicleState::from_vec(hi, s.frame), u, p).vec();
    j.col(c) = (fhi - flo) / (2.0 * h);
  }
  return j;
}

// Central finite differences w.r.t. the input.
inline Mat42 fd_jacobian_control(const VehicleState& s, const ControlInput& u,
                                 const VehicleParams& p, double h = 1e-6) {
  Mat42 j;
  for (int c = 0; c < 2; ++c) {
    Vec2 lo = u.vec();
    Vec2 hi = u.vec();
    lo(c) -= h;
    hi(c) += h;
    const Vec4 flo = dynamics_continuous(s, ControlInput{lo(0), lo(1)}, p).vec();
    const Vec4 fhi = dynamics_continuous(s, ControlInput{hi(0), hi(1)}, p).vec();
    j.col(c) = (fhi - flo) / (2.0 * h);
  }
  return j;
}

// Relative error of a matrix against a reference, scaled by max(1, |ref|_max).
template <typename A, typename B>
double matrix_rel_error(const A& got, const B& ref) {
  const double scale = std::max(1.0, ref.cwiseAbs().maxCoeff());
  return (got - ref).cwiseAbs().maxCoeff() / scale;
}

// Deterministic random state/input generator within the model's validity region.
struct RandomPointGen {
  std::mt19937_64 rng;
  explicit RandomPointGen(uint64_t seed) : rng(seed) {}

  VehicleState state(const VehicleParams& p, Frame frame) {
    std::uniform_real_distribution<double> pos(-20.0, 20.0);
    std::uniform_real_distribution<double> ang(-M_PI, M_PI);
    std::uniform_real_distribution<double> gam(-p.gamma_max, p.gamma_max);
    VehicleState s;
    s.x = pos(rng);
    s.y = pos(rng);
    s.theta = ang(rng);
    s.gamma = gam(rng);
    s.frame = frame;
    return s;
  }

  ControlInput input(const VehicleParams& p) {
    std::uniform_real_distribution<double> sv(-p.v_max, p.v_max);
    std::uniform_real_distribution<double> sg(-p.gamma_rate_max, p.gamma_rate_max);
    return ControlInput{sv(rng), sg(rng)};
  }
};

}  // namespace wlmpc::test
