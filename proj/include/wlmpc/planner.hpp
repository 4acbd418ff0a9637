#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <utility>
#include <vector>

#include "wlmpc/scenario.hpp"
#include "wlmpc/sqp.hpp"
#include "wlmpc/trajectory.hpp"

namespace wlmpc {

struct PlannerOptions {
  Mat2 r = Mat2::Identity();                         ///< input weight
  Mat2 r_d = (Mat2() << 8.0, 0.0, 0.0, 24.0).finished();  ///< rate weight, 8*diag(1,3)
  double terminal_tol = 1e-3;     ///< per-component terminal window [m]/[rad]
  double obstacle_margin = 1e-3;  ///< extra clearance planned on top of d_safe [m]
  int max_iter = 150;
  double tol_feas = 1e-10;
  double tol_step = 1e-7;
};

/// Thrown when the planning NLP cannot be solved to feasibility; carries the
/// best iterate for diagnosis.
class PlannerInfeasible : public std::runtime_error {
 public:
  PlannerInfeasible(const std::string& msg, NlpSolution nlp, Trajectory best)
      : std::runtime_error(msg), nlp_solution(std::move(nlp)), best_iterate(std::move(best)) {}

  NlpSolution nlp_solution;
  Trajectory best_iterate;
};

struct TrajectoryAudit {
  double max_abs_gamma = 0.0;
  double min_clearance = std::numeric_limits<double>::infinity();  ///< [m]
  double terminal_pos_err = 0.0;
  double terminal_theta_err = 0.0;
  double terminal_gamma_err = 0.0;
  double max_defect = 0.0;  ///< open-loop replay consistency, inf-norm per step
  double max_abs_v = 0.0;
  double max_abs_gamma_rate = 0.0;
  int direction_switches = 0;
};

inline TrajectoryAudit audit_trajectory(const Trajectory& traj, const Scenario& sc,
                                        const VehicleState& xf) {
  TrajectoryAudit a;
  const int n = traj.size();
  for (int i = 0; i < n; ++i) {
    const VehicleState& s = traj.state(i);
    a.max_abs_gamma = std::max(a.max_abs_gamma, std::abs(s.gamma));
    a.max_abs_v = std::max(a.max_abs_v, std::abs(traj.input(i).v));
    a.max_abs_gamma_rate =
        std::max(a.max_abs_gamma_rate, std::abs(traj.input(i).gamma_rate));
    if (!sc.obstacles.empty())
      a.min_clearance = std::min(
          a.min_clearance,
          std::sqrt(obstacle_clearance_sq(s, sc.obstacles, sc.params)));
    if (i + 1 < n) {
      const VehicleState pred = step_euler(s, traj.input(i), sc.params, traj.ts);
      a.max_defect = std::max(
          a.max_defect, (traj.state(i + 1).vec() - pred.vec()).cwiseAbs().maxCoeff());
    }
  }
  if (n > 0) {
    const VehicleState& last = traj.state(n - 1);
    a.terminal_pos_err = std::hypot(last.x - xf.x, last.y - xf.y);
    a.terminal_theta_err = std::abs(last.theta - xf.theta);
    a.terminal_gamma_err = std::abs(last.gamma - xf.gamma);
  }
  a.direction_switches = static_cast<int>(traj.direction_switches.size());
  return a;
}

namespace detail {

// Multiple-shooting layout: z = [x(0..N); u(0..N-1)].
struct PlanLayout {
  int n_steps;
  int nx;
  int n;
  int xi(int i) const { return 4 * i; }
  int ui(int i) const { return nx + 2 * i; }
  explicit PlanLayout(int n_steps_)
      : n_steps(n_steps_), nx(4 * (n_steps_ + 1)), n(nx + 2 * n_steps_) {}
};

}  // namespace detail

/// Plans one leg by multiple-shooting SQP on the kinematic model: input and
/// input-rate costs, Euler dynamics defects, articulation and input boxes,
/// pinned boundary states/inputs, a tight terminal window, and per-point
/// obstacle clearance rows. Returned states are restored by an exact open-loop
/// replay of the optimized inputs.
inline Trajectory plan_segment(const Scenario& sc, const VehicleState& x0_any,
                               const VehicleState& xf_any, const ControlInput& u0,
                               const ControlInput& uf, const PlannerOptions& opt = {}) {
  sc.validate();
  const VehicleState x0 = to_frame(x0_any, Frame::Rear, sc.params);
  const VehicleState xf = to_frame(xf_any, Frame::Rear, sc.params);
  const int n_steps = sc.n_plan;
  const detail::PlanLayout lay(n_steps);
  const double ts = sc.ts;
  const VehicleParams& vp = sc.params;
  const int n_obs = static_cast<int>(sc.obstacles.size());

  NlpProblem nlp;
  nlp.n = lay.n;

  // Cost residuals: [R u(i); R_d (u(i) - u(i-1))] with u(-1) := u0.
  const Mat2 rw = opt.r;
  const Mat2 rdw = opt.r_d;
  const Vec2 u0v = u0.vec();
  nlp.m_res = 4 * n_steps;
  nlp.residuals = [lay, n_steps, rw, rdw, u0v](const Eigen::VectorXd& z,
                                               Eigen::VectorXd& r, Eigen::MatrixXd& jr) {
    r.resize(4 * n_steps);
    jr.setZero(4 * n_steps, lay.n);
    for (int i = 0; i < n_steps; ++i) {
      const Vec2 u = z.segment<2>(lay.ui(i));
      const Vec2 up = (i > 0) ? Vec2(z.segment<2>(lay.ui(i - 1))) : u0v;
      r.segment<2>(4 * i) = rw * u;
      r.segment<2>(4 * i + 2) = rdw * (u - up);
      jr.block<2, 2>(4 * i, lay.ui(i)) = rw;
      jr.block<2, 2>(4 * i + 2, lay.ui(i)) = rdw;
      if (i > 0) jr.block<2, 2>(4 * i + 2, lay.ui(i - 1)) = -rdw;
    }
  };

  // Dynamics defects x(i+1) - x(i) - ts f(x(i), u(i)) with analytic Jacobians.
  nlp.m_eq = 4 * n_steps;
  nlp.eq_constraints = [lay, n_steps, ts, vp](const Eigen::VectorXd& z, Eigen::VectorXd& c,
                                              Eigen::MatrixXd& j) {
    c.resize(4 * n_steps);
    j.setZero(4 * n_steps, lay.n);
    for (int i = 0; i < n_steps; ++i) {
      const VehicleState s =
          VehicleState::from_vec(z.segment<4>(lay.xi(i)), Frame::Rear);
      const ControlInput u{z(lay.ui(i)), z(lay.ui(i) + 1)};
      c.segment<4>(4 * i) = z.segment<4>(lay.xi(i + 1)) - z.segment<4>(lay.xi(i)) -
                            ts * dynamics_continuous(s, u, vp).vec();
      j.block<4, 4>(4 * i, lay.xi(i)) =
          -(Mat4::Identity() + ts * jacobian_state(s, u, vp));
      j.block<4, 4>(4 * i, lay.xi(i + 1)) = Mat4::Identity();
      j.block<4, 2>(4 * i, lay.ui(i)) = -ts * jacobian_control(s, u, vp);
    }
  };

  // Obstacle rows, one per (step, obstacle, vehicle point), finite-difference
  // Jacobians over the step's state.
  if (n_obs > 0) {
    const double bound = (sc.d_safe + opt.obstacle_margin) * (sc.d_safe + opt.obstacle_margin);
    const auto obstacles = sc.obstacles;
    nlp.m_ineq = 3 * n_obs * (n_steps + 1);
    nlp.ineq_constraints = [lay, n_steps, n_obs, bound, obstacles, vp](
                               const Eigen::VectorXd& z, Eigen::VectorXd& c,
                               Eigen::MatrixXd& j) {
      const double h = 1e-6;
      c.resize(3 * n_obs * (n_steps + 1));
      j.setZero(c.size(), lay.n);
      int row = 0;
      for (int i = 0; i <= n_steps; ++i) {
        const Vec4 xs = z.segment<4>(lay.xi(i));
        const auto pts =
            collision_points(VehicleState::from_vec(xs, Frame::Rear), vp);
        // Perturbed point sets for the four state components.
        std::array<std::array<Vec2, 3>, 4> plus, minus;
        for (int k = 0; k < 4; ++k) {
          Vec4 xp = xs, xm = xs;
          xp(k) += h;
          xm(k) -= h;
          plus[static_cast<size_t>(k)] =
              collision_points(VehicleState::from_vec(xp, Frame::Rear), vp);
          minus[static_cast<size_t>(k)] =
              collision_points(VehicleState::from_vec(xm, Frame::Rear), vp);
        }
        for (int o = 0; o < n_obs; ++o) {
          for (int pt = 0; pt < 3; ++pt) {
            const auto& obs = obstacles[static_cast<size_t>(o)];
            c(row) = bound - point_rect_signed_sq(pts[static_cast<size_t>(pt)], obs);
            for (int k = 0; k < 4; ++k) {
              const double dp =
                  point_rect_signed_sq(plus[static_cast<size_t>(k)][static_cast<size_t>(pt)], obs);
              const double dm =
                  point_rect_signed_sq(minus[static_cast<size_t>(k)][static_cast<size_t>(pt)], obs);
              j(row, lay.xi(i) + k) = -(dp - dm) / (2.0 * h);
            }
            ++row;
          }
        }
      }
    };
  }

  // Variable boxes: articulation and input limits, pinned boundary conditions,
  // terminal window kept slightly inside the audit tolerance so the exact
  // replay restoration cannot push it out.
  nlp.lb = Eigen::VectorXd::Constant(lay.n, -kInf);
  nlp.ub = Eigen::VectorXd::Constant(lay.n, kInf);
  for (int i = 0; i <= n_steps; ++i) {
    nlp.lb(lay.xi(i) + 3) = -vp.gamma_max;
    nlp.ub(lay.xi(i) + 3) = vp.gamma_max;
  }
  for (int i = 0; i < n_steps; ++i) {
    nlp.lb(lay.ui(i)) = -vp.v_max;
    nlp.ub(lay.ui(i)) = vp.v_max;
    nlp.lb(lay.ui(i) + 1) = -vp.gamma_rate_max;
    nlp.ub(lay.ui(i) + 1) = vp.gamma_rate_max;
  }
  nlp.lb.segment<4>(lay.xi(0)) = x0.vec();
  nlp.ub.segment<4>(lay.xi(0)) = x0.vec();
  // Position components tightened by sqrt(2) so the Euclidean position error
  // stays within the tolerance even with both components at their corner.
  const double tol_ang = 0.95 * opt.terminal_tol;
  const double tol_pos = tol_ang / std::sqrt(2.0);
  for (int k = 0; k < 4; ++k) {
    const double tol = (k < 2) ? tol_pos : tol_ang;
    nlp.lb(lay.xi(n_steps) + k) = std::max(nlp.lb(lay.xi(n_steps) + k), xf.vec()(k) - tol);
    nlp.ub(lay.xi(n_steps) + k) = std::min(nlp.ub(lay.xi(n_steps) + k), xf.vec()(k) + tol);
  }
  nlp.lb.segment<2>(lay.ui(0)) = u0.vec();
  nlp.ub.segment<2>(lay.ui(0)) = u0.vec();
  nlp.lb.segment<2>(lay.ui(n_steps - 1)) = uf.vec();
  nlp.ub.segment<2>(lay.ui(n_steps - 1)) = uf.vec();

  // Initial guess: linear state interpolation, zero inputs.
  nlp.z0 = Eigen::VectorXd::Zero(lay.n);
  for (int i = 0; i <= n_steps; ++i) {
    const double a = static_cast<double>(i) / n_steps;
    nlp.z0.segment<4>(lay.xi(i)) = (1.0 - a) * x0.vec() + a * xf.vec();
  }

  SqpConfig cfg;
  cfg.max_iter = opt.max_iter;
  cfg.tol_feas = opt.tol_feas;
  cfg.tol_step = opt.tol_step;
  cfg.qp = QpConfig{1e-8, 20000};

  SqpSolver solver;
  const NlpSolution sol = solver.solve(nlp, cfg);

  // Restore states by exact open-loop replay of the optimized inputs.
  auto rollout = [&](const Eigen::VectorXd& z) {
    Trajectory traj;
    traj.ts = ts;
    VehicleState s = x0;
    for (int i = 0; i < n_steps; ++i) {
      const ControlInput u{z(lay.ui(i)), z(lay.ui(i) + 1)};
      traj.steps.push_back({s, u});
      s = step_euler(s, u, vp, ts);
    }
    traj.steps.push_back({s, uf});
    traj.finalize(vp);
    return traj;
  };

  if (sol.status != SqpStatus::Converged) {
    throw PlannerInfeasible(
        "planner: leg infeasible (" + std::string(to_string(sol.status)) +
            ", violation " + std::to_string(sol.constraint_violation) + ")",
        sol, rollout(sol.z));
  }
  return rollout(sol.z);
}

/// Plans the full Y-cycle: pile -> truck, then truck -> pile, both legs at
/// rest at their endpoints. The turning points fall out of the optimization.
inline std::pair<Trajectory, Trajectory> plan_cycle(const Scenario& sc,
                                                    const PlannerOptions& opt = {}) {
  const ControlInput rest{0.0, 0.0};
  Trajectory leg1 = plan_segment(sc, sc.loading_pose, sc.unloading_pose, rest, rest, opt);
  Trajectory leg2 = plan_segment(sc, sc.unloading_pose, sc.loading_pose, rest, rest, opt);
  return {std::move(leg1), std::move(leg2)};
}

}  // namespace wlmpc
