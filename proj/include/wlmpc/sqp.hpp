#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "wlmpc/qp.hpp"

namespace wlmpc {

/// Smooth NLP:  min f(z)  s.t.  c_eq(z) = 0,  c_in(z) <= 0,  lb <= z <= ub.
/// The objective is given either as value+gradient or as a least-squares
/// residual vector r with f = |r|^2 (enables the Gauss-Newton Hessian).
struct NlpProblem {
  int n = 0;

  std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)> objective;
  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&, Eigen::MatrixXd&)>
      residuals;  ///< fills r (m_res) and its Jacobian (m_res x n)
  int m_res = 0;

  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&, Eigen::MatrixXd&)>
      eq_constraints;
  int m_eq = 0;
  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&, Eigen::MatrixXd&)>
      ineq_constraints;
  int m_ineq = 0;

  Eigen::VectorXd z0;
  Eigen::VectorXd lb, ub;  ///< per-variable box; empty = unbounded
};

enum class SqpStatus { Converged, MaxIter, QpFailed };

inline const char* to_string(SqpStatus s) {
  switch (s) {
    case SqpStatus::Converged: return "converged";
    case SqpStatus::MaxIter: return "max_iter";
    default: return "qp_failed";
  }
}

enum class HessianMode { GaussNewton, DampedBfgs };

struct SqpIterationInfo {
  int iteration = 0;
  double merit_before = 0.0;
  double merit_after = 0.0;
  double objective = 0.0;
  double violation = 0.0;
  double step_norm = 0.0;  ///< accepted step, inf-norm
  double alpha = 0.0;
};

struct SqpConfig {
  double tol_feas = 1e-5;
  double tol_step = 1e-6;
  int max_iter = 200;
  HessianMode hessian = HessianMode::GaussNewton;
  double elastic_penalty = 1e6;
  bool check_derivatives = false;  ///< finite-difference gradient validation at z0
  QpConfig qp{1e-8, 4000};
  std::function<void(const SqpIterationInfo&)> on_iteration;
};

struct NlpSolution {
  Eigen::VectorXd z;
  double objective = 0.0;
  SqpStatus status = SqpStatus::MaxIter;
  double constraint_violation = 0.0;  ///< inf-norm at the returned point
  int iterations = 0;                 ///< accepted steps
  Eigen::VectorXd eq_mult, ineq_mult;
};

/// SQP with Gauss-Newton or damped-BFGS Hessians, an l1 merit line search and
/// an elastic (slack-penalized) retry for infeasible subproblems.
class SqpSolver {
 public:
  NlpSolution solve(const NlpProblem& prob, const SqpConfig& cfg = {}) {
    validate(prob);
    if (cfg.check_derivatives) check_gradient(prob);

    const int n = prob.n;
    const bool gauss_newton =
        cfg.hessian == HessianMode::GaussNewton && static_cast<bool>(prob.residuals);

    Eval cur;
    Eigen::VectorXd z = prob.z0;
    clamp_to_box(prob, z);
    evaluate(prob, z, cur);

    Eigen::MatrixXd bfgs = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd prev_step;
    Eigen::VectorXd eq_mult = Eigen::VectorXd::Zero(prob.m_eq);
    Eigen::VectorXd in_mult = Eigen::VectorXd::Zero(prob.m_ineq);
    double merit_mu = 10.0;
    int steps = 0;

    NlpSolution sol;
    sol.status = SqpStatus::MaxIter;

    for (int it = 0; it < cfg.max_iter; ++it) {
      Eigen::MatrixXd hess;
      if (gauss_newton) {
        hess = 2.0 * cur.jr.transpose() * cur.jr;
      } else {
        hess = bfgs;
      }

      const QpProblem qp = build_subproblem(prob, z, hess, cur);
      QpSolution qs = (prev_step.size() == n) ? qp_solver_.solve(qp, prev_step, cfg.qp)
                                              : qp_solver_.solve(qp, cfg.qp);
      if (qs.status == QpStatus::Infeasible) {
        qs = solve_elastic(qp, prob.m_ineq, cfg);
        if (qs.status == QpStatus::Infeasible) {
          sol.status = SqpStatus::QpFailed;
          break;
        }
      }
      const Eigen::VectorXd d = qs.z.head(n);
      prev_step = d;
      if (prob.m_eq > 0 && qs.eq_mult.size() >= prob.m_eq)
        eq_mult = qs.eq_mult.head(prob.m_eq);
      if (prob.m_ineq > 0 && qs.in_mult.size() >= prob.m_ineq)
        in_mult = qs.in_mult.head(prob.m_ineq);

      // QP stationarity gives the NLP KKT stationarity residual for free:
      // grad + J'multipliers = -H d at the subproblem optimum.
      const double viol_inf = violation_inf(cur);
      const double step_inf = n > 0 ? d.cwiseAbs().maxCoeff() : 0.0;
      const double stat_inf = (hess * d).cwiseAbs().maxCoeff();
      if (std::min(step_inf, stat_inf) <= cfg.tol_step && viol_inf <= cfg.tol_feas) {
        sol.status = SqpStatus::Converged;
        break;
      }

      // Exact-penalty weight kept above the multiplier estimates.
      double mult_inf = 0.0;
      if (eq_mult.size() > 0) mult_inf = std::max(mult_inf, eq_mult.cwiseAbs().maxCoeff());
      if (in_mult.size() > 0) mult_inf = std::max(mult_inf, in_mult.cwiseAbs().maxCoeff());
      merit_mu = std::max(merit_mu, 1.5 * mult_inf + 1.0);

      const double phi0 = cur.f + merit_mu * violation_l1(cur);
      const double descent = cur.grad.dot(d) - merit_mu * violation_l1(cur);

      double alpha = 1.0;
      bool accepted = false;
      Eval trial;
      Eigen::VectorXd z_try;
      double phi_try = 0.0;
      for (int ls = 0; ls < 40; ++ls) {
        z_try = z + alpha * d;
        clamp_to_box(prob, z_try);
        evaluate(prob, z_try, trial);
        phi_try = trial.f + merit_mu * violation_l1(trial);
        const double noise = 4.0 * std::numeric_limits<double>::epsilon() *
                             (1.0 + std::abs(phi0));
        if (phi_try <= phi0 + 1e-4 * alpha * std::min(descent, 0.0) + noise) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) break;  // stalled line search -> MaxIter with best iterate

      if (!gauss_newton)
        update_bfgs(bfgs, z_try - z, cur, trial, eq_mult, in_mult);

      z = z_try;
      cur = trial;
      ++steps;

      if (cfg.on_iteration) {
        SqpIterationInfo info;
        info.iteration = steps;
        info.merit_before = phi0;
        info.merit_after = phi_try;
        info.objective = cur.f;
        info.violation = violation_inf(cur);
        info.step_norm = alpha * step_inf;
        info.alpha = alpha;
        cfg.on_iteration(info);
      }
    }

    sol.z = z;
    sol.objective = cur.f;
    sol.constraint_violation = violation_inf(cur);
    sol.iterations = steps;
    sol.eq_mult = eq_mult;
    sol.ineq_mult = in_mult;
    if (sol.status == SqpStatus::Converged && sol.constraint_violation > cfg.tol_feas)
      sol.status = SqpStatus::MaxIter;
    return sol;
  }

 private:
  struct Eval {
    double f = 0.0;
    Eigen::VectorXd grad;
    Eigen::VectorXd r;
    Eigen::MatrixXd jr;
    Eigen::VectorXd ceq;
    Eigen::MatrixXd jeq;
    Eigen::VectorXd cin;
    Eigen::MatrixXd jin;
  };

  QpSolver qp_solver_;

  static void validate(const NlpProblem& prob) {
    if (prob.n <= 0) throw std::invalid_argument("sqp: n must be positive");
    if (prob.z0.size() != prob.n) throw std::invalid_argument("sqp: z0 size");
    if (!prob.objective && !prob.residuals)
      throw std::invalid_argument("sqp: objective or residuals required");
    if (!prob.z0.allFinite()) throw std::invalid_argument("sqp: z0 not finite");
    if (prob.m_eq > 0 && !prob.eq_constraints)
      throw std::invalid_argument("sqp: eq_constraints missing");
    if (prob.m_ineq > 0 && !prob.ineq_constraints)
      throw std::invalid_argument("sqp: ineq_constraints missing");
  }

  static void clamp_to_box(const NlpProblem& prob, Eigen::VectorXd& z) {
    if (prob.lb.size() == prob.n) z = z.cwiseMax(prob.lb);
    if (prob.ub.size() == prob.n) z = z.cwiseMin(prob.ub);
  }

  static void evaluate(const NlpProblem& prob, const Eigen::VectorXd& z, Eval& e) {
    if (prob.residuals) {
      prob.residuals(z, e.r, e.jr);
      e.f = e.r.squaredNorm();
      e.grad = 2.0 * e.jr.transpose() * e.r;
    } else {
      e.grad.resize(prob.n);
      e.f = prob.objective(z, e.grad);
    }
    if (prob.m_eq > 0) {
      prob.eq_constraints(z, e.ceq, e.jeq);
    } else {
      e.ceq.resize(0);
      e.jeq.resize(0, prob.n);
    }
    if (prob.m_ineq > 0) {
      prob.ineq_constraints(z, e.cin, e.jin);
    } else {
      e.cin.resize(0);
      e.jin.resize(0, prob.n);
    }
  }

  static double violation_l1(const Eval& e) {
    double v = 0.0;
    for (int i = 0; i < e.ceq.size(); ++i) v += std::abs(e.ceq(i));
    for (int i = 0; i < e.cin.size(); ++i) v += std::max(0.0, e.cin(i));
    return v;
  }

  static double violation_inf(const Eval& e) {
    double v = 0.0;
    for (int i = 0; i < e.ceq.size(); ++i) v = std::max(v, std::abs(e.ceq(i)));
    for (int i = 0; i < e.cin.size(); ++i) v = std::max(v, e.cin(i));
    return v;
  }

  // QP subproblem in the step d: rows [linearized general inequalities; box].
  static QpProblem build_subproblem(const NlpProblem& prob, const Eigen::VectorXd& z,
                                    const Eigen::MatrixXd& hess, const Eval& e) {
    const int n = prob.n;
    QpProblem qp;
    qp.h = hess;
    qp.g = e.grad;
    if (prob.m_eq > 0) {
      qp.a_eq = e.jeq;
      qp.b_eq = -e.ceq;
    }
    std::vector<int> bounded;
    for (int j = 0; j < n; ++j) {
      const bool has_lb = prob.lb.size() == n && std::isfinite(prob.lb(j));
      const bool has_ub = prob.ub.size() == n && std::isfinite(prob.ub(j));
      if (has_lb || has_ub) bounded.push_back(j);
    }
    const int mi = prob.m_ineq + static_cast<int>(bounded.size());
    if (mi > 0) {
      qp.c_in = Eigen::MatrixXd::Zero(mi, n);
      qp.lower = Eigen::VectorXd::Constant(mi, -kInf);
      qp.upper = Eigen::VectorXd::Constant(mi, kInf);
      if (prob.m_ineq > 0) {
        qp.c_in.topRows(prob.m_ineq) = e.jin;
        qp.upper.head(prob.m_ineq) = -e.cin;
      }
      for (size_t k = 0; k < bounded.size(); ++k) {
        const int row = prob.m_ineq + static_cast<int>(k);
        const int j = bounded[k];
        qp.c_in(row, j) = 1.0;
        if (prob.lb.size() == n && std::isfinite(prob.lb(j)))
          qp.lower(row) = prob.lb(j) - z(j);
        if (prob.ub.size() == n && std::isfinite(prob.ub(j)))
          qp.upper(row) = prob.ub(j) - z(j);
      }
    }
    return qp;
  }

  // Elastic relaxation: equalities and the first n_general inequality rows get
  // quadratically penalized slacks; box rows stay hard. Always feasible at
  // d = 0 because the current iterate satisfies its own box.
  QpSolution solve_elastic(const QpProblem& qp, int n_general, const SqpConfig& cfg) {
    const int n = qp.n();
    const int me = qp.m_eq();
    const int mi = qp.m_in();
    const int ns = me + n_general;
    if (ns == 0) return qp_solver_.solve(qp, cfg.qp);  // nothing to relax

    QpProblem ext;
    const int n2 = n + ns;
    ext.h = Eigen::MatrixXd::Zero(n2, n2);
    ext.h.topLeftCorner(n, n) = qp.h;
    ext.h.bottomRightCorner(ns, ns) =
        2.0 * cfg.elastic_penalty * Eigen::MatrixXd::Identity(ns, ns);
    ext.g = Eigen::VectorXd::Zero(n2);
    ext.g.head(n) = qp.g;

    if (me > 0) {
      ext.a_eq = Eigen::MatrixXd::Zero(me, n2);
      ext.a_eq.leftCols(n) = qp.a_eq;
      ext.a_eq.block(0, n, me, me) = -Eigen::MatrixXd::Identity(me, me);
      ext.b_eq = qp.b_eq;  // a d - s = b, slack free and penalized
    }

    // Rows: relaxed general rows (widened by s), untouched remaining rows,
    // slack nonnegativity for the general-row slacks.
    const int rows = mi + n_general;
    ext.c_in = Eigen::MatrixXd::Zero(rows, n2);
    ext.lower = Eigen::VectorXd::Constant(rows, -kInf);
    ext.upper = Eigen::VectorXd::Constant(rows, kInf);
    for (int i = 0; i < mi; ++i) {
      ext.c_in.block(i, 0, 1, n) = qp.c_in.row(i);
      ext.lower(i) = qp.lower(i);
      ext.upper(i) = qp.upper(i);
      if (i < n_general) {
        // lower - s <= c d <= upper + s  via the signed slack column
        ext.c_in(i, n + me + i) = -1.0;
        // With the slack column at -1, c d - s <= upper covers the upper side;
        // the lower side is kept on a second row below when finite.
      }
    }
    // Second rows for finite lower sides of relaxed general rows.
    std::vector<int> lower_rows;
    for (int i = 0; i < n_general; ++i)
      if (std::isfinite(qp.lower(i))) lower_rows.push_back(i);
    const int extra = static_cast<int>(lower_rows.size());
    Eigen::MatrixXd c_all(rows + extra, n2);
    Eigen::VectorXd lo_all(rows + extra), up_all(rows + extra);
    c_all.topRows(rows) = ext.c_in;
    lo_all.head(rows) = ext.lower;
    up_all.head(rows) = ext.upper;
    for (int k = 0; k < extra; ++k) {
      const int i = lower_rows[k];
      c_all.row(rows + k).setZero();
      c_all.block(rows + k, 0, 1, n) = qp.c_in.row(i);
      c_all(rows + k, n + me + i) = 1.0;  // c d + s >= lower
      lo_all(rows + k) = qp.lower(i);
      up_all(rows + k) = kInf;
      // the original relaxed row keeps only its upper side
      lo_all(i) = -kInf;
    }
    // Slack nonnegativity for general-row slacks.
    for (int i = 0; i < n_general; ++i) {
      c_all(mi + i, n + me + i) = 1.0;
      lo_all(mi + i) = 0.0;
      up_all(mi + i) = kInf;
    }
    ext.c_in = c_all;
    ext.lower = lo_all;
    ext.upper = up_all;
    return qp_solver_.solve(ext, cfg.qp);
  }

  // Damped BFGS on the Lagrangian gradient (Powell damping).
  static void update_bfgs(Eigen::MatrixXd& b, const Eigen::VectorXd& s, const Eval& old_e,
                          const Eval& new_e, const Eigen::VectorXd& eq_mult,
                          const Eigen::VectorXd& in_mult) {
    Eigen::VectorXd gl_new = new_e.grad;
    Eigen::VectorXd gl_old = old_e.grad;
    if (eq_mult.size() > 0) {
      gl_new += new_e.jeq.transpose() * eq_mult;
      gl_old += old_e.jeq.transpose() * eq_mult;
    }
    if (in_mult.size() > 0) {
      gl_new += new_e.jin.transpose() * in_mult;
      gl_old += old_e.jin.transpose() * in_mult;
    }
    if (s.squaredNorm() < 1e-16) return;
    Eigen::VectorXd yv = gl_new - gl_old;
    const Eigen::VectorXd bs = b * s;
    const double sbs = s.dot(bs);
    double sy = s.dot(yv);
    if (sy < 0.2 * sbs) {
      const double theta = 0.8 * sbs / (sbs - sy);
      yv = theta * yv + (1.0 - theta) * bs;
      sy = s.dot(yv);
    }
    if (sy <= 1e-14 || sbs <= 1e-14) return;
    b += yv * yv.transpose() / sy - bs * bs.transpose() / sbs;
  }

  static void check_gradient(const NlpProblem& prob) {
    const double h = 1e-6;
    const Eigen::VectorXd z = prob.z0;
    auto fval = [&](const Eigen::VectorXd& zz) {
      if (prob.residuals) {
        Eigen::VectorXd r;
        Eigen::MatrixXd jr;
        prob.residuals(zz, r, jr);
        return r.squaredNorm();
      }
      Eigen::VectorXd g(prob.n);
      return prob.objective(zz, g);
    };
    Eval e;
    evaluate(prob, z, e);
    for (int j = 0; j < prob.n; ++j) {
      Eigen::VectorXd zp = z, zm = z;
      zp(j) += h;
      zm(j) -= h;
      const double fd = (fval(zp) - fval(zm)) / (2.0 * h);
      if (std::abs(fd - e.grad(j)) > 1e-4 * (1.0 + std::abs(fd)))
        throw std::logic_error("sqp: objective gradient check failed at index " +
                               std::to_string(j));
    }
  }
};

}  // namespace wlmpc
