#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <vector>

namespace wlmpc {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Dense convex QP in standard form:
///   min 0.5 z'Hz + g'z
///   s.t. a_eq z = b_eq,  lower <= c_in z <= upper
/// H symmetric positive semidefinite and positive definite on the nullspace of
/// a_eq. One-sided rows use +-inf in lower/upper.
struct QpProblem {
  Eigen::MatrixXd h;
  Eigen::VectorXd g;
  Eigen::MatrixXd a_eq;
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd c_in;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  int n() const { return static_cast<int>(g.size()); }
  int m_eq() const { return static_cast<int>(b_eq.size()); }
  int m_in() const { return static_cast<int>(lower.size()); }

  void validate() const {
    if (h.rows() != n() || h.cols() != n()) throw std::invalid_argument("qp: h size");
    if (m_eq() > 0 && (a_eq.rows() != m_eq() || a_eq.cols() != n()))
      throw std::invalid_argument("qp: a_eq size");
    if (m_in() > 0 && (c_in.rows() != m_in() || c_in.cols() != n()))
      throw std::invalid_argument("qp: c_in size");
    if (upper.size() != lower.size()) throw std::invalid_argument("qp: bound sizes");
    for (int i = 0; i < m_in(); ++i)
      if (!(lower(i) <= upper(i))) throw std::invalid_argument("qp: lower > upper");
  }
};

enum class QpStatus { Optimal, MaxIter, Infeasible };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::MaxIter: return "max_iter";
    default: return "infeasible";
  }
}

struct QpSolution {
  Eigen::VectorXd z;
  double objective = 0.0;
  QpStatus status = QpStatus::MaxIter;
  double kkt_residual = kInf;
  int iterations = 0;
  Eigen::VectorXd eq_mult;  ///< multipliers of a_eq rows (free sign)
  Eigen::VectorXd in_mult;  ///< signed row multipliers: >0 at upper, <0 at lower
};

struct QpConfig {
  double tol_kkt = 1e-6;
  int max_iter = 4000;
};

/// Independent KKT residual (inf-norm over stationarity, primal feasibility and
/// complementarity). Used both by the solver for its exit status and by tests
/// as the certification check.
inline double qp_kkt_residual(const QpProblem& p, const Eigen::VectorXd& z,
                              const Eigen::VectorXd& eq_mult,
                              const Eigen::VectorXd& in_mult) {
  Eigen::VectorXd stat = p.h.selfadjointView<Eigen::Lower>() * z + p.g;
  if (p.m_eq() > 0) stat += p.a_eq.transpose() * eq_mult;
  if (p.m_in() > 0) stat += p.c_in.transpose() * in_mult;
  double res = stat.cwiseAbs().maxCoeff();

  if (p.m_eq() > 0)
    res = std::max(res, (p.a_eq * z - p.b_eq).cwiseAbs().maxCoeff());
  if (p.m_in() > 0) {
    const Eigen::VectorXd cz = p.c_in * z;
    for (int i = 0; i < p.m_in(); ++i) {
      if (std::isfinite(p.lower(i))) res = std::max(res, p.lower(i) - cz(i));
      if (std::isfinite(p.upper(i))) res = std::max(res, cz(i) - p.upper(i));
      // Complementarity: a nonzero multiplier must sit on its claimed side.
      if (in_mult(i) > 0.0) res = std::max(res, in_mult(i) * std::abs(cz(i) - p.upper(i)));
      if (in_mult(i) < 0.0) res = std::max(res, -in_mult(i) * std::abs(cz(i) - p.lower(i)));
    }
  }
  return res;
}

/// Dense convex QP solver: Goldfarb-Idnani dual active set on the inequality
/// rows, with equality constraints eliminated up front through a QR nullspace
/// basis. Deterministic; an optional warm-start point biases the order in
/// which violated constraints enter the active set.
class QpSolver {
 public:
  QpSolution solve(const QpProblem& prob, const QpConfig& cfg = {}) {
    return solve_impl(prob, nullptr, cfg);
  }

  QpSolution solve(const QpProblem& prob, const Eigen::VectorXd& z_warm,
                   const QpConfig& cfg = {}) {
    return solve_impl(prob, &z_warm, cfg);
  }

 private:
  using MatrixXd = Eigen::MatrixXd;
  using VectorXd = Eigen::VectorXd;

  // One-sided row derived from a two-sided inequality: sign * c.row(row) * y >= rhs.
  struct SideRow {
    int row;
    double sign;
    double rhs;
  };

  struct GiOutcome {
    VectorXd y;
    QpStatus status = QpStatus::MaxIter;
    int iterations = 0;
    std::vector<SideRow> rows;
    std::vector<double> row_mult;  // per entry of rows, >= 0
  };

  QpSolution solve_impl(const QpProblem& input, const Eigen::VectorXd* z_warm,
                        const QpConfig& cfg) {
    input.validate();
    const int n = input.n();

    QpProblem prob = input;
    symmetrize(prob.h);

    // Tight two-sided rows behave as equalities; fold them in so the dual
    // active set never sees an anti-parallel row pair.
    std::vector<int> tight;
    for (int i = 0; i < prob.m_in(); ++i)
      if (prob.upper(i) - prob.lower(i) <= 1e-12) tight.push_back(i);
    std::vector<int> in_map;  // folded inequality row -> original row
    if (!tight.empty()) {
      fold_tight_rows(prob, tight, in_map);
    } else {
      in_map.resize(prob.m_in());
      for (int i = 0; i < prob.m_in(); ++i) in_map[i] = i;
    }

    QpSolution sol;
    sol.eq_mult = VectorXd::Zero(input.m_eq());
    sol.in_mult = VectorXd::Zero(input.m_in());
    sol.z = VectorXd::Zero(n);

    GiOutcome out;
    VectorXd z_p;
    MatrixXd z_basis;
    bool reduced = false;

    if (prob.m_eq() == 0) {
      out = run_gi(prob.h, prob.g, prob.c_in, prob.lower, prob.upper, z_warm, cfg);
    } else {
      reduced = true;
      // Nullspace elimination: z = z_p + Z y with a_eq z_p = b_eq, a_eq Z = 0.
      Eigen::ColPivHouseholderQR<MatrixXd> qr(prob.a_eq.transpose());
      const int me = prob.m_eq();
      const int rank = static_cast<int>(qr.rank());
      const MatrixXd q_full = qr.householderQ() * MatrixXd::Identity(n, n);
      const MatrixXd r_full = MatrixXd(qr.matrixQR()
                                           .topRows(std::min(n, me))
                                           .triangularView<Eigen::Upper>());
      const VectorXd pb = qr.colsPermutation().transpose() * prob.b_eq;

      const VectorXd w1 = r_full.topLeftCorner(rank, rank)
                              .transpose()
                              .triangularView<Eigen::Lower>()
                              .solve(pb.head(rank));
      if (rank < me) {
        const VectorXd tail = r_full.topRightCorner(rank, me - rank).transpose() * w1;
        if ((tail - pb.tail(me - rank)).cwiseAbs().maxCoeff() >
            1e-8 * (1.0 + prob.b_eq.cwiseAbs().maxCoeff())) {
          sol.status = QpStatus::Infeasible;  // inconsistent equalities
          return sol;
        }
      }
      z_p = q_full.leftCols(rank) * w1;
      z_basis = q_full.rightCols(n - rank);

      if (n - rank == 0) {
        out.y = VectorXd::Zero(0);
        out.status = QpStatus::Optimal;
      } else {
        const MatrixXd h_r = z_basis.transpose() * prob.h * z_basis;
        const VectorXd g_r = z_basis.transpose() * (prob.h * z_p + prob.g);
        MatrixXd c_r(prob.m_in(), n - rank);
        VectorXd lo_r = prob.lower, up_r = prob.upper;
        if (prob.m_in() > 0) {
          c_r = prob.c_in * z_basis;
          const VectorXd shift = prob.c_in * z_p;
          lo_r -= shift;
          up_r -= shift;
        }
        VectorXd y_warm;
        const VectorXd* warm_ptr = nullptr;
        if (z_warm != nullptr && z_warm->size() == n) {
          y_warm = z_basis.transpose() * (*z_warm - z_p);
          warm_ptr = &y_warm;
        }
        out = run_gi(h_r, g_r, c_r, lo_r, up_r, warm_ptr, cfg);
      }
    }

    if (out.status == QpStatus::Infeasible) {
      sol.status = QpStatus::Infeasible;
      sol.iterations = out.iterations;
      return sol;
    }

    sol.z = reduced ? VectorXd(z_p + z_basis * out.y) : out.y;
    sol.iterations = out.iterations;

    // Signed multipliers for the surviving inequality rows.
    for (size_t k = 0; k < out.rows.size(); ++k) {
      if (out.row_mult[k] <= 0.0) continue;
      const SideRow& sr = out.rows[k];
      sol.in_mult(in_map[sr.row]) +=
          (sr.sign > 0 ? -out.row_mult[k] : out.row_mult[k]);
    }

    // Equality multipliers (original ones plus folded tight rows) from the
    // stationarity condition via least squares.
    if (prob.m_eq() > 0) {
      VectorXd resid = input.h.selfadjointView<Eigen::Lower>() * sol.z + input.g;
      if (input.m_in() > 0) resid += input.c_in.transpose() * sol.in_mult;
      const VectorXd lam = prob.a_eq.transpose().colPivHouseholderQr().solve(-resid);
      const int me0 = input.m_eq();
      if (me0 > 0) sol.eq_mult = lam.head(me0);
      for (size_t k = 0; k < tight.size(); ++k)
        sol.in_mult(tight[k]) = lam(me0 + static_cast<int>(k));
    }

    sol.objective = 0.5 * sol.z.dot(input.h.selfadjointView<Eigen::Lower>() * sol.z) +
                    input.g.dot(sol.z);
    sol.kkt_residual = qp_kkt_residual(input, sol.z, sol.eq_mult, sol.in_mult);
    sol.status = (out.status == QpStatus::Optimal && sol.kkt_residual <= cfg.tol_kkt)
                     ? QpStatus::Optimal
                     : QpStatus::MaxIter;
    return sol;
  }

  static void symmetrize(MatrixXd& h) {
    const double asym = (h - h.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10)
      std::cerr << "wlmpc::QpSolver: symmetrizing cost matrix (asymmetry " << asym
                << ")\n";
    h = MatrixXd(0.5 * (h + h.transpose()));
  }

  // Move rows with upper == lower into a_eq.
  static void fold_tight_rows(QpProblem& prob, const std::vector<int>& tight,
                              std::vector<int>& in_map) {
    const int n = prob.n();
    const int me0 = prob.m_eq();
    MatrixXd a_eq(me0 + static_cast<int>(tight.size()), n);
    VectorXd b_eq(a_eq.rows());
    if (me0 > 0) {
      a_eq.topRows(me0) = prob.a_eq;
      b_eq.head(me0) = prob.b_eq;
    }
    for (size_t k = 0; k < tight.size(); ++k) {
      a_eq.row(me0 + static_cast<int>(k)) = prob.c_in.row(tight[k]);
      b_eq(me0 + static_cast<int>(k)) = 0.5 * (prob.lower(tight[k]) + prob.upper(tight[k]));
    }
    std::vector<int> keep;
    for (int i = 0; i < prob.m_in(); ++i)
      if (std::find(tight.begin(), tight.end(), i) == tight.end()) keep.push_back(i);
    MatrixXd c(static_cast<int>(keep.size()), n);
    VectorXd lo(keep.size()), up(keep.size());
    for (size_t k = 0; k < keep.size(); ++k) {
      c.row(static_cast<int>(k)) = prob.c_in.row(keep[k]);
      lo(static_cast<int>(k)) = prob.lower(keep[k]);
      up(static_cast<int>(k)) = prob.upper(keep[k]);
      in_map.push_back(keep[k]);
    }
    prob.a_eq = a_eq;
    prob.b_eq = b_eq;
    prob.c_in = c;
    prob.lower = lo;
    prob.upper = up;
  }

  // Goldfarb-Idnani core on: min 0.5 y'Gy + a'y  s.t.  lo <= C y <= up.
  GiOutcome run_gi(const MatrixXd& g_mat, const VectorXd& a, const MatrixXd& c,
                   const VectorXd& lo, const VectorXd& up, const VectorXd* y_warm,
                   const QpConfig& cfg) {
    const int n = static_cast<int>(a.size());
    const int m = static_cast<int>(lo.size());
    GiOutcome out;

    // One-sided rows (finite sides only).
    out.rows.reserve(2 * static_cast<size_t>(m));
    double rhs_scale = 1.0;
    for (int i = 0; i < m; ++i) {
      if (std::isfinite(lo(i))) {
        out.rows.push_back({i, +1.0, lo(i)});
        rhs_scale = std::max(rhs_scale, std::abs(lo(i)));
      }
      if (std::isfinite(up(i))) {
        out.rows.push_back({i, -1.0, -up(i)});
        rhs_scale = std::max(rhs_scale, std::abs(up(i)));
      }
    }
    const int nrows = static_cast<int>(out.rows.size());
    const double tol_vio = 1e-11 * rhs_scale;

    Eigen::LLT<MatrixXd> llt(g_mat);
    if (llt.info() != Eigen::Success) {
      const double jitter = 1e-9 * (1.0 + g_mat.trace() / std::max(1, n));
      llt.compute(g_mat + jitter * MatrixXd::Identity(n, n));
      if (llt.info() != Eigen::Success)
        throw std::invalid_argument(
            "qp: cost matrix not positive definite on the feasible subspace");
    }

    // J = L^{-T}; columns q..n-1 span the nullspace of the active normals.
    MatrixXd j_mat = llt.matrixU().solve(MatrixXd::Identity(n, n));
    VectorXd y = -llt.solve(a);

    MatrixXd r_mat = MatrixXd::Zero(n, n);
    std::vector<int> active;
    std::vector<double> mult;
    std::vector<char> is_active(nrows, 0);
    int q = 0;
    int iter = 0;

    // Warm-start bias: rows active at the supplied point get first pick.
    std::vector<char> priority(nrows, 0);
    if (y_warm != nullptr && y_warm->size() == n && nrows > 0) {
      const VectorXd cw = c * (*y_warm);
      for (int k = 0; k < nrows; ++k) {
        const double s = out.rows[k].sign * cw(out.rows[k].row) - out.rows[k].rhs;
        if (std::abs(s) <= 1e-8 * rhs_scale) priority[k] = 1;
      }
    }

    VectorXd cz(m), d(n), z(n), r(n), np(n);
    bool done = false;

    while (!done) {
      if (m > 0) cz = c * y;
      int p = -1;
      double worst = -tol_vio;
      for (int pass = 0; pass < 2; ++pass) {
        for (int k = 0; k < nrows; ++k) {
          if (is_active[k]) continue;
          if (pass == 0 && !priority[k]) continue;
          const double s = out.rows[k].sign * cz(out.rows[k].row) - out.rows[k].rhs;
          if (s < worst) {
            worst = s;
            p = k;
          }
        }
        if (p >= 0) break;
      }
      if (p < 0) {
        out.status = QpStatus::Optimal;
        break;
      }

      np = out.rows[p].sign * c.row(out.rows[p].row).transpose();
      double slack = out.rows[p].sign * cz(out.rows[p].row) - out.rows[p].rhs;
      double u_plus = 0.0;

      while (true) {
        if (++iter > cfg.max_iter) {
          out.status = QpStatus::MaxIter;
          done = true;
          break;
        }
        d = j_mat.transpose() * np;
        const double z_norm2 = d.tail(n - q).squaredNorm();
        const bool z_nonzero = z_norm2 > 1e-14 * (1.0 + np.squaredNorm());

        // Dual step length: first active multiplier driven to zero.
        double t1 = kInf;
        int k1 = -1;
        if (q > 0) {
          r.head(q) =
              r_mat.topLeftCorner(q, q).triangularView<Eigen::Upper>().solve(d.head(q));
          for (int i = 0; i < q; ++i) {
            if (r(i) > 1e-14 && mult[i] / r(i) < t1) {
              t1 = mult[i] / r(i);
              k1 = i;
            }
          }
        }
        const double t2 = z_nonzero ? -slack / z_norm2 : kInf;
        const double t = std::min(t1, t2);

        if (!std::isfinite(t)) {
          out.status = QpStatus::Infeasible;  // dual unbounded
          done = true;
          break;
        }

        if (!z_nonzero) {
          // Pure dual step: drop the blocking constraint and retry.
          for (int i = 0; i < q; ++i) mult[i] -= t * r(i);
          u_plus += t;
          drop_constraint(r_mat, j_mat, active, mult, is_active, q, k1);
          continue;
        }

        z = j_mat.rightCols(n - q) * d.tail(n - q);
        y += t * z;
        for (int i = 0; i < q; ++i) mult[i] -= t * r(i);
        u_plus += t;
        slack = out.rows[p].sign * c.row(out.rows[p].row).dot(y) - out.rows[p].rhs;

        if (t2 <= t1) {
          // Full step: row p enters the active set.
          if (!add_constraint(r_mat, j_mat, d, q)) {
            out.status = QpStatus::MaxIter;  // dependent normals: bail out honestly
            done = true;
            break;
          }
          active.push_back(p);
          mult.push_back(u_plus);
          is_active[p] = 1;
          ++q;
          break;
        }
        // Partial step: blocking constraint leaves, keep working on p.
        drop_constraint(r_mat, j_mat, active, mult, is_active, q, k1);
      }
    }

    out.y = y;
    out.iterations = iter;
    out.row_mult.assign(nrows, 0.0);
    for (int i = 0; i < q; ++i) out.row_mult[active[i]] = mult[i];
    return out;
  }

  // Append the (rotated) normal d as column q of R, updating J accordingly.
  static bool add_constraint(MatrixXd& r_mat, MatrixXd& j_mat, VectorXd& d, int q) {
    const int n = static_cast<int>(d.size());
    for (int j = n - 1; j > q; --j) {
      const double cc = d(j - 1), ss = d(j);
      const double h = std::hypot(cc, ss);
      if (h == 0.0) continue;
      const double cth = cc / h, sth = ss / h;
      d(j - 1) = h;
      d(j) = 0.0;
      for (int k = 0; k < n; ++k) {
        const double t1 = j_mat(k, j - 1), t2 = j_mat(k, j);
        j_mat(k, j - 1) = cth * t1 + sth * t2;
        j_mat(k, j) = -sth * t1 + cth * t2;
      }
    }
    if (std::abs(d(q)) < 1e-12 * (1.0 + d.head(q + 1).cwiseAbs().maxCoeff()))
      return false;
    r_mat.col(q).head(q + 1) = d.head(q + 1);
    return true;
  }

  // Remove the active constraint at position idx, restoring the triangular R.
  static void drop_constraint(MatrixXd& r_mat, MatrixXd& j_mat, std::vector<int>& active,
                              std::vector<double>& mult, std::vector<char>& is_active,
                              int& q, int idx) {
    const int n = static_cast<int>(j_mat.rows());
    is_active[active[idx]] = 0;
    for (int i = idx; i < q - 1; ++i) {
      active[i] = active[i + 1];
      mult[i] = mult[i + 1];
      r_mat.col(i) = r_mat.col(i + 1);
    }
    active.pop_back();
    mult.pop_back();
    --q;
    for (int j = idx; j < q; ++j) {
      const double cc = r_mat(j, j), ss = r_mat(j + 1, j);
      const double h = std::hypot(cc, ss);
      if (h == 0.0) continue;
      const double cth = cc / h, sth = ss / h;
      r_mat(j, j) = h;
      r_mat(j + 1, j) = 0.0;
      for (int k = j + 1; k < q; ++k) {
        const double t1 = r_mat(j, k), t2 = r_mat(j + 1, k);
        r_mat(j, k) = cth * t1 + sth * t2;
        r_mat(j + 1, k) = -sth * t1 + cth * t2;
      }
      for (int k = 0; k < n; ++k) {
        const double t1 = j_mat(k, j), t2 = j_mat(k, j + 1);
        j_mat(k, j) = cth * t1 + sth * t2;
        j_mat(k, j + 1) = -sth * t1 + cth * t2;
      }
    }
  }
};

/// One-shot convenience wrapper.
inline QpSolution qp_solve(const QpProblem& prob, const QpConfig& cfg = {}) {
  QpSolver solver;
  return solver.solve(prob, cfg);
}

}  // namespace wlmpc
