#include "ivrt/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ivrt/error.hpp"

namespace ivrt {
namespace {

constexpr double kStepZero = 1e-14;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct FaceStep {
  Vec p;   // full-length step, zero on fixed coordinates
  Vec nu;  // equality multipliers
};

// Equality-constrained Newton step restricted to the free coordinates:
//   [H_FF + rI  E_F'] [p ]   [-g_F]
//   [E_F        0   ] [nu] = [ 0  ]
FaceStep solve_face(const Mat& H, const Vec& g, const Mat& E,
                    const std::vector<int>& free, double ridge) {
  const int f = static_cast<int>(free.size());
  const int m = static_cast<int>(E.rows());
  double hs = 0.0;
  for (int i = 0; i < f; ++i) {
    hs = std::max(hs, std::abs(g(free[i])));
    for (int j = 0; j < f; ++j) hs = std::max(hs, std::abs(H(free[i], free[j])));
  }
  if (hs == 0.0) hs = 1.0;
  Vec row_scale(m);
  for (int r = 0; r < m; ++r) {
    double s = 0.0;
    for (int i = 0; i < f; ++i) s = std::max(s, std::abs(E(r, free[i])));
    row_scale(r) = s > 0.0 ? 1.0 / s : 0.0;
  }
  Mat K = Mat::Zero(f + m, f + m);
  Vec rhs = Vec::Zero(f + m);
  for (int i = 0; i < f; ++i) {
    for (int j = 0; j < f; ++j) K(i, j) = H(free[i], free[j]) / hs;
    K(i, i) += ridge / hs;
    rhs(i) = -g(free[i]) / hs;
    for (int r = 0; r < m; ++r) {
      const double v = E(r, free[i]) * row_scale(r);
      K(f + r, i) = v;
      K(i, f + r) = v;
    }
  }
  Vec sol = K.completeOrthogonalDecomposition().solve(rhs);
  FaceStep out;
  out.p = Vec::Zero(H.rows());
  for (int i = 0; i < f; ++i) out.p(free[i]) = sol(i);
  out.nu = Vec(m);
  for (int r = 0; r < m; ++r) out.nu(r) = sol(f + r) * row_scale(r) * hs;
  return out;
}

double objective(const Mat& Q, const Vec& c, const Vec& x) {
  return x.dot(Q * x) + c.dot(x);
}

struct ActiveSetOutcome {
  Vec x;
  std::vector<char> at_zero;
  int iterations = 0;
  bool converged = false;
};

ActiveSetOutcome active_set(const Mat& H, const Vec& c, const Mat& E, Vec x,
                            double ridge, double tol, int max_iter) {
  const int L = static_cast<int>(x.size());
  ActiveSetOutcome out;
  out.at_zero.assign(L, 0);
  for (int i = 0; i < L; ++i) {
    if (x(i) <= 0.0) {
      x(i) = 0.0;
      out.at_zero[i] = 1;
    }
  }
  for (int iter = 0; iter < max_iter; ++iter) {
    out.iterations = iter + 1;
    const Vec g = H * x + c;
    std::vector<int> free;
    for (int i = 0; i < L; ++i)
      if (!out.at_zero[i]) free.push_back(i);
    // Already stationary on the face: skip the Newton step, which is pure
    // roundoff when the face Hessian is (near) singular.
    const double gscale_face = std::max(1.0, g.lpNorm<Eigen::Infinity>());
    FaceStep step;
    {
      const int f = static_cast<int>(free.size());
      Mat EF(f, E.rows());
      Vec gF(f);
      for (int k = 0; k < f; ++k) {
        EF.row(k) = E.col(free[k]).transpose();
        gF(k) = -g(free[k]);
      }
      const Vec nu = f > 0 ? Vec(EF.completeOrthogonalDecomposition().solve(gF))
                           : Vec(Vec::Zero(E.rows()));
      if (f == 0 || (EF * nu - gF).lpNorm<Eigen::Infinity>() <= tol * gscale_face) {
        step.p = Vec::Zero(L);
        step.nu = nu;
      } else {
        step = solve_face(H, g, E, free, ridge);
      }
    }
    if (step.p.lpNorm<Eigen::Infinity>() <= kStepZero) {
      const Vec lam = g + E.transpose() * step.nu;
      const double gscale = std::max(1.0, g.lpNorm<Eigen::Infinity>());
      int worst = -1;
      double worst_val = -tol * gscale;
      for (int i = 0; i < L; ++i) {
        if (out.at_zero[i] && lam(i) < worst_val) {
          worst_val = lam(i);
          worst = i;
        }
      }
      if (worst < 0) {
        out.converged = true;
        break;
      }
      out.at_zero[worst] = 0;
      continue;
    }
    double alpha = 1.0;
    int block = -1;
    for (int i : free) {
      if (step.p(i) < 0.0) {
        const double a = x(i) / -step.p(i);
        if (a < alpha) {
          alpha = a;
          block = i;
        }
      }
    }
    for (int i : free) x(i) += alpha * step.p(i);
    if (block >= 0) {
      x(block) = 0.0;
      out.at_zero[block] = 1;
    }
    for (int i : free) {
      if (x(i) < 0.0) x(i) = 0.0;
    }
  }
  out.x = x;
  return out;
}

Mat equality_rows(int L, const Mat& E) {
  Mat rows(E.rows() + 1, L);
  rows.row(0).setOnes();
  if (E.rows() > 0) rows.bottomRows(E.rows()) = E;
  return rows;
}

void finalize(const Mat& Q, const Vec& c, const Mat& rows, const Vec& rhs,
              QpResult& res) {
  const int L = static_cast<int>(res.x.size());
  const Vec g = 2.0 * Q * res.x + c;
  std::vector<int> support;
  res.active_set.clear();
  for (int i = 0; i < L; ++i) {
    if (res.x(i) > 0.0)
      support.push_back(i);
    else
      res.active_set.push_back(i);
  }
  const int m = static_cast<int>(rows.rows());
  Mat Es(static_cast<int>(support.size()), m);
  Vec gs(static_cast<int>(support.size()));
  for (size_t k = 0; k < support.size(); ++k) {
    Es.row(static_cast<int>(k)) = rows.col(support[k]).transpose();
    gs(static_cast<int>(k)) = -g(support[k]);
  }
  Vec nu = Es.completeOrthogonalDecomposition().solve(gs);
  const Vec reduced = g + rows.transpose() * nu;
  double r = 0.0;
  for (int i : support) r = std::max(r, std::abs(reduced(i)));
  for (int i : res.active_set) r = std::max(r, -reduced(i));
  const double gscale = std::max(1.0, g.lpNorm<Eigen::Infinity>());
  const double primal = (rows * res.x - rhs).lpNorm<Eigen::Infinity>();
  res.kkt_residual = std::max(r / gscale, primal);
  res.eq_multipliers = nu;
  res.value = objective(Q, c, res.x);
}

QpResult solve_rows(const Mat& Q, const Vec& c_in, const Mat& E, const Vec& e,
                    Vec start, const QpOptions& opt) {
  const int L = static_cast<int>(Q.rows());
  if (Q.cols() != L) fail(ErrorKind::kInput, "simplex_qp: Q must be square");
  const Vec c = c_in.size() == 0 ? Vec::Zero(L) : c_in;
  if (c.size() != L) fail(ErrorKind::kInput, "simplex_qp: c has wrong length");
  const Mat Qs = 0.5 * (Q + Q.transpose());
  const Mat H = 2.0 * Qs;
  const Mat rows = equality_rows(L, E);
  Vec rhs(rows.rows());
  rhs(0) = 1.0;
  if (E.rows() > 0) rhs.tail(E.rows()) = e;

  QpResult res;
  const double tr = Qs.trace();
  const double lmin = L > 0 ? min_eigenvalue(Qs) : 0.0;
  if (lmin <= 1e-12 * std::max(std::abs(tr), 1e-300)) {
    res.ridge = tr > 0.0 ? 1e-12 * tr / L : 1e-12;
  }
  const int max_iter = opt.max_iter > 0 ? opt.max_iter : 40 * L + 200;

  QpMethod method = opt.method;
  if (method == QpMethod::kAuto)
    method = L <= 16 ? QpMethod::kActiveSet : QpMethod::kProjectedGradient;
  res.method_used = method;

  if (method == QpMethod::kProjectedGradient) {
    // Projected gradient to locate the optimal face, then an active-set
    // polish from that point so the KKT tolerance is met exactly.
    Vec x = start;
    double fx = objective(Qs, c, x);
    double step = 1.0 / std::max(H.norm(), 1e-300);
    const double lipschitz_step = step;
    auto project = [&](const Vec& y) -> Vec {
      if (E.rows() == 0) return project_simplex(y);
      Mat I2 = Mat::Identity(L, L);
      ActiveSetOutcome p =
          active_set(2.0 * I2, -2.0 * y, rows, x, 0.0,
                     1e-14, 40 * L + 200);
      return p.x;
    };
    for (int it = 0; it < 20 * max_iter; ++it) {
      const Vec g = H * x + c;
      Vec y = project(x - step * g);
      double fy = objective(Qs, c, y);
      int backtracks = 0;
      while (fy > fx + 1e-4 * g.dot(y - x) && backtracks < 60) {
        step *= 0.5;
        y = project(x - step * g);
        fy = objective(Qs, c, y);
        ++backtracks;
      }
      const double move = (y - x).lpNorm<Eigen::Infinity>();
      x = y;
      fx = fy;
      res.iterations = it + 1;
      if (move <= 1e-12) break;
      step = std::max(step * 2.0, lipschitz_step);
    }
    start = x;
  }

  ActiveSetOutcome out =
      active_set(H, c, rows, start, res.ridge, opt.tol, max_iter);
  if (!out.converged) {
    std::ostringstream os;
    os << "simplex_qp: active set did not converge in " << max_iter
       << " iterations";
    fail(ErrorKind::kNumerical, os.str());
  }
  res.iterations += out.iterations;
  res.x = out.x;
  if (E.rows() == 0) {
    const double s = res.x.sum();
    if (s > 0.0) res.x /= s;
  }
  finalize(Qs, c, rows, rhs, res);
  return res;
}

}  // namespace

Vec project_simplex(const Vec& y) {
  const int n = static_cast<int>(y.size());
  std::vector<double> u(y.data(), y.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cum = 0.0;
  double theta = 0.0;
  for (int j = 0; j < n; ++j) {
    cum += u[j];
    const double t = (cum - 1.0) / (j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  Vec x(n);
  for (int i = 0; i < n; ++i) x(i) = std::max(y(i) - theta, 0.0);
  return x;
}

QpResult simplex_qp(const QpProblem& p, const QpOptions& opt) {
  const int L = static_cast<int>(p.Q.rows());
  if (L == 0) fail(ErrorKind::kInput, "simplex_qp: empty problem");
  Vec start = Vec::Constant(L, 1.0 / L);
  Mat E(0, L);
  Vec e(0);
  if (p.extra_eq) {
    const Vec& a = p.extra_eq->a;
    double b = p.extra_eq->b;
    if (a.size() != L) fail(ErrorKind::kInput, "simplex_qp: extra_eq.a has wrong length");
    Eigen::Index imin = 0, imax = 0;
    const double amin = a.minCoeff(&imin);
    const double amax = a.maxCoeff(&imax);
    const double slack = 1e-12 * std::max(1.0, a.lpNorm<Eigen::Infinity>());
    if (b < amin - slack || b > amax + slack) {
      std::ostringstream os;
      os.precision(17);
      os << "simplex_qp: extra equality infeasible, b=" << b
         << " outside [" << amin << ", " << amax << "]";
      fail(ErrorKind::kNumerical, os.str());
    }
    b = std::clamp(b, amin, amax);
    if (amax - amin > slack) {
      const double abar = a.mean();
      if (b >= abar) {
        const double t = amax > abar ? (b - abar) / (amax - abar) : 0.0;
        start *= (1.0 - t);
        start(imax) += t;
      } else {
        const double t = (abar - b) / (abar - amin);
        start *= (1.0 - t);
        start(imin) += t;
      }
      E = a.transpose();
      e = Vec::Constant(1, b);
    }
  }
  QpResult r = solve_rows(p.Q, p.c, E, e, start, opt);
  if (p.extra_eq && r.eq_multipliers.size() == 1) {
    Vec nu = Vec::Zero(2);
    nu(0) = r.eq_multipliers(0);
    r.eq_multipliers = nu;
  }
  return r;
}

QpResult simplex_qp_rows(const Mat& Q, const Vec& c, const Mat& E,
                         const Vec& e, const Vec& start,
                         const QpOptions& options) {
  if (E.rows() > 0 && (E.cols() != Q.rows() || e.size() != E.rows()))
    fail(ErrorKind::kInput, "simplex_qp_rows: constraint shape mismatch");
  return solve_rows(Q, c, E, e, start, options);
}

// ---------------------------------------------------------------------------
// LP
// ---------------------------------------------------------------------------

namespace {

constexpr double kPivotTol = 1e-9;

struct Simplex {
  Mat T;  // m+1 rows; last row holds reduced costs; last column the rhs
  std::vector<int> basis;
  int pivots = 0;

  void pivot(int r, int col) {
    T.row(r) /= T(r, col);
    for (int i = 0; i < T.rows(); ++i) {
      if (i != r && T(i, col) != 0.0) T.row(i) -= T(i, col) * T.row(r);
    }
    basis[r] = col;
    ++pivots;
  }

  // Returns false when unbounded.
  bool run(int allowed_cols, double cost_tol) {
    const int m = static_cast<int>(T.rows()) - 1;
    const int rhs = static_cast<int>(T.cols()) - 1;
    for (;;) {
      int enter = -1;
      for (int j = 0; j < allowed_cols; ++j) {
        if (T(m, j) < -cost_tol) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return true;
      int leave = -1;
      double best = kInf;
      for (int i = 0; i < m; ++i) {
        if (T(i, enter) <= kPivotTol) continue;
        const double ratio = T(i, rhs) / T(i, enter);
        const double tie = 1e-12 * (1.0 + std::abs(best));
        if (leave < 0 || ratio < best - tie) {
          best = ratio;
          leave = i;
        } else if (ratio <= best + tie && basis[i] < basis[leave]) {
          best = std::min(best, ratio);
          leave = i;
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
      if (pivots > 200000)
        fail(ErrorKind::kNumerical, "lp_solve: pivot limit exceeded");
    }
  }
};

}  // namespace

const char* lp_status_name(LpStatus s) {
  switch (s) {
    case LpStatus::kOptimal: return "optimal";
    case LpStatus::kInfeasible: return "infeasible";
    case LpStatus::kUnbounded: return "unbounded";
  }
  return "unknown";
}

LpResult lp_solve(const LpProblem& P) {
  const int n = static_cast<int>(P.c.size());
  const Vec lb = P.lb.size() ? P.lb : Vec::Zero(n);
  const Vec ub = P.ub.size() ? P.ub : Vec::Constant(n, kInf);
  if (lb.size() != n || ub.size() != n)
    fail(ErrorKind::kInput, "lp_solve: bound vectors have wrong length");
  const int meq = static_cast<int>(P.A_eq.rows());
  const int mub = static_cast<int>(P.A_ub.rows());
  if ((meq && P.A_eq.cols() != n) || (mub && P.A_ub.cols() != n) ||
      P.b_eq.size() != meq || P.b_ub.size() != mub)
    fail(ErrorKind::kInput, "lp_solve: constraint shape mismatch");

  LpResult res;
  for (int j = 0; j < n; ++j) {
    if (lb(j) > ub(j)) return res;
  }

  // x_j = offset_j + sign_j * u_j (- v_j when free), u, v >= 0.
  struct ColMap {
    int col;
    int neg = -1;
    double sign;
    double offset;
  };
  std::vector<ColMap> map(n);
  int ncols = 0;
  std::vector<std::pair<int, double>> upper_rows;  // (col, bound)
  for (int j = 0; j < n; ++j) {
    const bool lf = std::isfinite(lb(j));
    const bool uf = std::isfinite(ub(j));
    if (lf) {
      map[j] = {ncols++, -1, 1.0, lb(j)};
      if (uf) upper_rows.push_back({map[j].col, ub(j) - lb(j)});
    } else if (uf) {
      map[j] = {ncols++, -1, -1.0, ub(j)};
    } else {
      map[j] = {ncols, ncols + 1, 1.0, 0.0};
      ncols += 2;
    }
  }
  const int m_le = mub + static_cast<int>(upper_rows.size());
  const int m = meq + m_le;
  const int nstd = ncols + m_le;  // structural + slack columns

  Mat A = Mat::Zero(m, nstd);
  Vec b = Vec::Zero(m);
  Vec cost = Vec::Zero(nstd);
  auto place = [&](int row, const Eigen::RowVectorXd& coeffs, double rhs) {
    double r = rhs;
    for (int j = 0; j < n; ++j) {
      const double a = coeffs(j);
      if (a == 0.0) continue;
      A(row, map[j].col) += a * map[j].sign;
      if (map[j].neg >= 0) A(row, map[j].neg) -= a;
      r -= a * map[j].offset;
    }
    b(row) = r;
  };
  for (int i = 0; i < meq; ++i) place(i, P.A_eq.row(i), P.b_eq(i));
  for (int i = 0; i < mub; ++i) {
    place(meq + i, P.A_ub.row(i), P.b_ub(i));
    A(meq + i, ncols + i) = 1.0;
  }
  for (size_t k = 0; k < upper_rows.size(); ++k) {
    const int row = meq + mub + static_cast<int>(k);
    A(row, upper_rows[k].first) = 1.0;
    A(row, ncols + mub + static_cast<int>(k)) = 1.0;
    b(row) = upper_rows[k].second;
  }
  for (int j = 0; j < n; ++j) {
    cost(map[j].col) += P.c(j) * map[j].sign;
    if (map[j].neg >= 0) cost(map[j].neg) -= P.c(j);
  }
  for (int i = 0; i < m; ++i) {
    if (b(i) < 0.0) {
      A.row(i) *= -1.0;
      b(i) = -b(i);
    }
  }

  // Phase 1: one artificial per row.
  Simplex sx;
  sx.T = Mat::Zero(m + 1, nstd + m + 1);
  sx.T.topLeftCorner(m, nstd) = A;
  sx.T.block(0, nstd, m, m) = Mat::Identity(m, m);
  sx.T.col(nstd + m).head(m) = b;
  sx.basis.resize(m);
  for (int i = 0; i < m; ++i) sx.basis[i] = nstd + i;
  for (int i = 0; i < m; ++i) {
    sx.T.row(m).head(nstd) -= A.row(i);
    sx.T(m, nstd + m) -= b(i);
  }
  sx.run(nstd, 1e-11);
  const double infeas = -sx.T(m, nstd + m);
  const double bscale = std::max(1.0, b.size() ? b.lpNorm<Eigen::Infinity>() : 0.0);
  if (infeas > 1e-8 * bscale) {
    res.status = LpStatus::kInfeasible;
    res.pivots = sx.pivots;
    return res;
  }
  for (int i = 0; i < m; ++i) {
    if (sx.basis[i] < nstd) continue;
    for (int j = 0; j < nstd; ++j) {
      if (std::abs(sx.T(i, j)) > kPivotTol) {
        sx.pivot(i, j);
        break;
      }
    }
  }

  // Phase 2.
  sx.T.row(m).setZero();
  sx.T.row(m).head(nstd) = cost.transpose();
  for (int i = 0; i < m; ++i) {
    const int bj = sx.basis[i];
    const double cb = bj < nstd ? cost(bj) : 0.0;
    if (cb != 0.0) sx.T.row(m) -= cb * sx.T.row(i);
  }
  const double cscale = std::max(1.0, cost.size() ? cost.lpNorm<Eigen::Infinity>() : 0.0);
  if (!sx.run(nstd, 1e-11 * cscale)) {
    res.status = LpStatus::kUnbounded;
    res.pivots = sx.pivots;
    return res;
  }
  Vec u = Vec::Zero(nstd);
  for (int i = 0; i < m; ++i) {
    if (sx.basis[i] < nstd) u(sx.basis[i]) = sx.T(i, nstd + m);
  }
  res.x = Vec(n);
  for (int j = 0; j < n; ++j) {
    double v = map[j].offset + map[j].sign * u(map[j].col);
    if (map[j].neg >= 0) v -= u(map[j].neg);
    res.x(j) = v;
  }
  res.value = P.c.dot(res.x);
  res.status = LpStatus::kOptimal;
  res.pivots = sx.pivots;
  return res;
}

// ---------------------------------------------------------------------------
// Fixed point
// ---------------------------------------------------------------------------

FixedPointResult fixed_point(const std::function<double(double)>& map,
                             double start, const FixedPointOptions& opt) {
  if (!(opt.damping > 0.0 && opt.damping <= 1.0))
    fail(ErrorKind::kInput, "fixed_point: damping must lie in (0, 1]");
  FixedPointResult r;
  double x = start;
  for (int it = 0; it < opt.max_iter; ++it) {
    const double tx = map(x);
    if (!std::isfinite(tx)) {
      std::ostringstream os;
      os.precision(17);
      os << "fixed_point: map returned a non-finite value at x=" << x
         << " (iteration " << it << ")";
      fail(ErrorKind::kNumerical, os.str());
    }
    r.iterations = it + 1;
    r.residual = std::abs(tx - x);
    if (r.residual <= opt.tol) {
      r.x = x;
      r.converged = true;
      return r;
    }
    x = (1.0 - opt.damping) * x + opt.damping * tx;
  }
  r.x = x;
  const double tx = map(x);
  r.residual = std::abs(tx - x);
  r.converged = r.residual <= opt.tol;
  return r;
}

// ---------------------------------------------------------------------------
// Symmetric utilities
// ---------------------------------------------------------------------------

Mat spd_solve(const Mat& A, const Mat& B) {
  if (A.rows() != A.cols() || A.rows() != B.rows())
    fail(ErrorKind::kInput, "spd_solve: shape mismatch");
  Eigen::LLT<Mat> llt(A);
  if (llt.info() != Eigen::Success)
    fail(ErrorKind::kNumerical, "spd_solve: matrix is not positive definite");
  return llt.solve(B);
}

RidgedSolve spd_solve_ridged(const Mat& A, const Mat& B, double ridge_scale) {
  RidgedSolve r;
  const int d = static_cast<int>(A.rows());
  const double tr = A.trace();
  if (d > 0 && min_eigenvalue(A) <= 1e-10 * std::abs(tr)) {
    r.ridge = ridge_scale * tr / d;
    if (!(r.ridge > 0.0))
      fail(ErrorKind::kNumerical, "spd_solve: singular matrix with zero trace");
    r.x = spd_solve(A + r.ridge * Mat::Identity(d, d), B);
    return r;
  }
  r.x = spd_solve(A, B);
  return r;
}

double min_eigenvalue(const Mat& A) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (A + A.transpose()),
                                        Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

PsdRepair psd_clip(const Mat& A) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (A + A.transpose()));
  Vec ev = es.eigenvalues();
  PsdRepair r;
  const double lo = ev.minCoeff();
  if (lo >= 0.0) {
    r.matrix = 0.5 * (A + A.transpose());
    return r;
  }
  r.clipped = -lo;
  ev = ev.cwiseMax(0.0);
  r.matrix = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  r.matrix = 0.5 * (r.matrix + r.matrix.transpose());
  return r;
}

}  // namespace ivrt
