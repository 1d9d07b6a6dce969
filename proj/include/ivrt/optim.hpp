#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ivrt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Quadratic programs over the probability simplex.
//
//   minimize    x'Qx + c'x
//   subject to  x >= 0, sum(x) = 1, [a'x = b]
// ---------------------------------------------------------------------------

struct LinearEquality {
  Vec a;
  double b = 0.0;
};

struct QpProblem {
  Mat Q;
  Vec c;  // may be empty, meaning zero
  std::optional<LinearEquality> extra_eq;
};

enum class QpMethod { kAuto, kActiveSet, kProjectedGradient };

struct QpOptions {
  double tol = 1e-10;
  QpMethod method = QpMethod::kAuto;
  int max_iter = 0;  // 0 picks a size-dependent default
};

struct QpResult {
  Vec x;
  double value = 0.0;
  std::vector<int> active_set;  // coordinates held at zero
  double kkt_residual = 0.0;    // relative to max(1, |grad|_inf)
  int iterations = 0;
  double ridge = 0.0;           // nonzero when Q was singular
  QpMethod method_used = QpMethod::kActiveSet;
  // Multipliers of the equality rows in the order (sum, extra rows...), with
  // the sign convention grad + E'nu >= 0.  The derivative of the optimal value
  // with respect to the right-hand side of row r is -nu[r].
  Vec eq_multipliers;
};

QpResult simplex_qp(const QpProblem& problem, const QpOptions& options = {});

// Same solver with an arbitrary block of extra equality rows E x = e.  `start`
// must be feasible when E is non-empty.
QpResult simplex_qp_rows(const Mat& Q, const Vec& c, const Mat& E,
                         const Vec& e, const Vec& start,
                         const QpOptions& options = {});

// Euclidean projection onto the probability simplex.
Vec project_simplex(const Vec& y);

// ---------------------------------------------------------------------------
// Linear programs (dense two-phase primal simplex, Bland's rule).
//
//   minimize c'x  subject to  A_eq x = b_eq, A_ub x <= b_ub, lb <= x <= ub
// ---------------------------------------------------------------------------

struct LpProblem {
  Vec c;
  Mat A_eq;
  Vec b_eq;
  Mat A_ub;
  Vec b_ub;
  Vec lb;  // empty means all zero; entries may be -inf
  Vec ub;  // empty means all +inf
};

enum class LpStatus { kOptimal, kInfeasible, kUnbounded };

struct LpResult {
  LpStatus status = LpStatus::kInfeasible;
  Vec x;
  double value = 0.0;
  int pivots = 0;
};

LpResult lp_solve(const LpProblem& problem);

const char* lp_status_name(LpStatus status);

// ---------------------------------------------------------------------------
// Scalar fixed points.
// ---------------------------------------------------------------------------

struct FixedPointOptions {
  double tol = 1e-10;
  int max_iter = 200;
  double damping = 1.0;
};

struct FixedPointResult {
  double x = 0.0;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

FixedPointResult fixed_point(const std::function<double(double)>& map,
                             double start,
                             const FixedPointOptions& options = {});

// ---------------------------------------------------------------------------
// Symmetric matrix utilities.
// ---------------------------------------------------------------------------

// Cholesky solve; throws a numerical error if A is not positive definite.
Mat spd_solve(const Mat& A, const Mat& B);

struct RidgedSolve {
  Mat x;
  double ridge = 0.0;
};

// Solves A x = B, adding ridge_scale * trace(A)/dim to the diagonal when A is
// not numerically positive definite (min eigenvalue <= 1e-10 * trace).
RidgedSolve spd_solve_ridged(const Mat& A, const Mat& B, double ridge_scale);

double min_eigenvalue(const Mat& A);

struct PsdRepair {
  Mat matrix;
  double clipped = 0.0;  // magnitude of the most negative eigenvalue removed
};

// Clips negative eigenvalues of a symmetric matrix at zero.
PsdRepair psd_clip(const Mat& A);

}  // namespace ivrt
