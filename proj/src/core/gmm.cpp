#include "ivrt/gmm.hpp"

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <sstream>

#include "ivrt/error.hpp"
#include "ivrt/optim.hpp"

namespace ivrt {
namespace {

constexpr double kDegenerate = 1e-14;
constexpr double kOmegaRidge = 1e-10;
constexpr int kScanPoints = 512;

double quad_gwg(const Vec& gamma, const Mat& W) { return gamma.dot(W * gamma); }

}  // namespace

const char* weight_kind_name(WeightKind k) {
  switch (k) {
    case WeightKind::kIdentity: return "identity";
    case WeightKind::kSigmaZInverse: return "sigma_z_inverse";
    case WeightKind::kOmegaInverse: return "omega_inverse";
    case WeightKind::kCustom: return "custom";
    case WeightKind::kTargeting: return "targeting";
  }
  return "custom";
}

Vec lambda_weights(const Vec& gamma, const Mat& W) {
  const Vec wg = W * gamma;
  const double s = gamma.dot(wg);
  if (!(s > kDegenerate))
    fail(ErrorKind::kNumerical, "degenerate weighting: gamma'W gamma is not positive");
  return gamma.cwiseProduct(wg) / s;
}

double sandwich_variance(const Vec& gamma, const Mat& W, const Mat& Omega) {
  const Vec wg = W * gamma;
  const double s = gamma.dot(wg);
  if (!(s > kDegenerate))
    fail(ErrorKind::kNumerical, "degenerate weighting: gamma'W gamma is not positive");
  return wg.dot(Omega * wg) / (s * s);
}

GmmResult gmm_estimate(const MomentSummary& ms, const CenteredDataset& cd, const Mat& W,
                       WeightKind kind, bool cluster) {
  const int L = ms.L();
  if (W.rows() != L || W.cols() != L)
    fail(ErrorKind::kInput, "gmm_estimate: weighting matrix has wrong shape");
  const Mat Ws = 0.5 * (W + W.transpose());
  const double s = quad_gwg(ms.gamma, Ws);
  if (!(s > kDegenerate))
    fail(ErrorKind::kNumerical, "gmm_estimate: degenerate weighting (gamma'W gamma <= 1e-14)");
  GmmResult r;
  r.beta = ms.gamma.dot(Ws * ms.cov_yz) / s;
  r.lambda = lambda_weights(ms.gamma, Ws);
  r.omega_used = omega_at(cd, r.beta, cluster);
  r.variance = sandwich_variance(ms.gamma, Ws, r.omega_used.values);
  r.se = std::sqrt(std::max(r.variance, 0.0) / ms.n);
  r.weight_kind = kind;
  r.weight = Ws;
  return r;
}

GmmResult tsls(const MomentSummary& ms, const CenteredDataset& cd, bool cluster) {
  const int L = ms.L();
  const double tr = ms.sigma_z.trace();
  if (min_eigenvalue(ms.sigma_z) <= 1e-10 * tr)
    fail(ErrorKind::kNumerical, "tsls: instrument covariance is rank deficient");
  const Mat W = spd_solve(ms.sigma_z, Mat::Identity(L, L));
  return gmm_estimate(ms, cd, W, WeightKind::kSigmaZInverse, cluster);
}

double egmm_map(const MomentSummary& ms, const CenteredDataset& cd, double beta, bool cluster,
                double* ridge) {
  const OmegaMatrix om = omega_at(cd, beta, cluster);
  Mat rhs(ms.L(), 2);
  rhs.col(0) = ms.gamma;
  rhs.col(1) = ms.cov_yz;
  const RidgedSolve sol = spd_solve_ridged(om.values, rhs, kOmegaRidge);
  if (ridge) *ridge = sol.ridge;
  const Vec a = sol.x.col(0);
  const double s = a.dot(ms.gamma);
  if (!(s > kDegenerate))
    fail(ErrorKind::kNumerical, "egmm: degenerate weighting at an iterate");
  return a.dot(ms.cov_yz) / s;
}

EgmmResult egmm(const MomentSummary& ms, const CenteredDataset& cd, const EgmmOptions& opt) {
  if (!(opt.tol > 0.0)) fail(ErrorKind::kInput, "egmm: tol must be positive");
  require_defined_wald(ms, cd.instrument_names);
  const int L = ms.L();
  EgmmResult out;
  out.mode = opt.mode;
  const GmmResult first = tsls(ms, cd, opt.cluster);

  double weight_beta = first.beta;
  if (opt.mode == EgmmMode::kIterated) {
    auto T = [&](double b) { return egmm_map(ms, cd, b, opt.cluster); };
    FixedPointOptions fo;
    fo.tol = opt.tol;
    fo.max_iter = opt.max_iter;
    const FixedPointResult fp = fixed_point(T, first.beta, fo);
    weight_beta = fp.x;
    out.iterations = fp.iterations;
    out.fixed_point_residual = fp.residual;
    out.converged = fp.converged;
  } else {
    out.iterations = 1;
  }

  const OmegaMatrix om = omega_at(cd, weight_beta, opt.cluster);
  const RidgedSolve inv = spd_solve_ridged(om.values, Mat::Identity(L, L), kOmegaRidge);
  out.ridge = inv.ridge;
  out.weight_beta = weight_beta;
  out.gmm = gmm_estimate(ms, cd, 0.5 * (inv.x + inv.x.transpose()), WeightKind::kOmegaInverse,
                         opt.cluster);
  if (opt.mode == EgmmMode::kTwoStep)
    out.fixed_point_residual = std::abs(out.gmm.beta - weight_beta);

  if (opt.scan) {
    const double lo_w = ms.wald.minCoeff();
    const double hi_w = ms.wald.maxCoeff();
    const double range = hi_w - lo_w > 0.0 ? hi_w - lo_w : 1.0;
    const double lo = lo_w - range;
    const double hi = hi_w + range;
    auto F = [&](double b) { return egmm_map(ms, cd, b, opt.cluster) - b; };
    double prev_b = lo;
    double prev_f = F(lo);
    for (int k = 1; k < kScanPoints; ++k) {
      const double b = lo + (hi - lo) * k / (kScanPoints - 1);
      const double f = F(b);
      if (prev_f == 0.0) {
        out.roots.push_back(prev_b);
      } else if ((prev_f < 0.0) != (f < 0.0) && f != 0.0) {
        double a = prev_b, c = b, fa = prev_f;
        for (int it = 0; it < 200 && c - a > opt.tol; ++it) {
          const double m = 0.5 * (a + c);
          const double fm = F(m);
          if ((fm < 0.0) == (fa < 0.0)) {
            a = m;
            fa = fm;
          } else {
            c = m;
          }
        }
        out.roots.push_back(0.5 * (a + c));
      }
      prev_b = b;
      prev_f = f;
    }
    if (prev_f == 0.0) out.roots.push_back(prev_b);
  }

  if (L >= 2) {
    out.j = j_test(cd, ms, out);
  } else {
    out.j_note = "not overidentified";
  }
  return out;
}

JTest j_test(const CenteredDataset& cd, const MomentSummary& ms, const EgmmResult& e) {
  const int L = ms.L();
  if (L < 2) fail(ErrorKind::kInput, "j_test: not overidentified (L = 1)");
  const OmegaMatrix om = omega_at(cd, e.weight_beta, e.gmm.omega_used.cluster_robust);
  Mat A = om.values;
  if (e.ridge > 0.0) A += e.ridge * Mat::Identity(L, L);
  const Vec g = ms.cov_yz - e.gmm.beta * ms.gamma;
  const Vec w = spd_solve(A, g);
  JTest jt;
  jt.j = std::max(0.0, ms.n * g.dot(w));
  jt.df = L - 1;
  jt.pvalue = chi2_survival(jt.j, jt.df);
  return jt;
}

double chi2_survival(double x, int df) {
  if (df < 1) fail(ErrorKind::kInput, "chi2_survival: df must be positive");
  if (!(x > 0.0)) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

void require_simplex(const Vec& omega, const char* who) {
  bool bad = std::abs(omega.sum() - 1.0) > 1e-10;
  for (int i = 0; i < omega.size(); ++i) bad = bad || !(omega(i) >= -1e-12);
  if (bad) {
    std::ostringstream os;
    os.precision(12);
    os << who << ": weights are not on the simplex (sum " << omega.sum() << ", min "
       << omega.minCoeff() << ")";
    fail(ErrorKind::kInput, os.str());
  }
}

Mat targeting_matrix(const Vec& omega_in, const Vec& gamma) {
  const int L = static_cast<int>(omega_in.size());
  if (gamma.size() != L) fail(ErrorKind::kInput, "targeting_matrix: length mismatch");
  require_simplex(omega_in, "targeting_matrix");
  for (int l = 0; l < L; ++l)
    if (!(gamma(l) > 0.0)) fail(ErrorKind::kInput, "targeting_matrix: gamma must be positive");
  const Vec omega = omega_in.cwiseMax(0.0);
  std::vector<int> S, Sc;
  for (int l = 0; l < L; ++l) (omega(l) > 0.0 ? S : Sc).push_back(l);
  Mat W = Mat::Zero(L, L);
  if (Sc.empty()) {
    for (int l = 0; l < L; ++l) W(l, l) = omega(l) / (gamma(l) * gamma(l));
    return W;
  }
  double gs2 = 0.0, gc2 = 0.0, wmin = std::numeric_limits<double>::infinity();
  for (int k : S) {
    gs2 += gamma(k) * gamma(k);
    wmin = std::min(wmin, omega(k));
  }
  for (int l : Sc) gc2 += gamma(l) * gamma(l);
  double eps = 1e-6 * wmin;
  for (int attempt = 0; attempt < 60; ++attempt, eps *= 0.5) {
    W.setZero();
    for (int l : Sc) W(l, l) = eps;
    for (int l : Sc) {
      for (int k : S) {
        const double v = -eps * gamma(l) * gamma(k) / gs2;
        W(l, k) = v;
        W(k, l) = v;
      }
    }
    for (int k : S) W(k, k) = (omega(k) / gamma(k) + eps * gamma(k) * gc2 / gs2) / gamma(k);
    Eigen::LLT<Mat> llt(W);
    if (llt.info() == Eigen::Success && min_eigenvalue(W) > 0.0) return W;
  }
  fail(ErrorKind::kNumerical, "targeting_matrix: boundary construction is not positive definite");
}

ConstrainedVariance constrained_variance(const Vec& omega, const Vec& gamma, const Mat& Omega) {
  const Vec dw = omega.cwiseQuotient(gamma);
  ConstrainedVariance cv;
  cv.v_constrained = dw.dot(Omega * dw);
  Eigen::LLT<Mat> llt(Omega);
  if (llt.info() != Eigen::Success || min_eigenvalue(Omega) <= 1e-14 * Omega.trace()) {
    cv.floor_defined = false;
    cv.v_floor = std::numeric_limits<double>::quiet_NaN();
    return cv;
  }
  cv.v_floor = 1.0 / gamma.dot(llt.solve(gamma));
  return cv;
}

double penalty_derivative(const Mat& Omega, const Vec& gamma, int ell) {
  const int L = static_cast<int>(gamma.size());
  if (ell < 0 || ell >= L) fail(ErrorKind::kInput, "penalty_derivative: index out of range");
  const Mat inv = spd_solve(Omega, Mat::Identity(L, L));
  const Vec a = inv * gamma;
  const double S = gamma.dot(a);
  return gamma(ell) * a(ell) / (S * S) * (a(ell) * a(ell) - S * inv(ell, ell));
}

DiagonalDiagnostics diagonal_diagnostics(const MomentSummary& ms, const OmegaMatrix& omega,
                                         const std::optional<ResidualOracle>& oracle) {
  const int L = ms.L();
  DiagonalDiagnostics dd;
  dd.rows.resize(L);
  double s2 = 0.0, se = 0.0;
  for (int l = 0; l < L; ++l) {
    DiagonalRow& r = dd.rows[l];
    r.sigma2_eps = omega.values(l, l) / ms.var_z(l);
    r.lambda_2sls = ms.pi(l) * ms.pi(l) * ms.var_z(l);
    r.lambda_egmm = r.lambda_2sls / r.sigma2_eps;
    s2 += r.lambda_2sls;
    se += r.lambda_egmm;
  }
  for (int l = 0; l < L; ++l) {
    DiagonalRow& r = dd.rows[l];
    r.lambda_2sls /= s2;
    r.lambda_egmm /= se;
    r.ratio = r.lambda_egmm / r.lambda_2sls;
    if (oracle) {
      const double p = oracle->p_treat(l);
      const double dev = oracle->late(l) - oracle->beta_star;
      r.part_y0 = oracle->sigma2_y0(l);
      r.part_tau = (1.0 - p) * oracle->sigma2_tau(l);
      r.part_dispersion = (1.0 - 3.0 * p * (1.0 - p)) * dev * dev;
    }
    for (int k = 0; k < L; ++k) {
      if (k == l) continue;
      const double v = std::abs(omega.values(l, k));
      dd.max_offdiag = std::max(dd.max_offdiag, v);
      const double den = std::sqrt(omega.values(l, l) * omega.values(k, k));
      if (den > 0.0) dd.max_offdiag_corr = std::max(dd.max_offdiag_corr, v / den);
    }
  }
  return dd;
}

}  // namespace ivrt
