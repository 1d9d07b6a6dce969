#include "ivrt/mte.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ivrt/error.hpp"

namespace ivrt {
namespace {

constexpr double kDedup = 1e-14;

Vec sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::vector<double> out;
  for (double x : v) {
    if (out.empty() || x - out.back() > kDedup) out.push_back(x);
  }
  return Eigen::Map<Vec>(out.data(), static_cast<Eigen::Index>(out.size()));
}

Vec widths(const Vec& grid) {
  const int K = static_cast<int>(grid.size()) - 1;
  return grid.tail(K) - grid.head(K);
}

std::vector<const WeightFn*> pointers(const std::vector<WeightFn>& fns) {
  std::vector<const WeightFn*> out;
  for (const auto& f : fns) out.push_back(&f);
  return out;
}

}  // namespace

double WeightFn::integral() const {
  double s = 0.0;
  for (int k = 0; k < intervals(); ++k) s += values(k) * (breaks(k + 1) - breaks(k));
  return s;
}

double WeightFn::at(double u) const {
  const int K = intervals();
  for (int k = 0; k < K; ++k)
    if (u <= breaks(k + 1)) return values(k);
  return values(K - 1);
}

double WeightFn::min_value() const { return values.minCoeff(); }

WeightFn make_weight_fn(const Vec& breaks, const Vec& values) {
  if (breaks.size() < 2 || values.size() != breaks.size() - 1)
    fail(ErrorKind::kInput, "weight function: need K+1 breaks for K values");
  if (std::abs(breaks(0)) > kDedup || std::abs(breaks(breaks.size() - 1) - 1.0) > kDedup)
    fail(ErrorKind::kInput, "weight function: breaks must start at 0 and end at 1");
  for (int k = 0; k + 1 < breaks.size(); ++k)
    if (!(breaks(k + 1) > breaks(k)))
      fail(ErrorKind::kInput, "weight function: breaks must be strictly increasing");
  for (int k = 0; k < values.size(); ++k)
    if (!std::isfinite(values(k))) fail(ErrorKind::kInput, "weight function: non-finite value");
  WeightFn f{breaks, values};
  f.breaks(0) = 0.0;
  f.breaks(breaks.size() - 1) = 1.0;
  return f;
}

Vec merge_breaks(const std::vector<const WeightFn*>& fns) {
  std::vector<double> all = {0.0, 1.0};
  for (const WeightFn* f : fns)
    for (int k = 0; k < f->breaks.size(); ++k) all.push_back(f->breaks(k));
  return sorted_unique(std::move(all));
}

Vec values_on(const WeightFn& f, const Vec& grid) {
  const int K = static_cast<int>(grid.size()) - 1;
  Vec v(K);
  for (int k = 0; k < K; ++k) v(k) = f.at(0.5 * (grid(k) + grid(k + 1)));
  return v;
}

WeightFn linear_combination(const std::vector<WeightFn>& fns, const Vec& coeffs) {
  if (fns.empty() || static_cast<int>(fns.size()) != coeffs.size())
    fail(ErrorKind::kInput, "linear_combination: coefficient count mismatch");
  const Vec grid = merge_breaks(pointers(fns));
  Vec v = Vec::Zero(grid.size() - 1);
  for (size_t j = 0; j < fns.size(); ++j) {
    if (coeffs(static_cast<int>(j)) != 0.0)
      v += coeffs(static_cast<int>(j)) * values_on(fns[j], grid);
  }
  return {grid, v};
}

double inner_product(const WeightFn& a, const WeightFn& b) {
  const Vec grid = merge_breaks({&a, &b});
  return values_on(a, grid).cwiseProduct(values_on(b, grid)).dot(widths(grid));
}

double l2_norm(const WeightFn& f) { return std::sqrt(inner_product(f, f)); }

std::vector<std::pair<unsigned, unsigned>> PropensityModel::monotonicity_violations() const {
  std::vector<std::pair<unsigned, unsigned>> out;
  const unsigned N = 1u << joint.L;
  for (unsigned z = 0; z < N; ++z) {
    if (std::isnan(p_of_z(z))) continue;
    for (int l = 0; l < joint.L; ++l) {
      const unsigned up = z | (1u << l);
      if (up == z || std::isnan(p_of_z(up))) continue;
      if (p_of_z(up) < p_of_z(z) - 1e-12) out.push_back({z, up});
    }
  }
  return out;
}

PropensityModel propensity_model(const InstrumentJoint& zj, const Vec& p_of_z) {
  if (p_of_z.size() != zj.prob.size())
    fail(ErrorKind::kInput, "propensity_model: need one propensity per instrument cell");
  std::vector<double> b = {0.0, 1.0};
  for (int z = 0; z < p_of_z.size(); ++z) {
    const double p = p_of_z(z);
    if (std::isnan(p)) {
      if (zj.prob(z) > 0.0) {
        std::ostringstream os;
        os << "propensity_model: cell " << z << " has positive probability but no propensity";
        fail(ErrorKind::kInput, os.str());
      }
      continue;
    }
    if (p < 0.0 || p > 1.0) fail(ErrorKind::kInput, "propensity_model: propensity outside [0, 1]");
    b.push_back(p);
  }
  return {zj, p_of_z, sorted_unique(std::move(b))};
}

PropensityModel empirical_propensity(const Dataset& ds, bool require_full_support) {
  const int L = ds.L();
  const InstrumentJoint zj = empirical_joint(ds);
  const int N = 1 << L;
  Vec takeup = Vec::Zero(N);
  Vec count = Vec::Zero(N);
  for (int i = 0; i < ds.n(); ++i) {
    unsigned z = 0;
    for (int l = 0; l < L; ++l)
      if (ds.z(i, l) != 0.0) z |= 1u << l;
    count(z) += 1.0;
    takeup(z) += ds.d(i);
  }
  std::vector<int> empty;
  Vec p(N);
  for (int z = 0; z < N; ++z) {
    if (count(z) == 0.0) {
      empty.push_back(z);
      p(z) = std::numeric_limits<double>::quiet_NaN();
    } else {
      p(z) = takeup(z) / count(z);
    }
  }
  if (require_full_support && !empty.empty()) {
    std::ostringstream os;
    os << "empirical_propensity: empty instrument cells:";
    for (int z : empty) {
      os << " (";
      for (int l = 0; l < L; ++l) os << (l ? "," : "") << ((z >> l) & 1);
      os << ")";
    }
    fail(ErrorKind::kInput, os.str());
  }
  return propensity_model(zj, p);
}

WeightFn hv_weight(const PropensityModel& pm, int ell) {
  const int L = pm.joint.L;
  if (ell < 0 || ell >= L) fail(ErrorKind::kInput, "hv_weight: instrument index out of range");
  const double p1 = pm.joint.marginal(ell);
  if (!(p1 > 0.0 && p1 < 1.0)) fail(ErrorKind::kRelevance, "hv_weight: instrument is constant");
  const unsigned N = 1u << L;
  double m1 = 0.0, m0 = 0.0;
  for (unsigned z = 0; z < N; ++z) {
    const double pr = pm.joint.prob(z);
    if (pr == 0.0) continue;
    if ((z >> ell) & 1u)
      m1 += pr * pm.p_of_z(z) / p1;
    else
      m0 += pr * pm.p_of_z(z) / (1.0 - p1);
  }
  const double denom = m1 - m0;
  if (std::abs(denom) <= 1e-14) {
    std::ostringstream os;
    os << "hv_weight: instrument " << ell + 1 << " does not shift the propensity";
    fail(ErrorKind::kRelevance, os.str());
  }
  const int K = static_cast<int>(pm.breaks.size()) - 1;
  Vec v(K);
  for (int k = 0; k < K; ++k) {
    const double u = pm.breaks(k + 1);
    double s1 = 0.0, s0 = 0.0;
    for (unsigned z = 0; z < N; ++z) {
      const double pr = pm.joint.prob(z);
      if (pr == 0.0 || pm.p_of_z(z) < u - kDedup) continue;
      if ((z >> ell) & 1u)
        s1 += pr / p1;
      else
        s0 += pr / (1.0 - p1);
    }
    v(k) = (s1 - s0) / denom;
  }
  return {pm.breaks, v};
}

std::vector<WeightFn> hv_weights(const PropensityModel& pm) {
  std::vector<WeightFn> hs;
  for (int l = 0; l < pm.joint.L; ++l) hs.push_back(hv_weight(pm, l));
  return hs;
}

WeightFn composite_weight(const Vec& weights, const std::vector<WeightFn>& hs) {
  if (std::abs(weights.sum() - 1.0) > 1e-10)
    fail(ErrorKind::kInput, "composite_weight: weights must sum to 1");
  return linear_combination(hs, weights);
}

PropensityLaw propensity_law(const PropensityModel& pm) {
  std::vector<double> v, p;
  for (int z = 0; z < pm.joint.prob.size(); ++z) {
    if (pm.joint.prob(z) == 0.0) continue;
    v.push_back(pm.p_of_z(z));
    p.push_back(pm.joint.prob(z));
  }
  PropensityLaw law;
  law.values = Eigen::Map<Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  law.probs = Eigen::Map<Vec>(p.data(), static_cast<Eigen::Index>(p.size()));
  return law;
}

double survival(const PropensityLaw& law, double u) {
  double s = 0.0;
  for (int i = 0; i < law.values.size(); ++i)
    if (law.values(i) >= u - kDedup) s += law.probs(i);
  return s;
}

double policy_mass(const PolicyPair& pp) {
  return pp.counterfactual.values.dot(pp.counterfactual.probs) -
         pp.status_quo.values.dot(pp.status_quo.probs);
}

WeightFn prte_weight(const PolicyPair& pp) {
  for (const PropensityLaw* law : {&pp.status_quo, &pp.counterfactual}) {
    if (law->values.size() != law->probs.size())
      fail(ErrorKind::kInput, "prte_weight: values and probabilities differ in length");
    for (int i = 0; i < law->values.size(); ++i)
      if (law->values(i) < 0.0 || law->values(i) > 1.0 || law->probs(i) < 0.0)
        fail(ErrorKind::kInput, "prte_weight: invalid propensity law");
  }
  std::vector<double> b = {0.0, 1.0};
  for (const PropensityLaw* law : {&pp.status_quo, &pp.counterfactual})
    for (int i = 0; i < law->values.size(); ++i) b.push_back(law->values(i));
  const Vec grid = sorted_unique(std::move(b));
  const int K = static_cast<int>(grid.size()) - 1;
  Vec diff(K);
  for (int k = 0; k < K; ++k)
    diff(k) = survival(pp.status_quo, grid(k + 1)) - survival(pp.counterfactual, grid(k + 1));
  const double mass = diff.dot(widths(grid));
  if (std::abs(mass) <= 1e-14)
    fail(ErrorKind::kRelevance, "prte_weight: degenerate policy (no change in mean take-up)");
  return {grid, diff / mass};
}

PolicyPair staircase_policy(const Vec& group_probs, const Vec& rates) {
  const int Q = static_cast<int>(rates.size());
  if (Q < 2 || group_probs.size() != Q)
    fail(ErrorKind::kInput, "staircase_policy: need at least two groups with matching lengths");
  for (int q = 0; q + 1 < Q; ++q)
    if (rates(q + 1) < rates(q))
      fail(ErrorKind::kInput, "staircase_policy: approval rates must be nondecreasing");
  PolicyPair pp;
  pp.status_quo = {rates, group_probs};
  Vec shifted = rates;
  for (int q = 0; q + 1 < Q; ++q) shifted(q) = rates(q + 1);
  pp.counterfactual = {shifted, group_probs};
  return pp;
}

PrteTarget prte_target(const std::vector<WeightFn>& hs, const WeightFn& w_p, const Mat& gamma) {
  const int L = static_cast<int>(hs.size());
  if (L == 0 || gamma.rows() != L || gamma.cols() != L)
    fail(ErrorKind::kInput, "prte_target: shape mismatch");
  std::vector<const WeightFn*> all = pointers(hs);
  all.push_back(&w_p);
  const Vec grid = merge_breaks(all);
  const Vec w = widths(grid);
  const int K = static_cast<int>(w.size());
  Mat H(K, L);
  for (int l = 0; l < L; ++l) H.col(l) = values_on(hs[l], grid);
  const Vec target = values_on(w_p, grid);
  const Mat G = H.transpose() * w.asDiagonal() * H;
  const Vec c = H.transpose() * w.asDiagonal() * target;

  PrteTarget out;
  QpProblem s1;
  s1.Q = G;
  s1.c = -2.0 * c;
  const QpResult r1 = simplex_qp(s1);
  out.stage1_omega = r1.x;
  out.stage1_value = r1.value;

  // Every stage-1 minimizer shares the fitted function H omega, so the optimal
  // face is {omega in simplex : V_r'omega = V_r'omega_1} for the range V_r of G.
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (G + G.transpose()));
  const double top = es.eigenvalues().maxCoeff();
  std::vector<int> keep;
  for (int i = 0; i < L; ++i)
    if (es.eigenvalues()(i) > 1e-10 * top) keep.push_back(i);
  out.face_rank = static_cast<int>(keep.size());
  Mat E(out.face_rank, L);
  for (int r = 0; r < out.face_rank; ++r) E.row(r) = es.eigenvectors().col(keep[r]).transpose();
  const Vec e = E * r1.x;
  const PsdRepair rep = psd_clip(gamma);
  out.psd_clip = rep.clipped;
  const QpResult r2 = simplex_qp_rows(rep.matrix, Vec::Zero(L), E, e, r1.x);
  out.omega = r2.x;

  out.composite = {grid, H * out.omega};
  out.error_fn = {grid, H * out.omega - target};
  out.l2_error = std::sqrt(out.error_fn.values.cwiseProduct(out.error_fn.values).dot(w));
  const double norm = std::sqrt(target.cwiseProduct(target).dot(w));
  out.relative_l2 = norm > 0.0 ? out.l2_error / norm : std::numeric_limits<double>::quiet_NaN();
  return out;
}

double gap_lipschitz(double M, double e_l2) {
  if (M < 0.0 || e_l2 < 0.0) fail(ErrorKind::kInput, "gap_lipschitz: arguments must be nonnegative");
  return M / (2.0 * std::sqrt(3.0)) * e_l2;
}

GapBounds gap_lp(const Vec& wald, const std::vector<WeightFn>& hs, const WeightFn& e,
                 const GapRestrictions& rs) {
  const int L = static_cast<int>(hs.size());
  if (wald.size() != L) fail(ErrorKind::kInput, "gap_lp: one Wald value per instrument required");
  std::vector<const WeightFn*> all = pointers(hs);
  all.push_back(&e);
  const Vec grid = merge_breaks(all);
  const Vec w = widths(grid);
  const int K = static_cast<int>(w.size());
  const int nv = 2 * K;  // m0 then m1

  LpProblem lp;
  lp.A_eq = Mat::Zero(L, nv);
  lp.b_eq = wald;
  for (int l = 0; l < L; ++l) {
    const Vec hv = values_on(hs[l], grid);
    for (int k = 0; k < K; ++k) {
      lp.A_eq(l, k) = -hv(k) * w(k);
      lp.A_eq(l, K + k) = hv(k) * w(k);
    }
  }
  std::vector<Eigen::RowVectorXd> ub_rows;
  if (rs.mtr) {
    for (int k = 0; k < K; ++k) {
      Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(nv);
      r(k) = 1.0;
      r(K + k) = -1.0;
      ub_rows.push_back(r);
    }
  }
  if (rs.mts) {
    for (int k = 0; k + 1 < K; ++k) {
      Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(nv);
      r(K + k + 1) = 1.0;
      r(k + 1) = -1.0;
      r(K + k) = -1.0;
      r(k) = 1.0;
      ub_rows.push_back(r);
    }
  }
  lp.A_ub = Mat::Zero(static_cast<int>(ub_rows.size()), nv);
  for (size_t i = 0; i < ub_rows.size(); ++i) lp.A_ub.row(static_cast<int>(i)) = ub_rows[i];
  lp.b_ub = Vec::Zero(static_cast<int>(ub_rows.size()));
  if (rs.bounds) {
    if (rs.bounds->first > rs.bounds->second)
      fail(ErrorKind::kInput, "gap_lp: lower outcome bound exceeds upper bound");
    lp.lb = Vec::Constant(nv, rs.bounds->first);
    lp.ub = Vec::Constant(nv, rs.bounds->second);
  } else {
    lp.lb = Vec::Constant(nv, -std::numeric_limits<double>::infinity());
  }
  const Vec ev = values_on(e, grid);
  Vec obj(nv);
  for (int k = 0; k < K; ++k) {
    obj(k) = -ev(k) * w(k);
    obj(K + k) = ev(k) * w(k);
  }
  GapBounds gb;
  gb.intervals = K;
  lp.c = obj;
  const LpResult lo = lp_solve(lp);
  lp.c = -obj;
  const LpResult hi = lp_solve(lp);
  gb.status_lo = lo.status;
  gb.status_hi = hi.status;
  gb.feasible = lo.status != LpStatus::kInfeasible;
  gb.lo = lo.status == LpStatus::kOptimal ? lo.value
          : lo.status == LpStatus::kUnbounded ? -std::numeric_limits<double>::infinity()
                                              : std::numeric_limits<double>::quiet_NaN();
  gb.hi = hi.status == LpStatus::kOptimal ? -hi.value
          : hi.status == LpStatus::kUnbounded ? std::numeric_limits<double>::infinity()
                                              : std::numeric_limits<double>::quiet_NaN();
  return gb;
}

double gmm_mte_estimand(const Vec& weights, const std::vector<WeightFn>& hs, const WeightFn& mte) {
  const WeightFn hbar = linear_combination(hs, weights);
  return inner_product(hbar, mte);
}

std::vector<LatentType> latent_types(const PropensityModel& pm) {
  std::vector<LatentType> out;
  const int K = static_cast<int>(pm.breaks.size()) - 1;
  const unsigned N = 1u << pm.joint.L;
  for (int k = 0; k < K; ++k) {
    LatentType lt;
    lt.u_left = pm.breaks(k);
    lt.u_right = pm.breaks(k + 1);
    for (unsigned z = 0; z < N; ++z) {
      const double p = pm.p_of_z(z);
      if (!std::isnan(p) && p >= lt.u_right - kDedup) lt.type |= 1u << z;
    }
    out.push_back(lt);
  }
  return out;
}

}  // namespace ivrt
