#include "ivrt/rt.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "ivrt/error.hpp"
#include "ivrt/gmm.hpp"
#include "ivrt/optim.hpp"

namespace ivrt {

RtResult rt_estimate(const MomentSummary& ms, const GammaWald& gw, const Vec& omega) {
  const int L = ms.L();
  if (omega.size() != L) fail(ErrorKind::kInput, "rt_estimate: weight vector has wrong length");
  require_simplex(omega, "rt_estimate");
  for (int l = 0; l < L; ++l) {
    if (omega(l) > 0.0 && !std::isfinite(ms.wald(l))) {
      std::ostringstream os;
      os << "rt_estimate: Wald ratio of instrument " << l + 1 << " is undefined";
      fail(ErrorKind::kRelevance, os.str());
    }
  }
  RtResult r;
  r.omega = omega;
  r.per_wald = ms.wald;
  r.beta = 0.0;
  for (int l = 0; l < L; ++l)
    if (omega(l) != 0.0) r.beta += omega(l) * ms.wald(l);
  r.variance = omega.dot(gw.values * omega);
  r.se = std::sqrt(std::max(r.variance, 0.0) / ms.n);
  r.gamma_wald = gw;
  r.n = ms.n;
  return r;
}

Vec csw_weights(const Vec& gamma) {
  for (int l = 0; l < gamma.size(); ++l) {
    if (!(gamma(l) > 0.0)) {
      std::ostringstream os;
      os << "csw_weights: instrument " << l + 1
         << " has a nonpositive first stage; flip its coding first";
      fail(ErrorKind::kRelevance, os.str());
    }
  }
  return gamma / gamma.sum();
}

Vec csw_weights(const MomentSummary& ms) { return csw_weights(ms.gamma); }

Vec ew_weights(int L) {
  if (L < 1) fail(ErrorKind::kInput, "ew_weights: L must be positive");
  return Vec::Constant(L, 1.0 / L);
}

double FrontierCurve::interpolate(double b) const {
  const int m = static_cast<int>(grid.size());
  if (m == 0 || b < grid(0) || b > grid(m - 1)) return std::numeric_limits<double>::quiet_NaN();
  if (m == 1) return v_min(0);
  int k = 0;
  while (k < m - 2 && b > grid(k + 1)) ++k;
  const double t = (b - grid(k)) / (grid(k + 1) - grid(k));
  return (1.0 - t) * v_min(k) + t * v_min(k + 1);
}

FrontierPoint frontier_at(const Mat& gamma, const Vec& wald, double beta_star) {
  QpProblem p;
  p.Q = gamma;
  p.c = Vec::Zero(gamma.rows());
  p.extra_eq = LinearEquality{wald, beta_star};
  const QpResult r = simplex_qp(p);
  return {r.value, r.x};
}

FrontierCurve variance_frontier(const GammaWald& gw, const Vec& wald, int grid_size) {
  const int L = static_cast<int>(wald.size());
  if (grid_size < 2) fail(ErrorKind::kInput, "variance_frontier: grid_size must be at least 2");
  if (gw.values.rows() != L) fail(ErrorKind::kInput, "variance_frontier: shape mismatch");
  for (int l = 0; l < L; ++l)
    if (!std::isfinite(wald(l))) fail(ErrorKind::kRelevance, "variance_frontier: undefined Wald");
  const double lo = wald.minCoeff();
  const double hi = wald.maxCoeff();
  if (!(hi - lo > 1e-12 * std::max(1.0, wald.lpNorm<Eigen::Infinity>())))
    fail(ErrorKind::kInput, "variance_frontier: all Wald ratios are equal");
  const PsdRepair rep = psd_clip(gw.values);
  FrontierCurve fc;
  fc.psd_clip = rep.clipped;
  std::vector<double> g, v;
  std::vector<Vec> w;
  for (int k = 0; k < grid_size; ++k) {
    const double b = k == grid_size - 1 ? hi : lo + (hi - lo) * k / (grid_size - 1);
    try {
      FrontierPoint fp = frontier_at(rep.matrix, wald, b);
      g.push_back(b);
      v.push_back(fp.v_min);
      w.push_back(fp.omega);
    } catch (const Error& e) {
      std::ostringstream os;
      os << "variance_frontier: grid point " << k << ": " << e.what();
      fail(e.kind(), os.str());
    }
  }
  const int m = static_cast<int>(g.size());
  fc.grid = Eigen::Map<Vec>(g.data(), m);
  fc.v_min = Eigen::Map<Vec>(v.data(), m);
  fc.omega_star.resize(m, L);
  for (int k = 0; k < m; ++k) fc.omega_star.row(k) = w[k].transpose();
  return fc;
}

EfficiencyDecomposition efficiency_decomposition(const Vec& omega, const GammaWald& gw,
                                                 const Vec& wald) {
  require_simplex(omega, "efficiency_decomposition");
  EfficiencyDecomposition ed;
  ed.beta_star = omega.dot(wald);
  ed.v_rt = omega.dot(gw.values * omega);
  const PsdRepair rep = psd_clip(gw.values);
  const FrontierPoint fp = frontier_at(rep.matrix, wald, ed.beta_star);
  ed.frontier_part = fp.v_min;
  ed.frontier_omega = fp.omega;
  ed.composition_cost = ed.v_rt - ed.frontier_part;
  return ed;
}

StratifiedRt rt_stratified(const Dataset& ds, const Vec& omega, StratMode mode,
                           int min_cell_size, bool cluster) {
  if (!ds.cell) fail(ErrorKind::kSchema, "rt_stratified: dataset has no cell labels");
  require_simplex(omega, "rt_stratified");
  std::map<long long, std::vector<int>> rows;
  for (int i = 0; i < ds.n(); ++i) rows[(*ds.cell)[i]].push_back(i);
  StratifiedRt out;
  const int L = ds.L();
  const double n = ds.n();
  std::vector<double> shares;
  for (const auto& [label, idx] : rows) {
    if (static_cast<int>(idx.size()) < min_cell_size) {
      std::ostringstream os;
      os << "rt_stratified: cell " << label << " has " << idx.size()
         << " rows, below the minimum of " << min_cell_size;
      fail(ErrorKind::kInput, os.str());
    }
    try {
      const CenteredDataset cd = center(subset_rows(ds, idx));
      const MomentSummary ms = summarize(cd);
      const GammaWald gw = gamma_wald(cd, ms, cluster);
      out.cells.push_back({label, static_cast<int>(idx.size()), rt_estimate(ms, gw, omega)});
    } catch (const Error& e) {
      std::ostringstream os;
      os << "rt_stratified: cell " << label << ": " << e.what();
      fail(e.kind(), os.str());
    }
    shares.push_back(idx.size() / n);
  }
  if (mode == StratMode::kConditional) return out;

  RtResult m;
  m.omega = omega;
  m.n = ds.n();
  m.per_wald = Vec::Zero(L);
  out.gamma_within = Mat::Zero(L, L);
  for (size_t c = 0; c < out.cells.size(); ++c) {
    m.beta += shares[c] * out.cells[c].rt.beta;
    m.per_wald += shares[c] * out.cells[c].rt.per_wald;
    out.gamma_within += shares[c] * out.cells[c].rt.gamma_wald.values;
  }
  out.gamma_between = Mat::Zero(L, L);
  for (size_t c = 0; c < out.cells.size(); ++c) {
    const Vec dev = out.cells[c].rt.per_wald - m.per_wald;
    out.gamma_between += shares[c] * dev * dev.transpose();
  }
  m.gamma_wald.values = out.gamma_within + out.gamma_between;
  m.gamma_wald.cluster_robust = cluster;
  m.variance = omega.dot(m.gamma_wald.values * omega);
  m.se = std::sqrt(std::max(m.variance, 0.0) / n);
  out.marginal = m;
  return out;
}

}  // namespace ivrt
