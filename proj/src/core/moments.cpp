#include "ivrt/moments.hpp"

#include <cmath>
#include <limits>
#include <unordered_map>

#include "ivrt/error.hpp"

namespace ivrt {
namespace {

constexpr double kZeroGamma = 1e-14;

// Sum of per-row score rows, either row by row or aggregated by cluster, as
// an outer product divided by n.
Mat score_outer(const Mat& scores, const CenteredDataset& cd, bool cluster) {
  const double n = static_cast<double>(scores.rows());
  if (!cluster) return scores.transpose() * scores / n;
  if (!cd.cluster)
    fail(ErrorKind::kSchema, "cluster-robust variance requested without cluster labels");
  std::unordered_map<long long, int> idx;
  std::vector<int> ci(scores.rows());
  for (int i = 0; i < scores.rows(); ++i) {
    auto it = idx.find((*cd.cluster)[i]);
    if (it == idx.end())
      it = idx.emplace((*cd.cluster)[i], static_cast<int>(idx.size())).first;
    ci[i] = it->second;
  }
  Mat sums = Mat::Zero(static_cast<int>(idx.size()), scores.cols());
  for (int i = 0; i < scores.rows(); ++i) sums.row(ci[i]) += scores.row(i);
  return sums.transpose() * sums / n;
}

}  // namespace

MomentSummary summarize(const CenteredDataset& cd) {
  MomentSummary ms;
  const int n = cd.n();
  const int L = cd.L();
  const double dn = static_cast<double>(n);
  ms.n = n;
  ms.p = cd.p_hat;
  ms.sigma_z = cd.z_c.transpose() * cd.z_c / dn;
  ms.var_z = ms.sigma_z.diagonal();
  ms.gamma = cd.z_c.transpose() * cd.d_c / dn;
  ms.cov_yz = cd.z_c.transpose() * cd.y_c / dn;
  ms.pi = ms.gamma.cwiseQuotient(ms.var_z);
  ms.rho = ms.cov_yz.cwiseQuotient(ms.var_z);
  ms.wald.resize(L);
  for (int l = 0; l < L; ++l) {
    if (std::abs(ms.gamma(l)) <= kZeroGamma) {
      ms.wald(l) = std::numeric_limits<double>::quiet_NaN();
      ms.undefined_wald.push_back(l);
    } else {
      ms.wald(l) = ms.cov_yz(l) / ms.gamma(l);
    }
  }
  return ms;
}

void require_defined_wald(const MomentSummary& ms, const std::vector<std::string>& names) {
  if (ms.undefined_wald.empty()) return;
  const int l = ms.undefined_wald.front();
  const std::string name =
      l < static_cast<int>(names.size()) ? names[l] : "z" + std::to_string(l + 1);
  fail(ErrorKind::kRelevance,
       "instrument " + name + " has zero first stage; its Wald ratio is undefined");
}

CenteredDataset drop_undefined_wald(const CenteredDataset& cd, const MomentSummary& ms,
                                    std::vector<std::string>& warnings) {
  if (ms.undefined_wald.empty()) return cd;
  for (int l : ms.undefined_wald) {
    const std::string name = l < static_cast<int>(cd.instrument_names.size())
                                 ? cd.instrument_names[l]
                                 : "z" + std::to_string(l + 1);
    warnings.push_back("dropped instrument " + name + ": zero first stage");
  }
  return drop_instruments(cd, ms.undefined_wald);
}

OmegaMatrix omega_at(const CenteredDataset& cd, double beta, bool cluster) {
  const Vec r = cd.y_c - beta * cd.d_c;
  const Mat scores = r.asDiagonal() * cd.z_c;
  OmegaMatrix om;
  om.values = score_outer(scores, cd, cluster);
  om.beta_at = beta;
  om.cluster_robust = cluster;
  return om;
}

GammaWald gamma_wald(const CenteredDataset& cd, const MomentSummary& ms, bool cluster) {
  require_defined_wald(ms, cd.instrument_names);
  const int n = cd.n();
  const int L = cd.L();
  Mat scores(n, L);
  for (int l = 0; l < L; ++l) {
    Vec eps = cd.y_c - ms.wald(l) * cd.d_c;
    eps.array() -= eps.mean();
    scores.col(l) = eps.cwiseProduct(cd.z_c.col(l));
  }
  GammaWald gw;
  const Mat raw = score_outer(scores, cd, cluster);
  const Vec inv = ms.gamma.cwiseInverse();
  gw.values = inv.asDiagonal() * raw * inv.asDiagonal();
  gw.values = 0.5 * (gw.values + gw.values.transpose());
  gw.cluster_robust = cluster;
  return gw;
}

}  // namespace ivrt
