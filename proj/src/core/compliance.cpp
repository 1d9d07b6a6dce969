#include "ivrt/compliance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "ivrt/error.hpp"

namespace ivrt {
namespace {

// Monotone maps on {0,1}^dim built from pairs f0 <= f1 on one dimension less.
std::vector<TypeMask> monotone_maps(int dim) {
  std::vector<TypeMask> cur = {0u, 1u};
  for (int d = 1; d <= dim; ++d) {
    const int half = 1 << (d - 1);
    std::vector<TypeMask> next;
    for (TypeMask f0 : cur)
      for (TypeMask f1 : cur)
        if ((f0 & ~f1) == 0u) next.push_back(f0 | (f1 << half));
    std::sort(next.begin(), next.end());
    cur.swap(next);
  }
  return cur;
}

// Index of z with bit ell removed.
unsigned drop_bit(unsigned z, int ell) {
  const unsigned low = z & ((1u << ell) - 1u);
  const unsigned high = (z >> (ell + 1)) << ell;
  return low | high;
}

}  // namespace

bool is_monotone(TypeMask t, int L) {
  const unsigned N = 1u << L;
  for (unsigned z = 0; z < N; ++z) {
    if (!takes_up(t, z)) continue;
    for (int l = 0; l < L; ++l)
      if (!takes_up(t, z | (1u << l))) return false;
  }
  return true;
}

TypeTable enumerate_monotone_types(int L) {
  if (L < 1) fail(ErrorKind::kInput, "enumerate_monotone_types: L must be at least 1");
  if (L > 5) fail(ErrorKind::kCapacity, "enumerate_monotone_types: L > 5 exceeds capacity");
  TypeTable tt;
  tt.L = L;
  tt.types = monotone_maps(L);
  return tt;
}

std::vector<TypeMask> upper_sets(int dim) {
  if (dim < 0 || dim > 4) fail(ErrorKind::kCapacity, "upper_sets: dimension must be in [0, 4]");
  return monotone_maps(dim);
}

double InstrumentJoint::marginal(int l) const {
  double p = 0.0;
  for (int z = 0; z < prob.size(); ++z)
    if ((z >> l) & 1) p += prob(z);
  return p;
}

InstrumentJoint make_joint(int L, const Vec& prob) {
  if (L < 1 || L > 20) fail(ErrorKind::kInput, "make_joint: L out of range");
  if (prob.size() != (1 << L)) fail(ErrorKind::kInput, "make_joint: need 2^L probabilities");
  for (int i = 0; i < prob.size(); ++i)
    if (!(prob(i) >= 0.0)) fail(ErrorKind::kInput, "make_joint: negative probability");
  if (std::abs(prob.sum() - 1.0) > 1e-12)
    fail(ErrorKind::kInput, "make_joint: probabilities do not sum to 1");
  return {L, prob};
}

InstrumentJoint empirical_joint(const Dataset& ds) {
  const int L = ds.L();
  if (L > 20) fail(ErrorKind::kCapacity, "empirical_joint: too many instruments");
  Vec counts = Vec::Zero(1 << L);
  for (int i = 0; i < ds.n(); ++i) {
    unsigned z = 0;
    for (int l = 0; l < L; ++l)
      if (ds.z(i, l) != 0.0) z |= 1u << l;
    counts(z) += 1.0;
  }
  return {L, counts / static_cast<double>(ds.n())};
}

double instrument_covariance(const InstrumentJoint& zj, int l, int k) {
  double both = 0.0;
  for (int z = 0; z < zj.prob.size(); ++z)
    if (((z >> l) & 1) && ((z >> k) & 1)) both += zj.prob(z);
  return both - zj.marginal(l) * zj.marginal(k);
}

TypeWeights type_weights(const TypeTable& tt, const InstrumentJoint& zj, int ell) {
  const int L = zj.L;
  if (tt.L != L) fail(ErrorKind::kInput, "type_weights: dimension mismatch");
  if (ell < 0 || ell >= L) fail(ErrorKind::kInput, "type_weights: instrument index out of range");
  if (tt.theta.size() != tt.size()) fail(ErrorKind::kInput, "type_weights: theta not set");
  const double p = zj.marginal(ell);
  if (!(p > 0.0 && p < 1.0)) {
    std::ostringstream os;
    os << "type_weights: P(Z_" << ell + 1 << " = 1) must lie in (0, 1)";
    fail(ErrorKind::kRelevance, os.str());
  }
  const unsigned N = 1u << L;
  const unsigned bit = 1u << ell;
  const int T = tt.size();
  TypeWeights tw;
  tw.phi_d = Vec::Zero(T);
  tw.phi_i = Vec::Zero(T);
  for (unsigned z0 = 0; z0 < N; ++z0) {
    if (z0 & bit) continue;
    const unsigned z1 = z0 | bit;
    const double q1 = zj.prob(z1) / p;
    const double q0 = zj.prob(z0) / (1.0 - p);
    for (int t = 0; t < T; ++t) {
      const double on = takes_up(tt.types[t], z1) ? 1.0 : 0.0;
      const double off = takes_up(tt.types[t], z0) ? 1.0 : 0.0;
      tw.phi_d(t) += (on - off) * q1;
      tw.phi_i(t) += off * (q1 - q0);
    }
  }
  tw.phi = tw.phi_d + tw.phi_i;
  tw.pi = tt.theta.dot(tw.phi);
  if (std::abs(tw.pi) <= 1e-14) {
    std::ostringstream os;
    os << "type_weights: first stage of instrument " << ell + 1 << " is zero";
    fail(ErrorKind::kRelevance, os.str());
  }
  tw.alpha = tt.theta.cwiseProduct(tw.phi) / tw.pi;
  return tw;
}

Mat alpha_matrix(const TypeTable& tt, const InstrumentJoint& zj) {
  Mat A(zj.L, tt.size());
  for (int l = 0; l < zj.L; ++l) A.row(l) = type_weights(tt, zj, l).alpha.transpose();
  return A;
}

Vec composite_type_weights(const Mat& alpha, const Vec& weights) {
  if (weights.size() != alpha.rows())
    fail(ErrorKind::kInput, "composite_type_weights: weight vector has wrong length");
  if (std::abs(weights.sum() - 1.0) > 1e-10)
    fail(ErrorKind::kInput, "composite_type_weights: weights must sum to 1");
  return alpha.transpose() * weights;
}

WaldFromTypes wald_from_types(const TypeTable& tt, const InstrumentJoint& zj) {
  if (tt.late.size() != tt.size()) fail(ErrorKind::kInput, "wald_from_types: LATE not set");
  WaldFromTypes w;
  const int L = zj.L;
  w.wald.resize(L);
  w.pi.resize(L);
  w.rho.resize(L);
  for (int l = 0; l < L; ++l) {
    const TypeWeights tw = type_weights(tt, zj, l);
    w.pi(l) = tw.pi;
    w.rho(l) = tt.theta.cwiseProduct(tw.phi).dot(tt.late);
    w.wald(l) = tw.alpha.dot(tt.late);
  }
  return w;
}

PrdReport prd_check(const InstrumentJoint& zj, double tol) {
  const int L = zj.L;
  if (L > 5) fail(ErrorKind::kCapacity, "prd_check: exact test supports L <= 5");
  PrdReport rep;
  rep.tolerance = tol;
  rep.worst_margin = Vec::Constant(L, std::numeric_limits<double>::quiet_NaN());
  const std::vector<TypeMask> sets = upper_sets(L - 1);
  rep.upper_sets_checked = static_cast<int>(sets.size());
  const unsigned N = 1u << L;
  const unsigned M = 1u << (L - 1);
  bool any = false;
  for (int l = 0; l < L; ++l) {
    const double p = zj.marginal(l);
    if (!(p > 0.0 && p < 1.0)) {
      rep.undefined.push_back(l);
      continue;
    }
    std::vector<double> c1(M, 0.0), c0(M, 0.0);
    for (unsigned z = 0; z < N; ++z) {
      const unsigned r = drop_bit(z, l);
      if ((z >> l) & 1u)
        c1[r] += zj.prob(z) / p;
      else
        c0[r] += zj.prob(z) / (1.0 - p);
    }
    double worst = std::numeric_limits<double>::infinity();
    TypeMask worst_set = 0;
    for (TypeMask U : sets) {
      double m = 0.0;
      for (unsigned r = 0; r < M; ++r)
        if (takes_up(U, r)) m += c1[r] - c0[r];
      if (m < worst) {
        worst = m;
        worst_set = U;
      }
    }
    rep.worst_margin(l) = worst;
    if (!any || worst < rep.worst) {
      rep.worst = worst;
      rep.worst_ell = l;
      rep.worst_set = worst_set;
      any = true;
    }
  }
  rep.passed = rep.undefined.empty() && any && rep.worst >= -tol;
  return rep;
}

}  // namespace ivrt
