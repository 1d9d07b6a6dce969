// Acceptance driver: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <unistd.h>

#include "ivrt/compliance.hpp"
#include "ivrt/error.hpp"
#include "ivrt/gmm.hpp"
#include "ivrt/mte.hpp"
#include "ivrt/rt.hpp"
#include "ivrt/sim.hpp"
#include "oracles.hpp"

using ivrt::Mat;
using ivrt::Vec;
using oracle::LMat;
using oracle::LVec;
using oracle::Rng;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

void note(Outcome& o, const std::string& s) {
  if (!o.detail.empty()) o.detail += "; ";
  o.detail += s;
}

void require(Outcome& o, bool ok, const std::string& what) {
  if (!ok) {
    o.pass = false;
    note(o, "violated: " + what);
  }
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Positively dependent binary instruments, monotone take-up, declining gains.
ivrt::Dataset synthetic_dataset(Rng& rng, int L, int n) {
  const Vec prob = oracle::common_factor_joint(rng, L, false);
  const Vec p = oracle::monotone_propensity(rng, L);
  std::discrete_distribution<int> cell(prob.data(), prob.data() + prob.size());
  std::normal_distribution<double> nd;
  ivrt::Dataset ds;
  ds.y.resize(n);
  ds.d.resize(n);
  ds.z.resize(n, L);
  for (int l = 0; l < L; ++l) ds.instrument_names.push_back("z" + std::to_string(l + 1));
  for (int i = 0; i < n; ++i) {
    const int z = cell(rng);
    for (int l = 0; l < L; ++l) ds.z(i, l) = (z >> l) & 1;
    const double u = oracle::uniform(rng);
    ds.d(i) = u <= p(z) ? 1.0 : 0.0;
    ds.y(i) = 1.0 + nd(rng) + ds.d(i) * (8.0 - 10.0 * u + nd(rng));
  }
  return ds;
}

ivrt::StarDgpSpec to_spec(const oracle::StarDesign& s) {
  ivrt::StarDgpSpec spec;
  spec.shares = s.shares;
  spec.p = s.p;
  spec.late = s.late;
  spec.sigma2_y0 = s.s2y0;
  spec.sigma2_tau = s.s2tau;
  return spec;
}

ivrt::LatentDgpSpec to_spec(const oracle::LatentDesign& s) {
  ivrt::LatentDgpSpec spec;
  spec.joint = ivrt::make_joint(s.L, s.prob);
  spec.p_of_z = s.p_of_z;
  spec.mte = s.mte;
  spec.noise_sd = std::sqrt(s.noise_var);
  spec.sigma2_y0 = s.s2y0;
  return spec;
}

// ---------------------------------------------------------------------------

Outcome closed_form_vs_numerical() {
  Outcome o;
  Rng rng(101);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int L = 2 + rep % 5;
    const ivrt::Dataset ds = synthetic_dataset(rng, L, 2000);
    const Mat W = oracle::random_pd(rng, L);
    const ivrt::CenteredDataset cd = ivrt::center(ds);
    const ivrt::MomentSummary ms = ivrt::summarize(cd);
    const double beta = ivrt::gmm_estimate(ms, cd, W).beta;
    const oracle::RawMoments rm = oracle::raw_moments(ds);
    const double ref =
        static_cast<double>(oracle::minimize_gmm_objective(rm.cov_yz, rm.gamma, oracle::to_long(W)));
    worst = std::max(worst, rel(beta, ref));
  }
  require(o, worst <= 1e-8, "max relative gap <= 1e-8");
  note(o, fmt("max relative gap %.2e over 100 instances", worst));
  return o;
}

Outcome identity_suite() {
  Outcome o;
  Rng rng(202);
  double worst_sum = 0.0, worst_beta = 0.0;
  int checked = 0;
  for (int rep = 0; rep < 5; ++rep) {
    const int L = 2 + rep;
    const ivrt::Dataset ds = synthetic_dataset(rng, L, 3000);
    const ivrt::CenteredDataset cd = ivrt::center(ds);
    const ivrt::MomentSummary ms = ivrt::summarize(cd);
    std::vector<Mat> ws = {Mat::Identity(L, L), ms.sigma_z.inverse(),
                           ivrt::omega_at(cd, ivrt::tsls(ms, cd).beta).values.inverse()};
    for (int k = 0; k < 50; ++k) ws.push_back(oracle::random_pd(rng, L));
    for (const Mat& W : ws) {
      const ivrt::GmmResult r = ivrt::gmm_estimate(ms, cd, W);
      worst_sum = std::max(worst_sum, std::abs(r.lambda.sum() - 1.0));
      worst_beta = std::max(worst_beta, rel(r.beta, r.lambda.dot(ms.wald)));
      ++checked;
    }
  }
  require(o, worst_sum <= 1e-10, "sum of weights within 1e-10 of one");
  require(o, worst_beta <= 1e-10, "beta equals weighted Walds within 1e-10");
  note(o, fmt("%.0f weighting matrices", checked) + fmt(", |sum-1| %.2e", worst_sum) +
              fmt(", beta gap %.2e", worst_beta));
  return o;
}

Outcome wald_decomposition() {
  Outcome o;
  Rng rng(303);
  double worst = 0.0;
  int done = 0;
  while (done < 200) {
    const int L = 2 + done % 2;
    const Vec prob = oracle::common_factor_joint(rng, L, oracle::uniform(rng) < 0.3);
    ivrt::TypeTable tt = ivrt::enumerate_monotone_types(L);
    const int T = tt.size();
    tt.theta = oracle::dirichlet(rng, T);
    tt.late.resize(T);
    Vec mu(T);
    for (int t = 0; t < T; ++t) {
      tt.late(t) = oracle::uniform(rng, -10.0, 10.0);
      mu(t) = oracle::uniform(rng, -3.0, 3.0);
    }
    std::vector<std::uint32_t> types(tt.types.begin(), tt.types.end());
    Vec cov_dz;
    const Vec ref = oracle::wald_by_enumeration(L, prob, types, tt.theta, tt.late, mu, &cov_dz);
    if (cov_dz.cwiseAbs().minCoeff() < 0.02) continue;
    const Vec got = ivrt::wald_from_types(tt, ivrt::make_joint(L, prob)).wald;
    for (int l = 0; l < L; ++l) worst = std::max(worst, rel(got(l), ref(l)));
    ++done;
  }
  require(o, worst <= 1e-12, "agreement within 1e-12");
  note(o, fmt("max gap %.2e over 200 fixtures", worst));
  return o;
}

Outcome prd_theorems() {
  Outcome o;
  Rng rng(404);
  int prd_fail = 0;
  double min_alpha = 1.0, min_h = 1.0;
  for (int rep = 0; rep < 500; ++rep) {
    const int L = 2 + rep % 3;
    const Vec prob = oracle::common_factor_joint(rng, L, rep % 10 < 3);
    const ivrt::InstrumentJoint zj = ivrt::make_joint(L, prob);
    if (!ivrt::prd_check(zj).passed) ++prd_fail;
    ivrt::TypeTable tt = ivrt::enumerate_monotone_types(L);
    for (int l = 0; l < L; ++l) {
      for (int attempt = 0;; ++attempt) {
        tt.theta = oracle::dirichlet(rng, tt.size());
        try {
          min_alpha = std::min(min_alpha, ivrt::type_weights(tt, zj, l).alpha.minCoeff());
          break;
        } catch (const ivrt::Error&) {
          if (attempt > 5) throw;
        }
      }
    }
    const ivrt::PropensityModel pm = ivrt::propensity_model(zj, oracle::monotone_propensity(rng, L));
    for (const ivrt::WeightFn& h : ivrt::hv_weights(pm)) min_h = std::min(min_h, h.min_value());
  }
  require(o, prd_fail == 0, "every common-factor joint passes the PRD check");
  require(o, min_alpha >= -1e-12, "type weights nonnegative");
  require(o, min_h >= -1e-12, "MTE weights nonnegative");

  const ivrt::InstrumentJoint ce = ivrt::make_joint(2, vec({1.0 / 3, 1.0 / 3, 1.0 / 3, 0.0}));
  const double cov = ivrt::instrument_covariance(ce, 0, 1);
  require(o, std::abs(cov + 1.0 / 9.0) <= 1e-15, "counterexample covariance -1/9");
  require(o, !ivrt::prd_check(ce).passed, "counterexample fails the PRD check");
  const Vec p = vec({0.1, 0.5, 0.4, 0.8});
  // E[p | Z2 = 1] - E[p | Z2 = 0] from the cell table.
  double m1 = 0, w1 = 0, m0 = 0, w0 = 0;
  for (int z = 0; z < 4; ++z) {
    if ((z >> 1) & 1) {
      m1 += ce.prob(z) * p(z);
      w1 += ce.prob(z);
    } else {
      m0 += ce.prob(z) * p(z);
      w0 += ce.prob(z);
    }
  }
  const double numerator = ivrt::hv_weight(ivrt::propensity_model(ce, p), 1).at(0.45) * (m1 / w1 - m0 / w0);
  require(o, std::abs(numerator + 0.5) <= 1e-12, "h2 numerator at 0.45 equals -1/2");
  note(o, fmt("min alpha %.2e", min_alpha) + fmt(", min h %.2e", min_h) +
              fmt(", Cov %.17g", cov) + fmt(", numerator %.15g", numerator));
  return o;
}

Outcome egmm_fixed_point() {
  Outcome o;
  Rng rng(505);
  double worst_res = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    if (rep < 10) {
      const oracle::StarDesign s = oracle::random_star(rng, 2 + rep % 5);
      const ivrt::PopulationTargets t =
          ivrt::population_targets(ivrt::population_moments(to_spec(s)));
      const double r = std::abs(static_cast<double>(oracle::star_egmm_map(s, t.beta_egmm)) - t.beta_egmm);
      worst_res = std::max({worst_res, r, t.egmm_residual});
    } else {
      const oracle::LatentDesign s = oracle::random_latent(rng, 2 + rep % 2);
      const ivrt::PopulationTargets t =
          ivrt::population_targets(ivrt::population_moments(to_spec(s)));
      const double r =
          std::abs(static_cast<double>(oracle::latent_egmm_map(s, t.beta_egmm)) - t.beta_egmm);
      worst_res = std::max({worst_res, r, t.egmm_residual});
    }
  }
  require(o, worst_res <= 1e-10, "fixed-point residual <= 1e-10");

  double worst_fd = 0.0;
  int sign_checks = 0, sign_fail = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const int L = 2 + rep % 5;
    const Mat om = oracle::random_pd(rng, L);
    Vec gamma(L);
    for (int l = 0; l < L; ++l) gamma(l) = oracle::uniform(rng, 0.05, 1.0);
    const LVec g = oracle::to_long(gamma);
    const LVec lam = oracle::lambda_of(g, oracle::to_long(om).inverse());
    for (int l = 0; l < L; ++l) {
      const double d = ivrt::penalty_derivative(om, gamma, l);
      const long double h = 1e-5L * om(l, l);
      LMat up = oracle::to_long(om), dn = up;
      up(l, l) += h;
      dn(l, l) -= h;
      const long double fd =
          (oracle::lambda_of(g, up.inverse())(l) - oracle::lambda_of(g, dn.inverse())(l)) / (2 * h);
      worst_fd = std::max(worst_fd, static_cast<double>(std::fabs(d - fd) /
                                                        std::max(std::fabs(fd), 1e-12L)));
      if (lam(l) > 0) {
        ++sign_checks;
        if (!(d < 0.0)) ++sign_fail;
      }
    }
  }
  require(o, worst_fd <= 1e-5, "derivative within 1e-5 relative of finite differences");
  require(o, sign_fail == 0, "derivative negative whenever the weight is positive");
  note(o, fmt("max residual %.2e", worst_res) + fmt(", max FD gap %.2e", worst_fd) +
              fmt(", %.0f sign checks", sign_checks));
  return o;
}

Outcome diagonal_forms() {
  Outcome o;
  Rng rng(606);
  double worst_lambda = 0.0, worst_prop = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    const oracle::StarDesign s = oracle::random_star(rng, 3 + rep % 3);
    const ivrt::Dataset ds = ivrt::star_sample(to_spec(s), 6000, 60 + rep);
    const ivrt::CenteredDataset cd = ivrt::center(ds);
    const ivrt::MomentSummary ms = ivrt::summarize(cd);
    const double b = ivrt::tsls(ms, cd).beta;
    const ivrt::DiagonalDiagnostics dd = ivrt::diagonal_diagnostics(ms, ivrt::omega_at(cd, b));
    const oracle::RawMoments rm = oracle::raw_moments(ds, true);
    const LMat om = oracle::raw_omega(ds, b, true);
    const LVec l2 = oracle::lambda_of(rm.gamma, rm.sigma_z.inverse());
    const LVec le = oracle::lambda_of(rm.gamma, om.inverse());
    double lo = INFINITY, hi = -INFINITY;
    for (int l = 0; l < ms.L(); ++l) {
      const auto& r = dd.rows[l];
      worst_lambda = std::max({worst_lambda, std::abs(r.lambda_2sls - static_cast<double>(l2(l))),
                               std::abs(r.lambda_egmm - static_cast<double>(le(l)))});
      const double k = r.ratio * r.sigma2_eps;
      lo = std::min(lo, k);
      hi = std::max(hi, k);
    }
    worst_prop = std::max(worst_prop, hi / lo - 1.0);
  }
  require(o, worst_lambda <= 1e-10, "closed-form weights match the general formula");
  require(o, worst_prop <= 1e-10, "ratio proportional to 1/sigma2_eps");

  // Constructed fixtures: constant residual variance gives ratio one, any
  // spread moves some ratio away from one.
  int iff_fail = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const int L = 2 + rep % 4;
    ivrt::MomentSummary ms;
    ms.var_z.resize(L);
    ms.pi.resize(L);
    ms.gamma.resize(L);
    for (int l = 0; l < L; ++l) {
      ms.var_z(l) = oracle::uniform(rng, 0.05, 0.25);
      ms.pi(l) = oracle::uniform(rng, 0.1, 0.9);
      ms.gamma(l) = ms.pi(l) * ms.var_z(l);
    }
    const double c = oracle::uniform(rng, 1.0, 10.0);
    ivrt::OmegaMatrix om;
    om.values = Mat(ms.var_z.asDiagonal()) * c;
    double dev = 0.0;
    for (const auto& r : ivrt::diagonal_diagnostics(ms, om).rows) dev = std::max(dev, std::abs(r.ratio - 1));
    if (dev > 1e-12) ++iff_fail;
    om.values(0, 0) *= 1.5;
    dev = 0.0;
    for (const auto& r : ivrt::diagonal_diagnostics(ms, om).rows) dev = std::max(dev, std::abs(r.ratio - 1));
    if (dev < 1e-6) ++iff_fail;
  }
  require(o, iff_fail == 0, "equal weights exactly when residual variance is constant");
  note(o, fmt("weight gap %.2e", worst_lambda) + fmt(", proportionality gap %.2e", worst_prop));
  return o;
}

Outcome impossibility() {
  Outcome o;
  Rng rng(707);
  int strict_fail = 0, formula_fail = 0;
  double worst_hom = 0.0, worst_inv = 0.0, worst_lambda = 0.0, min_gap = INFINITY;
  for (int rep = 0; rep < 50; ++rep) {
    Vec gamma, wald;
    std::function<LMat(long double)> omega_of;
    oracle::StarDesign star;
    oracle::LatentDesign lat;
    if (rep % 2 == 0) {
      star = oracle::random_star(rng, 3 + rep % 3);
      gamma = oracle::star_gamma(star);
      wald = star.late;
      omega_of = [&star](long double b) { return LMat(oracle::star_omega_diag(star, b).cast<long double>().asDiagonal()); };
    } else {
      lat = oracle::random_latent(rng, 2 + rep % 2);
      wald = oracle::latent_wald(lat, &gamma);
      omega_of = [&lat](long double b) { return oracle::latent_omega(lat, b); };
    }
    const int L = static_cast<int>(gamma.size());
    const LVec g = oracle::to_long(gamma);
    for (int k = 0; k < 10; ++k) {
      Vec w;
      LMat om;
      LVec le;
      do {
        w = oracle::dirichlet(rng, L);
        om = omega_of(w.dot(wald));
        le = oracle::lambda_of(g, om.inverse());
      } while ((oracle::to_long(w) - le).cwiseAbs().maxCoeff() < 1e-3);
      const ivrt::ConstrainedVariance cv = ivrt::constrained_variance(w, gamma, om.cast<double>());
      long double vc = 0.0L;
      for (int i = 0; i < L; ++i)
        for (int j = 0; j < L; ++j) vc += w(i) * w(j) * om(i, j) / (g(i) * g(j));
      const long double fl = 1.0L / g.dot(om.ldlt().solve(g));
      if (rel(cv.v_constrained, vc) > 1e-10 || rel(cv.v_floor, fl) > 1e-10) ++formula_fail;
      if (!(cv.v_constrained > cv.v_floor * (1 + 1e-12))) ++strict_fail;
      min_gap = std::min(min_gap, cv.v_constrained / cv.v_floor - 1.0);
    }
    // Residual variance held fixed, target set to the efficient weights.
    const LMat om = omega_of(ivrt::ew_weights(L).dot(wald));
    const Vec le = oracle::lambda_of(g, om.inverse()).cast<double>();
    const ivrt::ConstrainedVariance cv = ivrt::constrained_variance(le, gamma, om.cast<double>());
    worst_hom = std::max(worst_hom, (cv.v_constrained - cv.v_floor) / cv.v_floor);

    Vec w = oracle::dirichlet(rng, L);
    if (rep % 5 == 0) {
      w(0) = 0.0;
      w /= w.sum();
    }
    const Mat W1 = ivrt::targeting_matrix(w, gamma);
    const Mat P = Mat::Identity(L, L) - gamma * gamma.transpose() / gamma.squaredNorm();
    const Mat W2 = W1 + P * oracle::random_pd(rng, L) * P;
    worst_lambda = std::max({worst_lambda, (ivrt::lambda_weights(gamma, W1) - w).cwiseAbs().maxCoeff(),
                             (ivrt::lambda_weights(gamma, W2) - w).cwiseAbs().maxCoeff()});
    const Mat omd = om.cast<double>();
    const double s1 = ivrt::sandwich_variance(gamma, W1, omd);
    const double s2 = ivrt::sandwich_variance(gamma, W2, omd);
    worst_inv = std::max(worst_inv, std::abs(s1 - s2) / s1);
  }
  require(o, formula_fail == 0, "variance and floor match direct evaluation");
  require(o, strict_fail == 0, "constrained variance strictly above the floor");
  require(o, worst_hom <= 1e-8, "floor attained at the efficient weights");
  require(o, worst_lambda <= 1e-8, "targeting matrices reproduce the target weights");
  require(o, worst_inv <= 1e-10, "sandwich invariant across targeting matrices");
  note(o, fmt("min relative excess %.2e", min_gap) + fmt(", gap at efficient weights %.2e", worst_hom) +
              fmt(", sandwich spread %.2e", worst_inv));
  return o;
}

Outcome rt_coverage() {
  Outcome o;
  ivrt::StarDgpSpec het;
  het.shares = vec({0.3, 0.3, 0.4});
  het.p = vec({0.5, 0.4, 0.6});
  het.late = vec({2.0, 5.0, 9.0});
  het.sigma2_y0 = vec({4.0, 5.0, 6.0});
  het.sigma2_tau = vec({1.0, 4.0, 9.0});
  ivrt::StarDgpSpec hom = het;
  hom.late = vec({5.0, 5.0, 5.0});

  auto run = [](const ivrt::StarDgpSpec& s, std::uint64_t seed) {
    const ivrt::PopulationTargets t = ivrt::population_targets(ivrt::population_moments(s));
    const ivrt::Sampler sampler = [s](int n, std::uint64_t sd, std::uint64_t stream) {
      return ivrt::star_sample(s, n, sd, stream);
    };
    ivrt::McConfig cfg;
    cfg.R = 2000;
    cfg.n = 4000;
    cfg.seed = seed;
    cfg.estimators.push_back(ivrt::McEstimator::kRtCustom);
    cfg.custom_omega = t.omega_csw;
    return ivrt::monte_carlo(sampler, t, cfg);
  };
  const ivrt::McReport a = run(het, 2024);
  const ivrt::McReport b = run(hom, 2025);
  // Fixed target weights: EW and the population CSW vector.  The plug-in
  // CSW row re-estimates its weights each replication and is only reported.
  for (const ivrt::McRow& r : a.rows) {
    if (r.estimator.rfind("rt_", 0) != 0) continue;
    if (r.estimator != "rt_csw")
      require(o, r.coverage >= 0.93 && r.coverage <= 0.97, r.estimator + " coverage in [0.93, 0.97]");
    note(o, r.estimator + fmt(" coverage %.4f", r.coverage));
  }
  require(o, a.j_reject_rate == 1.0, "J rejection rate 1.00 under heterogeneity");
  require(o, b.j_reject_rate >= 0.03 && b.j_reject_rate <= 0.08,
          "J rejection rate in [0.03, 0.08] under homogeneity");
  note(o, fmt("J rate %.4f heterogeneous", a.j_reject_rate) +
              fmt(", %.4f homogeneous", b.j_reject_rate));
  return o;
}

Outcome frontier() {
  Outcome o;
  Rng rng(909);
  const int L = 4;
  ivrt::GammaWald gw;
  gw.values = oracle::random_pd(rng, L);
  Vec wald(L);
  for (int l = 0; l < L; ++l) wald(l) = oracle::uniform(rng, -2.0, 6.0);
  const ivrt::FrontierCurve fc = ivrt::variance_frontier(gw, wald, 2001);
  const double scale = gw.values.diagonal().maxCoeff();
  double worst_slack = INFINITY;
  for (int k = 0; k < 1000; ++k) {
    const Vec w = oracle::dirichlet(rng, L);
    const double v = w.dot(gw.values * w);
    worst_slack = std::min(worst_slack, (v - fc.interpolate(w.dot(wald))) / scale);
  }
  require(o, worst_slack >= -1e-6, "RT variance above the interpolated frontier");

  const Mat G3 = oracle::random_pd(rng, 3);
  const Vec w3 = vec({-1.0, 2.5, 7.0});
  double worst_grid = 0.0, worst_under = 0.0;
  for (int k = 1; k < 50; ++k) {
    const double beta = w3.minCoeff() + (w3.maxCoeff() - w3.minCoeff()) * k / 50.0;
    const double v = ivrt::frontier_at(G3, w3, beta).v_min;
    const double ref = oracle::frontier_grid_search(G3, w3, beta, 1000);
    worst_grid = std::max(worst_grid, std::abs(v - ref));
    worst_under = std::max(worst_under, v - ref);
  }
  require(o, worst_grid <= 1e-4, "L = 3 frontier within 1e-4 of grid search");
  require(o, worst_under <= 1e-10, "frontier never above the grid minimum");

  double worst_cost = 0.0;
  for (int k = 0; k < 100; ++k) {
    ivrt::GammaWald g2;
    g2.values = oracle::random_pd(rng, 2);
    const Vec wd = vec({oracle::uniform(rng, -3, 0), oracle::uniform(rng, 1, 4)});
    const ivrt::EfficiencyDecomposition ed = ivrt::efficiency_decomposition(oracle::dirichlet(rng, 2), g2, wd);
    worst_cost = std::max(worst_cost, std::abs(ed.composition_cost) / g2.values.diagonal().maxCoeff());
  }
  require(o, worst_cost <= 1e-10, "L = 2 composition cost zero");
  note(o, fmt("min scaled slack %.2e", worst_slack) + fmt(", grid gap %.2e", worst_grid) +
              fmt(", L=2 cost %.2e", worst_cost));
  return o;
}

Outcome prte() {
  Outcome o;
  Rng rng(1010);
  const ivrt::PropensityModel pm =
      ivrt::propensity_model(ivrt::make_joint(2, vec({0.25, 0.25, 0.25, 0.25})), vec({0.1, 0.5, 0.4, 0.8}));
  const std::vector<ivrt::WeightFn> hs = ivrt::hv_weights(pm);
  const ivrt::WeightFn wp = ivrt::linear_combination(hs, vec({0.3, 0.7}));
  const ivrt::PrteTarget t = ivrt::prte_target(hs, wp, oracle::random_pd(rng, 2));
  const ivrt::WeightFn err = ivrt::linear_combination({ivrt::composite_weight(t.omega, hs), wp}, vec({1, -1}));
  const double l2 = std::sqrt(static_cast<double>(oracle::integrate_product(err, err)));
  require(o, l2 <= 1e-8 && t.l2_error <= 1e-8, "L2 error <= 1e-8");
  require(o, (t.omega - vec({0.3, 0.7})).cwiseAbs().maxCoeff() <= 1e-6, "weights (0.3, 0.7)");
  note(o, fmt("L2 error %.2e", l2));

  // Reference bounds: 0.007 at M = 15.9 and 0.020 at M = 47.7 for an error
  // norm printed as 0.0015.  Any norm that prints as 0.0015 lies in
  // [0.00145, 0.00155); the reference values must be reachable from it.
  const double b1 = ivrt::gap_lipschitz(15.9, 0.0015), b3 = ivrt::gap_lipschitz(3 * 15.9, 0.0015);
  const double k = 1.0 / (2.0 * std::sqrt(3.0));
  require(o, std::abs(b1 - 15.9 * 0.0015 * k) <= 1e-15 && std::abs(b3 - 47.7 * 0.0015 * k) <= 1e-15,
          "Lipschitz bound formula");
  auto reachable = [](double M, double reference) {
    const double lo = ivrt::gap_lipschitz(M, 0.00145), hi = ivrt::gap_lipschitz(M, 0.00155);
    return reference >= lo && reference < hi;
  };
  require(o, reachable(15.9, 0.007) && reachable(3 * 15.9, 0.020), "reference Lipschitz bounds reproduced");
  note(o, fmt("bounds %.6f", b1) + fmt(" and %.6f at norm 0.0015", b3));

  int outside = 0, infeasible = 0;
  double worst_wald = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const bool shaped = rep % 2 == 1;
    const oracle::LatentDesign s = oracle::random_latent(rng, 2 + rep % 2, shaped);
    const Vec wald = oracle::latent_wald(s);
    const ivrt::PropensityModel m = ivrt::propensity_model(ivrt::make_joint(s.L, s.prob), s.p_of_z);
    const std::vector<ivrt::WeightFn> h = ivrt::hv_weights(m);
    for (int l = 0; l < s.L; ++l)
      worst_wald = std::max(worst_wald, rel(static_cast<double>(oracle::integrate_product(s.mte, h[l])), wald(l)));
    ivrt::PolicyPair pp;
    pp.status_quo = ivrt::propensity_law(m);
    pp.counterfactual = pp.status_quo;
    for (int i = 0; i < pp.counterfactual.values.size(); ++i)
      pp.counterfactual.values(i) = std::min(1.0, pp.counterfactual.values(i) + 0.05);
    const ivrt::WeightFn e =
        ivrt::linear_combination({ivrt::composite_weight(ivrt::ew_weights(s.L), h), ivrt::prte_weight(pp)}, vec({1, -1}));
    const double delta = static_cast<double>(oracle::integrate_product(s.mte, e));
    ivrt::GapRestrictions r;
    r.bounds = std::make_pair(std::min(0.0, s.mte.values.minCoeff()) - 1.0,
                              std::max(0.0, s.mte.values.maxCoeff()) + 1.0);
    r.mtr = shaped;
    r.mts = shaped;
    const ivrt::GapBounds gb = ivrt::gap_lp(wald, h, e, r);
    if (!gb.feasible) {
      ++infeasible;
      continue;
    }
    if (delta < gb.lo - 1e-9 || delta > gb.hi + 1e-9) ++outside;
  }
  require(o, worst_wald <= 1e-10, "Wald ratios equal the MTE integrals");
  require(o, infeasible == 0, "identified-set programs feasible");
  require(o, outside == 0, "true gap inside [lo, hi] on 20 designs");
  return o;
}

Outcome compliance_counts() {
  Outcome o;
  const int expected[] = {3, 6, 20, 168};
  std::string counts;
  for (int L = 1; L <= 4; ++L) {
    const int got = ivrt::enumerate_monotone_types(L).size();
    require(o, got == expected[L - 1] && got == oracle::count_monotone(L),
            "count for L = " + std::to_string(L));
    counts += (L > 1 ? "/" : "") + std::to_string(got);
  }
  note(o, "counts " + counts);
  return o;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome determinism() {
  Outcome o;
  namespace fs = std::filesystem;
  const fs::path base = fs::temp_directory_path() / ("ivrt_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(base);
  std::string reports[2], tables[2];
  for (int k = 0; k < 2; ++k) {
    const fs::path dir = base / std::to_string(k);
    fs::create_directories(dir);
    const std::string cmd = std::string("\"") + IVRT_CLI_PATH + "\" simulate --spec \"" +
                            IVRT_FIXTURE_DIR + "/star_spec.json\" -R 300 -n 2000 --seed 99 --out \"" +
                            dir.string() + "\" > /dev/null";
    const int rc = std::system(cmd.c_str());
    require(o, rc == 0, "simulate exits 0");
    reports[k] = slurp(dir / "mc_report.json");
    tables[k] = slurp(dir / "mc_report.csv");
  }
  fs::remove_all(base);
  require(o, !reports[0].empty() && reports[0] == reports[1], "reports byte-identical");
  require(o, !tables[0].empty() && tables[0] == tables[1], "tables byte-identical");
  note(o, fmt("report %.0f bytes", static_cast<double>(reports[0].size())));
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  Outcome (*fn)();
};

}  // namespace

int main() {
  const Criterion all[] = {
      {1, "closed form vs numerical minimisation", 10, closed_form_vs_numerical},
      {2, "weight identities", 5, identity_suite},
      {3, "Wald decomposition", 10, wald_decomposition},
      {4, "positive dependence", 20, prd_theorems},
      {5, "efficient GMM fixed point and penalty", 10, egmm_fixed_point},
      {6, "diagonal closed forms", 1, diagonal_forms},
      {7, "impossibility", 10, impossibility},
      {8, "RT coverage and J rejection", 300, rt_coverage},
      {9, "variance frontier", 30, frontier},
      {10, "PRTE targeting and gap bounds", 60, prte},
      {11, "compliance type counts", 1, compliance_counts},
      {12, "determinism", 120, determinism},
  };
  int failed = 0;
  for (const Criterion& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.fn();
    } catch (const std::exception& e) {
      out.pass = false;
      note(out, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs >= c.budget_s) {
      out.pass = false;
      note(out, fmt("over the %.0f s budget", c.budget_s));
    }
    std::printf("criterion %2d %s: %s (%.2f s) %s\n", c.id, out.pass ? "PASS" : "FAIL", c.name, secs,
                out.detail.c_str());
    std::fflush(stdout);
    failed += !out.pass;
  }
  std::printf("%d of 12 criteria passed\n", 12 - failed);
  return failed == 0 ? 0 : 1;
}
