#include "ivrt/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "ivrt/error.hpp"
#include "ivrt/gmm.hpp"
#include "ivrt/moments.hpp"
#include "ivrt/optim.hpp"
#include "ivrt/rng.hpp"
#include "ivrt/rt.hpp"

namespace ivrt {
namespace {

// Integral of f^power over [0, p] for a piecewise-constant f.
double partial_integral(const WeightFn& f, double p, int power) {
  double s = 0.0;
  for (int k = 0; k < f.intervals(); ++k) {
    const double a = f.breaks(k);
    const double b = std::min(f.breaks(k + 1), p);
    if (b <= a) break;
    s += std::pow(f.values(k), power) * (b - a);
  }
  return s;
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = q / 100.0 * (v.size() - 1);
  const size_t i = static_cast<size_t>(std::floor(pos));
  const double frac = pos - i;
  if (i + 1 >= v.size()) return v.back();
  return v[i] + frac * (v[i + 1] - v[i]);
}

}  // namespace

void check_star_spec(const StarDgpSpec& s) {
  const int L = s.L();
  if (L < 1) fail(ErrorKind::kInput, "star spec: no groups");
  if (s.p.size() != L || s.late.size() != L || s.sigma2_y0.size() != L ||
      s.sigma2_tau.size() != L)
    fail(ErrorKind::kInput, "star spec: vectors must share one length");
  if (std::abs(s.shares.sum() - 1.0) > 1e-10)
    fail(ErrorKind::kInput, "star spec: shares must sum to 1");
  for (int l = 0; l < L; ++l) {
    if (!(s.shares(l) > 0.0)) fail(ErrorKind::kInput, "star spec: shares must be positive");
    if (!(s.p(l) > 0.0 && s.p(l) < 1.0))
      fail(ErrorKind::kInput, "star spec: treatment probabilities must lie in (0, 1)");
    if (s.sigma2_y0(l) < 0.0 || s.sigma2_tau(l) < 0.0)
      fail(ErrorKind::kInput, "star spec: variances must be nonnegative");
  }
}

Dataset star_sample(const StarDgpSpec& s, int n, std::uint64_t seed, std::uint64_t stream) {
  check_star_spec(s);
  const int L = s.L();
  if (n < 10 * L) fail(ErrorKind::kInput, "star_sample: n must be at least 10 L");
  CounterRng rng(seed, stream);
  Dataset ds;
  ds.y.resize(n);
  ds.d.resize(n);
  ds.z = Mat::Zero(n, L);
  ds.group = Labels(n);
  std::vector<int> count(L, 0);
  for (int i = 0; i < n; ++i) {
    const int g = rng.categorical(s.shares);
    const bool treated = rng.bernoulli(s.p(g));
    const double y0 = std::sqrt(s.sigma2_y0(g)) * rng.normal();
    const double tau = s.late(g) + std::sqrt(s.sigma2_tau(g)) * rng.normal();
    ds.y(i) = y0 + (treated ? tau : 0.0);
    ds.d(i) = treated ? 1.0 : 0.0;
    ds.z(i, g) = ds.d(i);
    (*ds.group)[i] = g;
    ++count[g];
  }
  for (int l = 0; l < L; ++l) {
    if (count[l] < 2) {
      std::ostringstream os;
      os << "star_sample: group " << l << " has fewer than 2 sampled rows";
      fail(ErrorKind::kInput, os.str());
    }
    ds.instrument_names.push_back("z" + std::to_string(l + 1));
  }
  return ds;
}

void check_latent_spec(const LatentDgpSpec& s) {
  const int N = 1 << s.joint.L;
  if (s.joint.prob.size() != N || s.p_of_z.size() != N)
    fail(ErrorKind::kInput, "latent spec: joint and propensity need 2^L entries");
  if (std::abs(s.joint.prob.sum() - 1.0) > 1e-12)
    fail(ErrorKind::kInput, "latent spec: joint does not sum to 1");
  for (int z = 0; z < N; ++z)
    if (!(s.p_of_z(z) >= 0.0 && s.p_of_z(z) <= 1.0))
      fail(ErrorKind::kInput, "latent spec: propensities must lie in [0, 1]");
  if (s.mte.intervals() < 1) fail(ErrorKind::kInput, "latent spec: MTE curve missing");
  if (s.noise_sd < 0.0 || s.sigma2_y0 < 0.0)
    fail(ErrorKind::kInput, "latent spec: negative scale");
}

Dataset latent_sample(const LatentDgpSpec& s, int n, std::uint64_t seed, std::uint64_t stream) {
  check_latent_spec(s);
  const int L = s.joint.L;
  if (n < L + 2) fail(ErrorKind::kInput, "latent_sample: n too small");
  CounterRng rng(seed, stream);
  Dataset ds;
  ds.y.resize(n);
  ds.d.resize(n);
  ds.z.resize(n, L);
  const double sy0 = std::sqrt(s.sigma2_y0);
  for (int i = 0; i < n; ++i) {
    const unsigned z = static_cast<unsigned>(rng.categorical(s.joint.prob));
    const double u = rng.uniform_open();
    const double y0 = sy0 * rng.normal();
    const double nu = s.noise_sd * rng.normal();
    const bool treated = s.p_of_z(z) >= u;
    ds.d(i) = treated ? 1.0 : 0.0;
    ds.y(i) = y0 + (treated ? s.mte.at(u) + nu : 0.0);
    for (int l = 0; l < L; ++l) ds.z(i, l) = ((z >> l) & 1u) ? 1.0 : 0.0;
  }
  for (int l = 0; l < L; ++l) ds.instrument_names.push_back("z" + std::to_string(l + 1));
  return ds;
}

PopulationMoments population_moments(const StarDgpSpec& s) {
  check_star_spec(s);
  const int L = s.L();
  PopulationMoments pm;
  pm.gamma.resize(L);
  for (int l = 0; l < L; ++l) pm.gamma(l) = s.shares(l) * s.p(l) * (1.0 - s.p(l));
  pm.sigma_z = pm.gamma.asDiagonal();
  pm.cov_yz = pm.gamma.cwiseProduct(s.late);
  pm.wald = s.late;
  auto diag = [s](double beta) {
    const int L = s.L();
    Mat O = Mat::Zero(L, L);
    for (int l = 0; l < L; ++l) {
      const double p = s.p(l);
      const double dev = s.late(l) - beta;
      O(l, l) = s.shares(l) * p * (1.0 - p) *
                (s.sigma2_y0(l) + (1.0 - p) * s.sigma2_tau(l) +
                 (1.0 - 3.0 * p * (1.0 - p)) * dev * dev);
    }
    return O;
  };
  pm.omega = diag;
  pm.gamma_wald = Mat::Zero(L, L);
  for (int l = 0; l < L; ++l)
    pm.gamma_wald(l, l) = diag(s.late(l))(l, l) / (pm.gamma(l) * pm.gamma(l));
  return pm;
}

PopulationMoments population_moments(const LatentDgpSpec& s) {
  check_latent_spec(s);
  const int L = s.joint.L;
  const int N = 1 << L;
  Vec p = Vec::Zero(L);
  for (int l = 0; l < L; ++l) p(l) = s.joint.marginal(l);
  Mat zc(N, L);
  Vec I0(N), I1(N), I2(N);
  for (int z = 0; z < N; ++z) {
    for (int l = 0; l < L; ++l) zc(z, l) = ((z >> l) & 1) - p(l);
    I0(z) = s.p_of_z(z);
    I1(z) = partial_integral(s.mte, s.p_of_z(z), 1);
    I2(z) = partial_integral(s.mte, s.p_of_z(z), 2);
  }
  const Vec& P = s.joint.prob;
  PopulationMoments pm;
  pm.sigma_z = zc.transpose() * P.asDiagonal() * zc;
  pm.gamma = zc.transpose() * P.cwiseProduct(I0);
  pm.cov_yz = zc.transpose() * P.cwiseProduct(I1);
  pm.wald = pm.cov_yz.cwiseQuotient(pm.gamma);
  const double ED = P.dot(I0);
  const double EY = P.dot(I1);
  const double s2n = s.noise_sd * s.noise_sd;
  const double s2y0 = s.sigma2_y0;
  // E[(R_a - c_a)(R_b - c_b) | z] with R_a = Y - a D.
  auto cross = [=](double a, double b, int z) {
    const double Rab = s2y0 + I2(z) - (a + b) * I1(z) + a * b * I0(z) + s2n * I0(z);
    const double Ra = I1(z) - a * I0(z);
    const double Rb = I1(z) - b * I0(z);
    const double ca = EY - a * ED;
    const double cb = EY - b * ED;
    return Rab - cb * Ra - ca * Rb + ca * cb;
  };
  pm.omega = [=](double beta) {
    Vec w(N);
    for (int z = 0; z < N; ++z) w(z) = P(z) * cross(beta, beta, z);
    return Mat(zc.transpose() * w.asDiagonal() * zc);
  };
  pm.gamma_wald.resize(L, L);
  for (int l = 0; l < L; ++l) {
    for (int k = 0; k < L; ++k) {
      double acc = 0.0;
      for (int z = 0; z < N; ++z)
        acc += P(z) * zc(z, l) * zc(z, k) * cross(pm.wald(l), pm.wald(k), z);
      pm.gamma_wald(l, k) = acc / (pm.gamma(l) * pm.gamma(k));
    }
  }
  return pm;
}

double population_egmm_map(const PopulationMoments& pm, double beta) {
  const Mat O = pm.omega(beta);
  const Vec a = spd_solve(O, pm.gamma);
  return a.dot(pm.cov_yz) / a.dot(pm.gamma);
}

PopulationTargets population_targets(const PopulationMoments& pm, const std::optional<Vec>& omega) {
  const int L = static_cast<int>(pm.gamma.size());
  PopulationTargets t;
  t.wald = pm.wald;
  t.gamma = pm.gamma;
  t.gamma_wald = pm.gamma_wald;
  for (int l = 0; l < L; ++l)
    if (!(std::abs(pm.gamma(l)) > 1e-14))
      fail(ErrorKind::kRelevance, "population_targets: an instrument has zero first stage");
  const Mat Wz = spd_solve(pm.sigma_z, Mat::Identity(L, L));
  t.lambda_2sls = lambda_weights(pm.gamma, Wz);
  t.beta_2sls = t.lambda_2sls.dot(pm.wald);

  auto T = [&](double b) { return population_egmm_map(pm, b); };
  FixedPointOptions fo;
  fo.tol = 1e-13;
  fo.max_iter = 2000;
  FixedPointResult fp = fixed_point(T, t.beta_2sls, fo);
  double beta = fp.x;
  if (!fp.converged) {
    // Fall back to bisection on T(b) - b over a bracket around the Walds.
    const double lo_w = pm.wald.minCoeff(), hi_w = pm.wald.maxCoeff();
    const double range = std::max(hi_w - lo_w, 1.0);
    double a = lo_w - range, c = hi_w + range;
    double fa = T(a) - a;
    for (int it = 0; it < 300 && c - a > 1e-15 * std::max(1.0, std::abs(a)); ++it) {
      const double m = 0.5 * (a + c);
      const double fm = T(m) - m;
      if ((fm < 0.0) == (fa < 0.0)) {
        a = m;
        fa = fm;
      } else {
        c = m;
      }
    }
    beta = 0.5 * (a + c);
  }
  const Mat Oinv = spd_solve(pm.omega(beta), Mat::Identity(L, L));
  t.lambda_egmm = lambda_weights(pm.gamma, Oinv);
  t.beta_egmm = t.lambda_egmm.dot(pm.wald);
  t.egmm_residual = std::abs(T(t.beta_egmm) - t.beta_egmm);

  t.omega_csw = pm.gamma / pm.gamma.sum();
  t.beta_csw = t.omega_csw.dot(pm.wald);
  t.beta_ew = pm.wald.mean();
  if (omega) {
    require_simplex(*omega, "population_targets");
    t.beta_rt = omega->dot(pm.wald);
  }
  return t;
}

const char* mc_estimator_name(McEstimator e) {
  switch (e) {
    case McEstimator::kTsls: return "2sls";
    case McEstimator::kEgmm: return "egmm";
    case McEstimator::kRtEw: return "rt_ew";
    case McEstimator::kRtCsw: return "rt_csw";
    case McEstimator::kRtCustom: return "rt_custom";
  }
  return "unknown";
}

namespace {

struct RepOutcome {
  bool sampled = false;
  std::vector<char> ok;
  std::vector<double> est;
  std::vector<double> se;
  bool has_j = false;
  double j = 0.0;
  double j_p = 1.0;
};

RepOutcome run_replication(const Sampler& sampler, const McConfig& cfg, int r) {
  RepOutcome out;
  const size_t E = cfg.estimators.size();
  out.ok.assign(E, 0);
  out.est.assign(E, 0.0);
  out.se.assign(E, 0.0);
  CenteredDataset cd;
  MomentSummary ms;
  try {
    cd = center(sampler(cfg.n, cfg.seed, static_cast<std::uint64_t>(r)));
    ms = summarize(cd);
    require_defined_wald(ms);
    out.sampled = true;
  } catch (const Error&) {
    return out;
  }
  std::optional<GammaWald> gw;
  std::optional<EgmmResult> eg;
  bool eg_failed = false;
  auto get_egmm = [&]() -> const EgmmResult* {
    if (!eg && !eg_failed) {
      try {
        eg = egmm(ms, cd);
      } catch (const Error&) {
        eg_failed = true;
      }
    }
    return eg ? &*eg : nullptr;
  };
  for (size_t e = 0; e < E; ++e) {
    try {
      switch (cfg.estimators[e]) {
        case McEstimator::kTsls: {
          const GmmResult g = tsls(ms, cd);
          out.est[e] = g.beta;
          out.se[e] = g.se;
          break;
        }
        case McEstimator::kEgmm: {
          const EgmmResult* p = get_egmm();
          if (!p || !p->converged) fail(ErrorKind::kNumerical, "egmm failed");
          out.est[e] = p->gmm.beta;
          out.se[e] = p->gmm.se;
          break;
        }
        default: {
          if (!gw) gw = gamma_wald(cd, ms);
          Vec w;
          if (cfg.estimators[e] == McEstimator::kRtEw)
            w = ew_weights(ms.L());
          else if (cfg.estimators[e] == McEstimator::kRtCsw)
            w = csw_weights(ms);
          else
            w = *cfg.custom_omega;
          const RtResult rr = rt_estimate(ms, *gw, w);
          out.est[e] = rr.beta;
          out.se[e] = rr.se;
          break;
        }
      }
      out.ok[e] = std::isfinite(out.est[e]) && std::isfinite(out.se[e]);
    } catch (const Error&) {
      out.ok[e] = 0;
    }
  }
  if (ms.L() >= 2) {
    const EgmmResult* p = get_egmm();
    if (p && p->j) {
      out.has_j = true;
      out.j = p->j->j;
      out.j_p = p->j->pvalue;
    }
  }
  return out;
}

}  // namespace

McReport monte_carlo(const Sampler& sampler, const PopulationTargets& targets, const McConfig& cfg) {
  if (cfg.R < 100) fail(ErrorKind::kInput, "monte_carlo: R must be at least 100");
  if (!(cfg.trim_lo >= 0.0 && cfg.trim_lo < cfg.trim_hi && cfg.trim_hi <= 100.0))
    fail(ErrorKind::kInput, "monte_carlo: invalid trimming percentiles");
  for (McEstimator e : cfg.estimators) {
    if (e == McEstimator::kRtCustom && !cfg.custom_omega)
      fail(ErrorKind::kInput, "monte_carlo: custom weights requested but not supplied");
  }
  std::vector<RepOutcome> reps(cfg.R);
  const int threads = std::max(1, std::min(cfg.threads, cfg.R));
  if (threads == 1) {
    for (int r = 0; r < cfg.R; ++r) reps[r] = run_replication(sampler, cfg, r);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t]() {
        for (int r = t; r < cfg.R; r += threads) reps[r] = run_replication(sampler, cfg, r);
      });
    }
    for (auto& th : pool) th.join();
  }

  McReport rep;
  rep.R = cfg.R;
  rep.n = cfg.n;
  rep.seed = cfg.seed;
  rep.trim_lo = cfg.trim_lo;
  rep.trim_hi = cfg.trim_hi;
  for (const auto& o : reps)
    if (!o.sampled) ++rep.sample_failures;

  for (size_t e = 0; e < cfg.estimators.size(); ++e) {
    McRow row;
    const McEstimator kind = cfg.estimators[e];
    row.estimator = mc_estimator_name(kind);
    switch (kind) {
      case McEstimator::kTsls: row.target = targets.beta_2sls; break;
      case McEstimator::kEgmm: row.target = targets.beta_egmm; break;
      case McEstimator::kRtEw: row.target = targets.beta_ew; break;
      case McEstimator::kRtCsw: row.target = targets.beta_csw; break;
      case McEstimator::kRtCustom:
        row.target = targets.beta_rt ? *targets.beta_rt : cfg.custom_omega->dot(targets.wald);
        break;
    }
    std::vector<double> est;
    double covered = 0.0, se_sum = 0.0;
    for (const auto& o : reps) {
      if (!o.ok[e]) {
        ++row.failures;
        continue;
      }
      est.push_back(o.est[e]);
      se_sum += o.se[e];
      if (std::abs(o.est[e] - row.target) <= 1.959963984540054 * o.se[e]) covered += 1.0;
    }
    row.used = static_cast<int>(est.size());
    if (row.used > 0) {
      row.coverage = covered / row.used;
      row.mean_se = se_sum / row.used;
      const double qlo = percentile(est, cfg.trim_lo);
      const double qhi = percentile(est, cfg.trim_hi);
      std::vector<double> kept;
      for (double x : est)
        if (x >= qlo && x <= qhi) kept.push_back(x);
      row.kept = static_cast<int>(kept.size());
      double mean = 0.0;
      for (double x : kept) mean += x;
      mean /= row.kept;
      double ss = 0.0, sr = 0.0;
      for (double x : kept) {
        ss += (x - mean) * (x - mean);
        sr += (x - row.target) * (x - row.target);
      }
      row.bias = mean - row.target;
      row.sd = std::sqrt(ss / row.kept);
      row.rmse = std::sqrt(sr / row.kept);
    }
    rep.rows.push_back(row);
  }
  double jsum = 0.0, jrej = 0.0;
  for (const auto& o : reps) {
    if (!o.has_j) continue;
    ++rep.j_count;
    jsum += o.j;
    if (o.j_p < 0.05) jrej += 1.0;
  }
  if (rep.j_count > 0) {
    rep.j_mean = jsum / rep.j_count;
    rep.j_reject_rate = jrej / rep.j_count;
  } else {
    rep.j_mean = std::numeric_limits<double>::quiet_NaN();
    rep.j_reject_rate = std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

Vec calibrate_tau_variance(const Dataset& ds) {
  if (!ds.group) fail(ErrorKind::kSchema, "calibrate_tau_variance: group labels required");
  std::map<long long, std::array<std::vector<double>, 2>> by;
  for (int i = 0; i < ds.n(); ++i) by[(*ds.group)[i]][ds.d(i) != 0.0 ? 1 : 0].push_back(ds.y(i));
  auto var = [](const std::vector<double>& v) {
    if (v.size() < 2) fail(ErrorKind::kInput, "calibrate_tau_variance: arm with fewer than 2 rows");
    double m = 0.0;
    for (double x : v) m += x;
    m /= v.size();
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / (v.size() - 1);
  };
  Vec out(static_cast<int>(by.size()));
  int g = 0;
  for (const auto& [label, arms] : by) out(g++) = std::max(0.0, var(arms[1]) - var(arms[0]));
  return out;
}

}  // namespace ivrt
