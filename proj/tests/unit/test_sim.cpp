#include <cmath>

#include "doctest.h"
#include "ivrt/error.hpp"
#include "ivrt/gmm.hpp"
#include "ivrt/rng.hpp"
#include "ivrt/sim.hpp"

using namespace ivrt;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

StarDgpSpec three_groups(Vec late, Vec s2tau) {
  StarDgpSpec s;
  s.shares = Vec::Constant(3, 1.0 / 3);
  s.p = Vec::Constant(3, 0.5);
  s.late = late;
  s.sigma2_y0 = Vec::Constant(3, 1.0);
  s.sigma2_tau = s2tau;
  return s;
}

LatentDgpSpec latent_spec(const WeightFn& mte) {
  LatentDgpSpec s;
  s.joint = make_joint(2, vec({0.3, 0.2, 0.2, 0.3}));
  s.p_of_z = vec({0.2, 0.5, 0.4, 0.8});
  s.mte = mte;
  s.noise_sd = 1.0;
  s.sigma2_y0 = 1.0;
  return s;
}

}  // namespace

TEST_CASE("counter-based generator is reproducible and stream separated") {
  CounterRng a(42, 0), b(42, 0), c(42, 1);
  for (int i = 0; i < 5; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    CHECK(x != c.next_u64());
  }
  CounterRng u(1, 0);
  double m = 0.0;
  for (int i = 0; i < 100000; ++i) m += u.uniform();
  CHECK(m / 100000 == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("STAR samples: shape, determinism and instrument construction") {
  const StarDgpSpec s = three_groups(vec({5, 10, 15}), vec({1, 1, 1}));
  const Dataset a = star_sample(s, 300, 9);
  const Dataset b = star_sample(s, 300, 9);
  CHECK(a.n() == 300);
  CHECK(a.L() == 3);
  CHECK(a.y == b.y);
  REQUIRE(a.group.has_value());
  for (int i = 0; i < a.n(); ++i) {
    const int g = static_cast<int>((*a.group)[i]);
    for (int l = 0; l < 3; ++l) CHECK(a.z(i, l) == (l == g ? a.d(i) : 0.0));
  }
  CHECK_THROWS_AS(star_sample(s, 20, 1), Error);
}

TEST_CASE("STAR population targets") {
  const PopulationTargets t = population_targets(population_moments(three_groups(vec({5, 10, 15}), vec({1, 2, 3}))));
  CHECK(t.beta_ew == doctest::Approx(10.0));
  StarDgpSpec s = three_groups(vec({5, 10, 15}), vec({1, 2, 3}));
  s.shares = vec({0.2, 0.3, 0.5});
  s.p = vec({0.3, 0.5, 0.6});
  const PopulationTargets u = population_targets(population_moments(s));
  double num = 0.0, den = 0.0;
  for (int l = 0; l < 3; ++l) {
    const double g = s.shares(l) * s.p(l) * (1 - s.p(l));
    num += g * s.late(l);
    den += g;
  }
  CHECK(u.beta_csw == doctest::Approx(num / den).epsilon(1e-12));
  CHECK(u.beta_2sls == doctest::Approx(u.beta_csw).epsilon(1e-12));
  CHECK(u.egmm_residual <= 1e-10);
}

TEST_CASE("homogeneous effects make every target equal") {
  const PopulationTargets t = population_targets(population_moments(three_groups(vec({4, 4, 4}), vec({0, 0, 0}))));
  CHECK(t.beta_2sls == doctest::Approx(4.0));
  CHECK(t.beta_egmm == doctest::Approx(4.0));
  CHECK(t.beta_csw == doctest::Approx(4.0));
  CHECK(t.beta_ew == doctest::Approx(4.0));
}

TEST_CASE("latent design: constant MTE and constant propensity") {
  const PopulationMoments pm = population_moments(latent_spec(make_weight_fn(vec({0, 1}), vec({2.5}))));
  CHECK((pm.wald - Vec::Constant(2, 2.5)).norm() < 1e-12);
  LatentDgpSpec flat = latent_spec(make_weight_fn(vec({0, 1}), vec({2.5})));
  flat.p_of_z = Vec::Constant(4, 0.4);
  CHECK_THROWS_AS(population_targets(population_moments(flat)), Error);
}

TEST_CASE("latent design: sampled frequencies and Walds track the population") {
  const LatentDgpSpec s = latent_spec(make_weight_fn(vec({0, 0.3, 0.6, 1}), vec({6, 3, 0})));
  const Dataset ds = latent_sample(s, 200000, 5);
  const InstrumentJoint zj = empirical_joint(ds);
  double chi2 = 0.0;
  for (int z = 0; z < 4; ++z) {
    const double e = ds.n() * s.joint.prob(z);
    chi2 += std::pow(zj.prob(z) * ds.n() - e, 2) / e;
  }
  CHECK(chi2 < 16.27);  // chi-square(3) 0.999 quantile
  const PopulationMoments pm = population_moments(s);
  const CenteredDataset cd = center(ds);
  const MomentSummary ms = summarize(cd);
  const GammaWald gw = gamma_wald(cd, ms);
  for (int l = 0; l < 2; ++l) {
    const double se = std::sqrt(gw.values(l, l) / ds.n());
    CHECK(std::abs(ms.wald(l) - pm.wald(l)) < 4 * se);
    CHECK(gw.values(l, l) == doctest::Approx(pm.gamma_wald(l, l)).epsilon(0.05));
  }
  const OmegaMatrix om = omega_at(cd, 1.0);
  CHECK((om.values - pm.omega(1.0)).norm() < 0.05 * pm.omega(1.0).norm());
}

TEST_CASE("Monte Carlo harness: thread invariance and metric identities") {
  const StarDgpSpec s = three_groups(vec({2, 5, 9}), vec({1, 4, 9}));
  const PopulationTargets t = population_targets(population_moments(s));
  const Sampler sampler = [s](int n, std::uint64_t seed, std::uint64_t stream) {
    return star_sample(s, n, seed, stream);
  };
  McConfig cfg;
  cfg.R = 120;
  cfg.n = 400;
  cfg.seed = 11;
  const McReport a = monte_carlo(sampler, t, cfg);
  cfg.threads = 4;
  const McReport b = monte_carlo(sampler, t, cfg);
  REQUIRE(a.rows.size() == 4);
  for (size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].bias == b.rows[i].bias);
    CHECK(a.rows[i].sd == b.rows[i].sd);
    CHECK(a.rows[i].coverage == b.rows[i].coverage);
    const McRow& r = a.rows[i];
    CHECK(std::abs(r.rmse * r.rmse - (r.bias * r.bias + r.sd * r.sd)) <= 1e-10);
    CHECK(r.kept <= r.used);
  }
  CHECK(a.j_reject_rate == b.j_reject_rate);
  cfg.R = 50;
  CHECK_THROWS_AS(monte_carlo(sampler, t, cfg), Error);
}

TEST_CASE("treatment-effect variance calibration") {
  StarDgpSpec s = three_groups(vec({1, 1, 1}), vec({0.0, 4.0, 9.0}));
  const Vec v = calibrate_tau_variance(star_sample(s, 300000, 2));
  CHECK(v(0) < 0.1);
  CHECK(v(1) == doctest::Approx(4.0).epsilon(0.06));
  CHECK(v(2) == doctest::Approx(9.0).epsilon(0.06));
}
