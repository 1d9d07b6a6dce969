#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "ivrt/compliance.hpp"
#include "ivrt/moments.hpp"
#include "ivrt/optim.hpp"

namespace ivrt {

// Piecewise-constant function on [0, 1].  Interval k is (breaks[k],
// breaks[k+1]]; at u = 0 the first value applies.
struct WeightFn {
  Vec breaks;
  Vec values;

  int intervals() const { return static_cast<int>(values.size()); }
  double integral() const;
  double at(double u) const;
  double min_value() const;
};

WeightFn make_weight_fn(const Vec& breaks, const Vec& values);

// Union of break grids with 1e-14 deduplication.
Vec merge_breaks(const std::vector<const WeightFn*>& fns);
// Values of f on each interval of a finer grid that contains f's breaks.
Vec values_on(const WeightFn& f, const Vec& grid);
WeightFn linear_combination(const std::vector<WeightFn>& fns, const Vec& coeffs);
double inner_product(const WeightFn& a, const WeightFn& b);
double l2_norm(const WeightFn& f);

struct PropensityModel {
  InstrumentJoint joint;
  Vec p_of_z;  // NaN where undefined; such cells must have zero probability
  Vec breaks;  // 0 = u_0 < ... < u_{K+1} = 1

  // Pairs (z, z') with z' = z plus one instrument switched on and
  // p(z') < p(z).
  std::vector<std::pair<unsigned, unsigned>> monotonicity_violations() const;
};

PropensityModel propensity_model(const InstrumentJoint& zj, const Vec& p_of_z);
// Cell frequencies and cell take-up rates.  With `require_full_support`
// every one of the 2^L cells must be observed.
PropensityModel empirical_propensity(const Dataset& ds, bool require_full_support = false);

WeightFn hv_weight(const PropensityModel& pm, int ell);
std::vector<WeightFn> hv_weights(const PropensityModel& pm);

WeightFn composite_weight(const Vec& weights, const std::vector<WeightFn>& hs);

// Discrete law of the propensity under one policy.
struct PropensityLaw {
  Vec values;
  Vec probs;
};

PropensityLaw propensity_law(const PropensityModel& pm);
// P(p >= u).
double survival(const PropensityLaw& law, double u);

struct PolicyPair {
  PropensityLaw status_quo;
  PropensityLaw counterfactual;
};

// Integral of (F1 - F0), i.e. the change in mean take-up.
double policy_mass(const PolicyPair& pp);
WeightFn prte_weight(const PolicyPair& pp);
PolicyPair staircase_policy(const Vec& group_probs, const Vec& approval_rates);

struct PrteTarget {
  Vec omega;
  Vec stage1_omega;
  double stage1_value = 0.0;  // omega'G omega - 2 c'omega at the optimum
  int face_rank = 0;          // rank of the Gram matrix defining the optimal face
  double l2_error = 0.0;
  double relative_l2 = 0.0;
  double psd_clip = 0.0;
  WeightFn composite;
  WeightFn error_fn;  // composite minus w^P
};

PrteTarget prte_target(const std::vector<WeightFn>& hs, const WeightFn& w_p, const Mat& gamma_wald);

double gap_lipschitz(double M, double e_l2);

struct GapRestrictions {
  std::optional<std::pair<double, double>> bounds;  // m_d in [lo, hi]
  bool mtr = false;  // m1 >= m0
  bool mts = false;  // m1 - m0 nonincreasing
};

struct GapBounds {
  bool feasible = false;
  LpStatus status_lo = LpStatus::kInfeasible;
  LpStatus status_hi = LpStatus::kInfeasible;
  double lo = 0.0;
  double hi = 0.0;
  int intervals = 0;
};

GapBounds gap_lp(const Vec& wald, const std::vector<WeightFn>& hs, const WeightFn& e,
                 const GapRestrictions& restrictions);

double gmm_mte_estimand(const Vec& weights, const std::vector<WeightFn>& hs, const WeightFn& mte);

// Resistance intervals and the compliance type each one induces.
struct LatentType {
  double u_left = 0.0;
  double u_right = 0.0;
  TypeMask type = 0;
};

std::vector<LatentType> latent_types(const PropensityModel& pm);

}  // namespace ivrt
