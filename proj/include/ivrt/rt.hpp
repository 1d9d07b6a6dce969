#pragma once

#include <optional>
#include <vector>

#include "ivrt/moments.hpp"

namespace ivrt {

struct RtResult {
  double beta = 0.0;
  Vec omega;
  double se = 0.0;
  double variance = 0.0;  // omega' Gamma omega
  Vec per_wald;
  GammaWald gamma_wald;
  int n = 0;
};

RtResult rt_estimate(const MomentSummary& ms, const GammaWald& gw, const Vec& omega);

// Complier-share weights, proportional to gamma.
Vec csw_weights(const MomentSummary& ms);
Vec csw_weights(const Vec& gamma);
// Equal weights.
Vec ew_weights(int L);

struct FrontierCurve {
  Vec grid;
  Vec v_min;
  Mat omega_star;  // one row per grid point
  double psd_clip = 0.0;

  // Piecewise-linear interpolation of v_min; NaN outside the grid.
  double interpolate(double beta_star) const;
};

FrontierCurve variance_frontier(const GammaWald& gw, const Vec& wald, int grid_size = 101);

struct FrontierPoint {
  double v_min = 0.0;
  Vec omega;
};

// Minimum of omega'Gamma omega over the simplex subject to omega'wald = beta.
FrontierPoint frontier_at(const Mat& gamma, const Vec& wald, double beta_star);

struct EfficiencyDecomposition {
  double beta_star = 0.0;
  double v_rt = 0.0;
  double frontier_part = 0.0;
  double composition_cost = 0.0;
  Vec frontier_omega;
};

EfficiencyDecomposition efficiency_decomposition(const Vec& omega, const GammaWald& gw,
                                                 const Vec& wald);

enum class StratMode { kConditional, kMarginal };

struct CellRt {
  long long label = 0;
  int n = 0;
  RtResult rt;
};

struct StratifiedRt {
  std::vector<CellRt> cells;  // sorted by label
  std::optional<RtResult> marginal;
  Mat gamma_within;   // share-weighted mean of the cell Gammas
  Mat gamma_between;  // share-weighted covariance of the cell Wald vectors
};

StratifiedRt rt_stratified(const Dataset& ds, const Vec& omega, StratMode mode,
                           int min_cell_size = 30, bool cluster = false);

}  // namespace ivrt
