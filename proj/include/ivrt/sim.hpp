#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ivrt/compliance.hpp"
#include "ivrt/data.hpp"
#include "ivrt/mte.hpp"

namespace ivrt {

// School-style design: multinomial group assignment, Bernoulli(p_l) treatment
// within group, Y(0) ~ N(0, s2y0_l), effect ~ N(LATE_l, s2tau_l).  Instrument
// l is the treatment indicator interacted with membership of group l; after
// within-group demeaning it equals the demeaned treatment times 1{group = l}.
struct StarDgpSpec {
  Vec shares;
  Vec p;
  Vec late;
  Vec sigma2_y0;
  Vec sigma2_tau;

  int L() const { return static_cast<int>(shares.size()); }
};

void check_star_spec(const StarDgpSpec& spec);
Dataset star_sample(const StarDgpSpec& spec, int n, std::uint64_t seed, std::uint64_t stream = 0);

// Latent-index design: Z from the joint, U ~ Uniform(0,1), D = 1{p(Z) >= U},
// Y = Y(0) + D (MTE(U) + noise), Y(0) ~ N(0, sigma2_y0).
struct LatentDgpSpec {
  InstrumentJoint joint;
  Vec p_of_z;
  WeightFn mte;
  double noise_sd = 0.0;
  double sigma2_y0 = 1.0;
};

void check_latent_spec(const LatentDgpSpec& spec);
Dataset latent_sample(const LatentDgpSpec& spec, int n, std::uint64_t seed,
                      std::uint64_t stream = 0);

// Exact population moments in the centered representation the estimators use.
struct PopulationMoments {
  Vec gamma;
  Vec cov_yz;
  Mat sigma_z;
  Vec wald;
  Mat gamma_wald;
  std::function<Mat(double)> omega;  // Omega(beta)
};

PopulationMoments population_moments(const StarDgpSpec& spec);
PopulationMoments population_moments(const LatentDgpSpec& spec);

struct PopulationTargets {
  Vec wald;
  Vec gamma;
  Vec lambda_2sls;
  double beta_2sls = 0.0;
  Vec lambda_egmm;
  double beta_egmm = 0.0;
  double egmm_residual = 0.0;
  Vec omega_csw;
  double beta_csw = 0.0;
  double beta_ew = 0.0;
  std::optional<double> beta_rt;  // for the custom weights, when given
  Mat gamma_wald;
};

// Population EGMM map beta -> beta_W with W = Omega(beta)^{-1}.
double population_egmm_map(const PopulationMoments& pm, double beta);

PopulationTargets population_targets(const PopulationMoments& pm,
                                     const std::optional<Vec>& omega = {});

enum class McEstimator { kTsls, kEgmm, kRtEw, kRtCsw, kRtCustom };

const char* mc_estimator_name(McEstimator e);

struct McConfig {
  int R = 100;
  int n = 1000;
  std::uint64_t seed = 1;
  double trim_lo = 1.0;   // percentiles
  double trim_hi = 99.0;
  std::vector<McEstimator> estimators = {McEstimator::kTsls, McEstimator::kEgmm,
                                         McEstimator::kRtEw, McEstimator::kRtCsw};
  std::optional<Vec> custom_omega;
  int threads = 1;
};

struct McRow {
  std::string estimator;
  double target = 0.0;
  double bias = 0.0;
  double sd = 0.0;
  double rmse = 0.0;
  double coverage = 0.0;  // over all successful replications
  double mean_se = 0.0;
  int used = 0;      // successful replications
  int kept = 0;      // after trimming
  int failures = 0;
};

struct McReport {
  std::vector<McRow> rows;
  double j_reject_rate = 0.0;
  double j_mean = 0.0;
  int j_count = 0;
  int R = 0;
  int n = 0;
  std::uint64_t seed = 0;
  double trim_lo = 0.0;
  double trim_hi = 0.0;
  int sample_failures = 0;
};

using Sampler = std::function<Dataset(int n, std::uint64_t seed, std::uint64_t stream)>;

McReport monte_carlo(const Sampler& sampler, const PopulationTargets& targets,
                     const McConfig& config);

// Per-group max(0, var(Y | D=1) - var(Y | D=0)); requires group labels.
Vec calibrate_tau_variance(const Dataset& ds);

}  // namespace ivrt
