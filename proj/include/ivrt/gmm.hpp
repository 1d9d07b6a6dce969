#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ivrt/moments.hpp"

namespace ivrt {

enum class WeightKind { kIdentity, kSigmaZInverse, kOmegaInverse, kCustom, kTargeting };

const char* weight_kind_name(WeightKind kind);

struct GmmResult {
  double beta = 0.0;
  Vec lambda;           // implied weights on the Wald ratios
  double se = 0.0;      // sandwich, evaluated at Omega(beta)
  double variance = 0.0;  // V(W; Omega), so se = sqrt(variance / n)
  WeightKind weight_kind = WeightKind::kCustom;
  OmegaMatrix omega_used;  // Omega evaluated at beta, used for the SE
  Mat weight;
};

// lambda_l = gamma_l [W gamma]_l / gamma'W gamma.
Vec lambda_weights(const Vec& gamma, const Mat& W);

// gamma'W Omega W gamma / (gamma'W gamma)^2.
double sandwich_variance(const Vec& gamma, const Mat& W, const Mat& Omega);

GmmResult gmm_estimate(const MomentSummary& ms, const CenteredDataset& cd,
                       const Mat& W, WeightKind kind = WeightKind::kCustom,
                       bool cluster = false);

GmmResult tsls(const MomentSummary& ms, const CenteredDataset& cd, bool cluster = false);

enum class EgmmMode { kTwoStep, kIterated };

struct EgmmOptions {
  EgmmMode mode = EgmmMode::kIterated;
  double tol = 1e-10;
  int max_iter = 200;
  bool cluster = false;
  bool scan = false;  // also report every fixed point found on a grid
};

struct JTest {
  double j = 0.0;
  int df = 0;
  double pvalue = 1.0;
};

struct EgmmResult {
  GmmResult gmm;
  EgmmMode mode = EgmmMode::kIterated;
  int iterations = 0;
  double fixed_point_residual = 0.0;
  bool converged = true;
  double weight_beta = 0.0;  // beta at which the weighting Omega was evaluated
  double ridge = 0.0;        // ridge added to that Omega, 0 if none
  std::optional<JTest> j;
  std::string j_note;
  std::vector<double> roots;  // scan mode only
};

// The EGMM map T(beta) = beta_W with W = Omega(beta)^{-1}.
double egmm_map(const MomentSummary& ms, const CenteredDataset& cd, double beta,
                bool cluster = false, double* ridge = nullptr);

EgmmResult egmm(const MomentSummary& ms, const CenteredDataset& cd,
                const EgmmOptions& options = {});

JTest j_test(const CenteredDataset& cd, const MomentSummary& ms, const EgmmResult& e);

// Upper tail of the chi-square distribution.
double chi2_survival(double x, int df);

// A positive definite W with lambda(W) = omega exactly.
Mat targeting_matrix(const Vec& omega, const Vec& gamma);

// Checks omega against the simplex (sum within 1e-10, entries >= -1e-12) and
// throws an input error otherwise.
void require_simplex(const Vec& omega, const char* who);

struct ConstrainedVariance {
  double v_constrained = 0.0;
  double v_floor = 0.0;
  bool floor_defined = true;
};

ConstrainedVariance constrained_variance(const Vec& omega, const Vec& gamma,
                                         const Mat& Omega);

// d lambda^EGMM_ell / d Omega_{ell ell}.
double penalty_derivative(const Mat& Omega, const Vec& gamma, int ell);

// Population or simulation inputs for the three-part residual variance.
struct ResidualOracle {
  Vec p_treat;     // within-group treatment probability
  Vec sigma2_y0;
  Vec sigma2_tau;
  Vec late;
  double beta_star = 0.0;
};

struct DiagonalRow {
  double sigma2_eps = 0.0;
  double lambda_2sls = 0.0;
  double lambda_egmm = 0.0;
  double ratio = 0.0;
  // Filled when a ResidualOracle is supplied.
  std::optional<double> part_y0;
  std::optional<double> part_tau;
  std::optional<double> part_dispersion;
};

struct DiagonalDiagnostics {
  std::vector<DiagonalRow> rows;
  double max_offdiag = 0.0;       // max |Omega_lk|, l != k
  double max_offdiag_corr = 0.0;  // same, scaled by sqrt(Omega_ll Omega_kk)
};

DiagonalDiagnostics diagonal_diagnostics(const MomentSummary& ms, const OmegaMatrix& omega,
                                         const std::optional<ResidualOracle>& oracle = {});

}  // namespace ivrt
