#pragma once

#include <string>
#include <vector>

#include "ivrt/data.hpp"

namespace ivrt {

// Sample moments of a centered dataset, all with divisor n.
struct MomentSummary {
  Vec p;       // global instrument means
  Vec var_z;   // diagonal of sigma_z; equals p(1-p) without grouping
  Vec pi;      // first stage, gamma / var_z
  Vec rho;     // reduced form, cov_yz / var_z
  Vec gamma;   // Cov(D, Z)
  Vec cov_yz;  // Cov(Y, Z), the moment vector g_n(0)
  Vec wald;    // rho / pi; NaN where pi is zero
  Mat sigma_z;
  int n = 0;
  std::vector<int> undefined_wald;

  int L() const { return static_cast<int>(gamma.size()); }
};

MomentSummary summarize(const CenteredDataset& cd);

// Throws a relevance error naming the first instrument with an undefined Wald
// ratio.
void require_defined_wald(const MomentSummary& ms,
                          const std::vector<std::string>& names = {});

// Lenient policy: removes instruments with undefined Wald ratios and returns
// one warning per removed instrument.
CenteredDataset drop_undefined_wald(const CenteredDataset& cd,
                                    const MomentSummary& ms,
                                    std::vector<std::string>& warnings);

struct OmegaMatrix {
  Mat values;
  double beta_at = 0.0;
  bool cluster_robust = false;
};

// Covariance of the moment g_i(beta) = (y_c - beta d_c) z_c.  With
// `cluster` set the dataset must carry cluster labels.
OmegaMatrix omega_at(const CenteredDataset& cd, double beta, bool cluster = false);

struct GammaWald {
  Mat values;
  bool cluster_robust = false;
};

// Asymptotic covariance of the vector of Wald ratios (scaled by n).
GammaWald gamma_wald(const CenteredDataset& cd, const MomentSummary& ms,
                     bool cluster = false);

}  // namespace ivrt
