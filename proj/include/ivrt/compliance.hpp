#pragma once

#include <cstdint>
#include <vector>

#include "ivrt/data.hpp"

namespace ivrt {

// A map t: {0,1}^L -> {0,1} stored as a 2^L-bit mask; bit z holds t(z),
// where bit l of z is Z_l.
using TypeMask = std::uint32_t;

inline bool takes_up(TypeMask t, unsigned z) { return ((t >> z) & 1u) != 0; }

struct TypeTable {
  int L = 0;
  std::vector<TypeMask> types;
  Vec theta;  // empty until set
  Vec late;   // empty until set

  int size() const { return static_cast<int>(types.size()); }
};

bool is_monotone(TypeMask t, int L);

// All monotone maps in increasing mask order; 1 <= L <= 5.
TypeTable enumerate_monotone_types(int L);

// Upper sets of {0,1}^dim as point masks, increasing; 0 <= dim <= 4.
std::vector<TypeMask> upper_sets(int dim);

struct InstrumentJoint {
  int L = 0;
  Vec prob;  // 2^L entries indexed like TypeMask bits

  double marginal(int l) const;
};

InstrumentJoint make_joint(int L, const Vec& prob);
InstrumentJoint empirical_joint(const Dataset& ds);
// Cov(Z_l, Z_k) under the joint.
double instrument_covariance(const InstrumentJoint& zj, int l, int k);

struct TypeWeights {
  Vec alpha;
  Vec phi;
  Vec phi_d;  // direct component, never negative
  Vec phi_i;  // indirect component, zero under independence
  double pi = 0.0;
};

TypeWeights type_weights(const TypeTable& tt, const InstrumentJoint& zj, int ell);

// L x T matrix whose row l is alpha(l).
Mat alpha_matrix(const TypeTable& tt, const InstrumentJoint& zj);

Vec composite_type_weights(const Mat& alpha, const Vec& weights);

struct WaldFromTypes {
  Vec wald;
  Vec pi;
  Vec rho;
};

WaldFromTypes wald_from_types(const TypeTable& tt, const InstrumentJoint& zj);

struct PrdReport {
  bool passed = true;
  double tolerance = 0.0;
  Vec worst_margin;            // per instrument; NaN when undefined
  std::vector<int> undefined;  // instruments with an empty conditioning event
  int worst_ell = -1;
  TypeMask worst_set = 0;      // upper set of {0,1}^(L-1), as a point mask
  double worst = 0.0;
  int upper_sets_checked = 0;
};

// Tolerance 1e-9 suits exact joints; empirical joints default to 0.
PrdReport prd_check(const InstrumentJoint& zj, double tolerance = 1e-9);

}  // namespace ivrt
