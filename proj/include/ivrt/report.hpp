#pragma once

#include <string>
#include <vector>

#include "ivrt/compliance.hpp"
#include "ivrt/data.hpp"
#include "ivrt/mte.hpp"
#include "ivrt/rt.hpp"
#include "ivrt/sim.hpp"

namespace ivrt {

// Doubles are written in shortest round-trip form; NaN and infinities become
// empty cells.
std::string format_double(double x);

// u_left,u_right,value
std::string weight_fn_csv(const WeightFn& f);
// label,u_left,u_right,value for several functions
std::string weight_fns_csv(const std::vector<std::string>& labels,
                           const std::vector<WeightFn>& fns);
// beta_star,v_min,omega_1..omega_L
std::string frontier_csv(const FrontierCurve& fc);
// estimator,target,bias,sd,rmse,coverage,mean_se,used,kept,failures
std::string mc_csv(const McReport& rep);

// One header row of L column names, then L rows.
std::string matrix_csv(const Mat& m, const std::vector<std::string>& names);
// Square matrix with an optional header of column names.
Mat parse_matrix_csv(const std::string& text);
// A single vector from CSV: one row, one column, or a "weight" column.
Vec parse_vector_csv(const std::string& text);

std::string read_text_file(const std::string& path);

}  // namespace ivrt
