#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ivrt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Labels = std::vector<long long>;

struct Dataset {
  Vec y;
  Vec d;  // entries in {0, 1}
  Mat z;  // n x L, entries in {0, 1}
  std::optional<Labels> cluster;
  std::optional<Labels> cell;
  std::optional<Labels> group;
  std::vector<std::string> instrument_names;

  int n() const { return static_cast<int>(y.size()); }
  int L() const { return static_cast<int>(z.cols()); }
};

// Throws if the binary/shape invariants of a Dataset do not hold.
void check_dataset(const Dataset& ds);

// Column mapping for CSV input.  An empty `z` list selects every column whose
// header starts with "z", in file order.
struct Schema {
  std::string y = "y";
  std::string d = "d";
  std::vector<std::string> z;
  std::optional<std::string> cluster;
  std::optional<std::string> cell;
  std::optional<std::string> group;
  bool drop_missing = false;
};

struct LoadResult {
  Dataset data;
  int dropped_rows = 0;
};

// Label columns may hold arbitrary tokens; they are numbered by first
// appearance.
LoadResult load_dataset(std::istream& in, const Schema& schema);
LoadResult load_dataset_file(const std::string& path, const Schema& schema);

struct CenteredDataset {
  Vec y_c;
  Vec d_c;
  Mat z_c;
  Vec p_hat;  // global instrument means, even under grouped demeaning
  std::optional<Labels> group;
  std::optional<Labels> cluster;
  std::vector<std::string> instrument_names;

  int n() const { return static_cast<int>(y_c.size()); }
  int L() const { return static_cast<int>(z_c.cols()); }
};

CenteredDataset center(const Dataset& ds);
// Re-centers an already centered dataset (keeps p_hat).
CenteredDataset center(const CenteredDataset& cd);

struct InstrumentCheck {
  std::string name;
  double pi_hat = 0.0;
  double t_stat = 0.0;  // heteroskedasticity-robust first-stage t
  bool nonpositive = false;
  bool weak = false;
  bool flipped = false;
};

struct ValidateOptions {
  bool auto_flip = false;
  double weak_t = 3.16;  // |t| below this (F < 10) is flagged weak
};

struct ValidationReport {
  std::vector<InstrumentCheck> instruments;
  double sigma_z_min_eigenvalue = 0.0;
  double eigenvalue_tolerance = 0.0;
  bool sigma_z_singular = false;
  std::vector<int> flipped;
};

ValidationReport validate(const CenteredDataset& cd,
                          const ValidateOptions& options = {});

// Recodes instrument columns as 1 - z.
Dataset flip_instruments(const Dataset& ds, const std::vector<int>& which);
CenteredDataset flip_instruments(const CenteredDataset& cd,
                                 const std::vector<int>& which);

// Keeps the listed rows (in order).
Dataset subset_rows(const Dataset& ds, const std::vector<int>& rows);
// Drops the listed instrument columns.
Dataset drop_instruments(const Dataset& ds, const std::vector<int>& which);
CenteredDataset drop_instruments(const CenteredDataset& cd,
                                 const std::vector<int>& which);

}  // namespace ivrt
