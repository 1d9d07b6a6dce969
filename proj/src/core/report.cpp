#include "ivrt/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ivrt/error.hpp"

namespace ivrt {
namespace {

std::vector<std::vector<std::string>> split_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) {
      const auto a = cell.find_first_not_of(" \t\"");
      const auto b = cell.find_last_not_of(" \t\"");
      cells.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
    }
    rows.push_back(cells);
  }
  return rows;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool numeric_row(const std::vector<std::string>& row) {
  double v;
  for (const auto& c : row)
    if (!parse_number(c, v)) return false;
  return true;
}

}  // namespace

std::string format_double(double x) {
  if (!std::isfinite(x)) return "";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

std::string weight_fn_csv(const WeightFn& f) {
  std::string out = "u_left,u_right,value\n";
  for (int k = 0; k < f.intervals(); ++k)
    out += format_double(f.breaks(k)) + "," + format_double(f.breaks(k + 1)) + "," +
           format_double(f.values(k)) + "\n";
  return out;
}

std::string weight_fns_csv(const std::vector<std::string>& labels,
                           const std::vector<WeightFn>& fns) {
  std::string out = "label,u_left,u_right,value\n";
  for (size_t i = 0; i < fns.size(); ++i) {
    const WeightFn& f = fns[i];
    for (int k = 0; k < f.intervals(); ++k)
      out += labels[i] + "," + format_double(f.breaks(k)) + "," +
             format_double(f.breaks(k + 1)) + "," + format_double(f.values(k)) + "\n";
  }
  return out;
}

std::string frontier_csv(const FrontierCurve& fc) {
  std::string out = "beta_star,v_min";
  const int L = static_cast<int>(fc.omega_star.cols());
  for (int l = 0; l < L; ++l) out += ",omega_" + std::to_string(l + 1);
  out += "\n";
  for (int g = 0; g < fc.grid.size(); ++g) {
    out += format_double(fc.grid(g)) + "," + format_double(fc.v_min(g));
    for (int l = 0; l < L; ++l) out += "," + format_double(fc.omega_star(g, l));
    out += "\n";
  }
  return out;
}

std::string mc_csv(const McReport& rep) {
  std::string out = "estimator,target,bias,sd,rmse,coverage,mean_se,used,kept,failures\n";
  for (const McRow& r : rep.rows) {
    out += r.estimator + "," + format_double(r.target) + "," + format_double(r.bias) + "," +
           format_double(r.sd) + "," + format_double(r.rmse) + "," +
           format_double(r.coverage) + "," + format_double(r.mean_se) + "," +
           std::to_string(r.used) + "," + std::to_string(r.kept) + "," +
           std::to_string(r.failures) + "\n";
  }
  return out;
}

std::string matrix_csv(const Mat& m, const std::vector<std::string>& names) {
  std::string out;
  for (int j = 0; j < m.cols(); ++j) {
    if (j) out += ",";
    out += j < static_cast<int>(names.size()) ? names[j] : "c" + std::to_string(j + 1);
  }
  out += "\n";
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      if (j) out += ",";
      out += format_double(m(i, j));
    }
    out += "\n";
  }
  return out;
}

Mat parse_matrix_csv(const std::string& text) {
  auto rows = split_csv(text);
  if (!rows.empty() && !numeric_row(rows.front())) rows.erase(rows.begin());
  const int L = static_cast<int>(rows.size());
  if (L == 0) fail(ErrorKind::kInput, "matrix CSV is empty");
  Mat m(L, L);
  for (int i = 0; i < L; ++i) {
    if (static_cast<int>(rows[i].size()) != L)
      fail(ErrorKind::kInput, "matrix CSV must be square; row " + std::to_string(i + 1) +
                                  " has " + std::to_string(rows[i].size()) + " entries");
    for (int j = 0; j < L; ++j)
      if (!parse_number(rows[i][j], m(i, j)))
        fail(ErrorKind::kInput, "matrix CSV: non-numeric entry '" + rows[i][j] + "'");
  }
  return m;
}

Vec parse_vector_csv(const std::string& text) {
  auto rows = split_csv(text);
  int column = -1;
  if (!rows.empty() && !numeric_row(rows.front())) {
    const auto& h = rows.front();
    for (size_t j = 0; j < h.size(); ++j)
      if (h[j] == "weight" || h[j] == "omega") column = static_cast<int>(j);
    if (column < 0 && h.size() == 1) column = 0;
    rows.erase(rows.begin());
  }
  std::vector<double> v;
  double x;
  if (column >= 0) {
    for (const auto& r : rows) {
      if (column >= static_cast<int>(r.size()) || !parse_number(r[column], x))
        fail(ErrorKind::kInput, "weights CSV: bad entry in the weight column");
      v.push_back(x);
    }
  } else if (rows.size() == 1) {
    for (const auto& c : rows.front()) {
      if (!parse_number(c, x)) fail(ErrorKind::kInput, "weights CSV: non-numeric entry '" + c + "'");
      v.push_back(x);
    }
  } else {
    for (const auto& r : rows) {
      if (r.size() != 1 || !parse_number(r.front(), x))
        fail(ErrorKind::kInput, "weights CSV: expected one row or one column");
      v.push_back(x);
    }
  }
  if (v.empty()) fail(ErrorKind::kInput, "weights CSV is empty");
  return Eigen::Map<Vec>(v.data(), static_cast<int>(v.size()));
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kInput, "cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace ivrt
