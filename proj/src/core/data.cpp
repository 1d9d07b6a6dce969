#include "ivrt/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "ivrt/error.hpp"
#include "ivrt/optim.hpp"

namespace ivrt {
namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool is_missing(const std::string& s) {
  if (s.empty()) return true;
  std::string l;
  for (char ch : s) l.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  return l == "na" || l == "nan" || l == "null";
}

bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto r = std::from_chars(b, e, out);
  return r.ec == std::errc() && r.ptr == e && std::isfinite(out);
}

std::string row_tag(int row) {
  std::ostringstream os;
  os << "row " << row << " (line " << row + 1 << ")";
  return os.str();
}

void check_labels(const std::optional<Labels>& l, int n, const char* what) {
  if (l && static_cast<int>(l->size()) != n)
    fail(ErrorKind::kSchema, std::string(what) + " labels have wrong length");
}

// Dense index of each label, in order of first appearance.
std::vector<int> dense_index(const Labels& labels, int& count) {
  std::unordered_map<long long, int> idx;
  std::vector<int> out(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    auto it = idx.find(labels[i]);
    if (it == idx.end()) it = idx.emplace(labels[i], static_cast<int>(idx.size())).first;
    out[i] = it->second;
  }
  count = static_cast<int>(idx.size());
  return out;
}

void demean(Eigen::Ref<Mat> cols, const std::optional<Labels>& group) {
  if (!group) {
    for (int j = 0; j < cols.cols(); ++j)
      cols.col(j).array() -= cols.col(j).mean();
    return;
  }
  int G = 0;
  const std::vector<int> gi = dense_index(*group, G);
  Mat sums = Mat::Zero(G, cols.cols());
  Vec counts = Vec::Zero(G);
  for (int i = 0; i < cols.rows(); ++i) {
    sums.row(gi[i]) += cols.row(i);
    counts(gi[i]) += 1.0;
  }
  for (int g = 0; g < G; ++g) {
    if (counts(g) < 2.0) {
      long long label = 0;
      for (size_t i = 0; i < gi.size(); ++i)
        if (gi[i] == g) label = (*group)[i];
      std::ostringstream os;
      os << "center: group " << label << " has fewer than 2 rows";
      fail(ErrorKind::kInput, os.str());
    }
    sums.row(g) /= counts(g);
  }
  for (int i = 0; i < cols.rows(); ++i) cols.row(i) -= sums.row(gi[i]);
}

std::string instrument_name(const std::vector<std::string>& names, int l) {
  if (l < static_cast<int>(names.size())) return names[l];
  return "z" + std::to_string(l + 1);
}

}  // namespace

void check_dataset(const Dataset& ds) {
  const int n = ds.n();
  const int L = ds.L();
  if (ds.d.size() != n || ds.z.rows() != n)
    fail(ErrorKind::kSchema, "dataset: y, d, z have inconsistent row counts");
  if (L < 1) fail(ErrorKind::kSchema, "dataset: at least one instrument required");
  if (n < L + 2) {
    std::ostringstream os;
    os << "dataset: n=" << n << " rows is too few for L=" << L
       << " instruments (need n >= L+2)";
    fail(ErrorKind::kInput, os.str());
  }
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(ds.y(i)))
      fail(ErrorKind::kSchema, "dataset: non-finite outcome at " + row_tag(i + 1));
    if (ds.d(i) != 0.0 && ds.d(i) != 1.0)
      fail(ErrorKind::kSchema, "dataset: non-binary treatment at " + row_tag(i + 1));
    for (int l = 0; l < L; ++l) {
      if (ds.z(i, l) != 0.0 && ds.z(i, l) != 1.0)
        fail(ErrorKind::kSchema, "dataset: non-binary instrument " +
                                     instrument_name(ds.instrument_names, l) +
                                     " at " + row_tag(i + 1));
    }
  }
  check_labels(ds.cluster, n, "cluster");
  check_labels(ds.cell, n, "cell");
  check_labels(ds.group, n, "group");
}

LoadResult load_dataset(std::istream& in, const Schema& schema) {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) fail(ErrorKind::kInput, "load_dataset: empty input");
  if (!header[0].empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0)
    header[0] = header[0].substr(3);

  std::map<std::string, int> col;
  for (size_t j = 0; j < header.size(); ++j) col[header[j]] = static_cast<int>(j);
  auto need = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end())
      fail(ErrorKind::kSchema, "load_dataset: missing column '" + name + "'");
    return it->second;
  };
  const int cy = need(schema.y);
  const int cd = need(schema.d);
  std::vector<std::string> znames = schema.z;
  if (znames.empty()) {
    for (const auto& h : header)
      if (!h.empty() && h[0] == 'z') znames.push_back(h);
  }
  if (znames.empty()) fail(ErrorKind::kSchema, "load_dataset: no instrument columns");
  std::vector<int> cz;
  for (const auto& z : znames) cz.push_back(need(z));
  const int ccl = schema.cluster ? need(*schema.cluster) : -1;
  const int cce = schema.cell ? need(*schema.cell) : -1;
  const int cgr = schema.group ? need(*schema.group) : -1;

  std::vector<double> ys, ds;
  std::vector<std::vector<double>> zs;
  std::vector<std::string> cls, ces, grs;
  LoadResult res;
  int row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      std::ostringstream os;
      os << "load_dataset: " << row_tag(row) << " has " << f.size()
         << " fields, header has " << header.size();
      fail(ErrorKind::kSchema, os.str());
    }
    bool missing = is_missing(f[cy]) || is_missing(f[cd]);
    for (int c : cz) missing = missing || is_missing(f[c]);
    for (int c : {ccl, cce, cgr})
      if (c >= 0) missing = missing || is_missing(f[c]);
    if (missing) {
      if (schema.drop_missing) {
        ++res.dropped_rows;
        continue;
      }
      fail(ErrorKind::kSchema, "load_dataset: missing value at " + row_tag(row));
    }
    double v = 0.0;
    if (!parse_double(f[cy], v))
      fail(ErrorKind::kSchema, "load_dataset: non-numeric " + schema.y + " at " + row_tag(row));
    ys.push_back(v);
    if (!parse_double(f[cd], v) || (v != 0.0 && v != 1.0))
      fail(ErrorKind::kSchema, "load_dataset: non-binary " + schema.d + " at " + row_tag(row));
    ds.push_back(v);
    std::vector<double> zr;
    for (size_t k = 0; k < cz.size(); ++k) {
      if (!parse_double(f[cz[k]], v) || (v != 0.0 && v != 1.0))
        fail(ErrorKind::kSchema,
             "load_dataset: non-binary " + znames[k] + " at " + row_tag(row));
      zr.push_back(v);
    }
    zs.push_back(std::move(zr));
    if (ccl >= 0) cls.push_back(f[ccl]);
    if (cce >= 0) ces.push_back(f[cce]);
    if (cgr >= 0) grs.push_back(f[cgr]);
  }
  if (ys.empty()) fail(ErrorKind::kInput, "load_dataset: no data rows");

  const int n = static_cast<int>(ys.size());
  const int L = static_cast<int>(cz.size());
  Dataset& out = res.data;
  out.y = Eigen::Map<Vec>(ys.data(), n);
  out.d = Eigen::Map<Vec>(ds.data(), n);
  out.z.resize(n, L);
  for (int i = 0; i < n; ++i)
    for (int l = 0; l < L; ++l) out.z(i, l) = zs[i][l];
  auto labels = [](const std::vector<std::string>& raw) {
    std::unordered_map<std::string, long long> ids;
    Labels out;
    out.reserve(raw.size());
    for (const auto& s : raw) {
      auto it = ids.find(s);
      if (it == ids.end()) it = ids.emplace(s, static_cast<long long>(ids.size())).first;
      out.push_back(it->second);
    }
    return out;
  };
  if (ccl >= 0) out.cluster = labels(cls);
  if (cce >= 0) out.cell = labels(ces);
  if (cgr >= 0) out.group = labels(grs);
  out.instrument_names = znames;
  check_dataset(out);
  return res;
}

LoadResult load_dataset_file(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kInput, "load_dataset: cannot open '" + path + "'");
  return load_dataset(in, schema);
}

CenteredDataset center(const Dataset& ds) {
  check_dataset(ds);
  const int n = ds.n();
  const int L = ds.L();
  CenteredDataset cd;
  cd.p_hat = ds.z.colwise().mean().transpose();
  for (int l = 0; l < L; ++l) {
    if (cd.p_hat(l) <= 0.0 || cd.p_hat(l) >= 1.0)
      fail(ErrorKind::kRelevance, "center: instrument " +
                                      instrument_name(ds.instrument_names, l) +
                                      " is constant");
  }
  Mat all(n, L + 2);
  all.col(0) = ds.y;
  all.col(1) = ds.d;
  all.rightCols(L) = ds.z;
  demean(all, ds.group);
  cd.y_c = all.col(0);
  cd.d_c = all.col(1);
  cd.z_c = all.rightCols(L);
  cd.group = ds.group;
  cd.cluster = ds.cluster;
  cd.instrument_names = ds.instrument_names;
  for (int l = static_cast<int>(cd.instrument_names.size()); l < L; ++l)
    cd.instrument_names.push_back(instrument_name({}, l));
  return cd;
}

CenteredDataset center(const CenteredDataset& in) {
  CenteredDataset cd = in;
  const int n = in.n();
  const int L = in.L();
  Mat all(n, L + 2);
  all.col(0) = in.y_c;
  all.col(1) = in.d_c;
  all.rightCols(L) = in.z_c;
  demean(all, in.group);
  cd.y_c = all.col(0);
  cd.d_c = all.col(1);
  cd.z_c = all.rightCols(L);
  return cd;
}

ValidationReport validate(const CenteredDataset& cd, const ValidateOptions& opt) {
  ValidationReport rep;
  const int n = cd.n();
  const int L = cd.L();
  for (int l = 0; l < L; ++l) {
    InstrumentCheck ic;
    ic.name = instrument_name(cd.instrument_names, l);
    const auto z = cd.z_c.col(l);
    const double szz = z.squaredNorm();
    const double sdz = cd.d_c.dot(z);
    ic.pi_hat = szz > 0.0 ? sdz / szz : 0.0;
    if (szz > 0.0) {
      const Vec u = cd.d_c - ic.pi_hat * z;
      const double var = (u.array().square() * z.array().square()).sum() / (szz * szz);
      ic.t_stat = var > 0.0 ? ic.pi_hat / std::sqrt(var)
                            : (ic.pi_hat == 0.0 ? 0.0 : std::copysign(INFINITY, ic.pi_hat));
    }
    ic.nonpositive = ic.pi_hat <= 0.0;
    ic.weak = !(std::abs(ic.t_stat) >= opt.weak_t);
    if (opt.auto_flip && ic.pi_hat < 0.0) {
      ic.flipped = true;
      ic.pi_hat = -ic.pi_hat;
      ic.t_stat = -ic.t_stat;
      ic.nonpositive = ic.pi_hat <= 0.0;
      rep.flipped.push_back(l);
    }
    rep.instruments.push_back(ic);
  }
  const Mat sz = cd.z_c.transpose() * cd.z_c / static_cast<double>(n);
  rep.sigma_z_min_eigenvalue = min_eigenvalue(sz);
  rep.eigenvalue_tolerance = 1e-10 * sz.trace();
  rep.sigma_z_singular = rep.sigma_z_min_eigenvalue <= rep.eigenvalue_tolerance;
  return rep;
}

Dataset flip_instruments(const Dataset& ds, const std::vector<int>& which) {
  Dataset out = ds;
  for (int l : which) {
    if (l < 0 || l >= ds.L()) fail(ErrorKind::kInput, "flip_instruments: index out of range");
    out.z.col(l) = (1.0 - ds.z.col(l).array()).matrix();
  }
  return out;
}

CenteredDataset flip_instruments(const CenteredDataset& cd, const std::vector<int>& which) {
  CenteredDataset out = cd;
  for (int l : which) {
    if (l < 0 || l >= cd.L()) fail(ErrorKind::kInput, "flip_instruments: index out of range");
    out.z_c.col(l) = -cd.z_c.col(l);
    out.p_hat(l) = 1.0 - cd.p_hat(l);
  }
  return out;
}

Dataset subset_rows(const Dataset& ds, const std::vector<int>& rows) {
  Dataset out;
  const int m = static_cast<int>(rows.size());
  out.y.resize(m);
  out.d.resize(m);
  out.z.resize(m, ds.L());
  auto pick = [&](const std::optional<Labels>& src, std::optional<Labels>& dst) {
    if (!src) return;
    dst = Labels(m);
    for (int i = 0; i < m; ++i) (*dst)[i] = (*src)[rows[i]];
  };
  for (int i = 0; i < m; ++i) {
    out.y(i) = ds.y(rows[i]);
    out.d(i) = ds.d(rows[i]);
    out.z.row(i) = ds.z.row(rows[i]);
  }
  pick(ds.cluster, out.cluster);
  pick(ds.cell, out.cell);
  pick(ds.group, out.group);
  out.instrument_names = ds.instrument_names;
  return out;
}

namespace {
std::vector<int> kept_columns(int L, const std::vector<int>& which) {
  std::vector<int> keep;
  for (int l = 0; l < L; ++l)
    if (std::find(which.begin(), which.end(), l) == which.end()) keep.push_back(l);
  if (keep.empty()) fail(ErrorKind::kRelevance, "drop_instruments: no instruments left");
  return keep;
}
}  // namespace

Dataset drop_instruments(const Dataset& ds, const std::vector<int>& which) {
  const auto keep = kept_columns(ds.L(), which);
  Dataset out = ds;
  out.z.resize(ds.n(), static_cast<int>(keep.size()));
  out.instrument_names.clear();
  for (size_t k = 0; k < keep.size(); ++k) {
    out.z.col(static_cast<int>(k)) = ds.z.col(keep[k]);
    out.instrument_names.push_back(instrument_name(ds.instrument_names, keep[k]));
  }
  return out;
}

CenteredDataset drop_instruments(const CenteredDataset& cd, const std::vector<int>& which) {
  const auto keep = kept_columns(cd.L(), which);
  CenteredDataset out = cd;
  out.z_c.resize(cd.n(), static_cast<int>(keep.size()));
  out.p_hat.resize(static_cast<int>(keep.size()));
  out.instrument_names.clear();
  for (size_t k = 0; k < keep.size(); ++k) {
    out.z_c.col(static_cast<int>(k)) = cd.z_c.col(keep[k]);
    out.p_hat(static_cast<int>(k)) = cd.p_hat(keep[k]);
    out.instrument_names.push_back(instrument_name(cd.instrument_names, keep[k]));
  }
  return out;
}

}  // namespace ivrt
