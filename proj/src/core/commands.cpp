#include "ivrt/commands.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

#include "json.hpp"

#include "ivrt/compliance.hpp"
#include "ivrt/error.hpp"
#include "ivrt/gmm.hpp"
#include "ivrt/moments.hpp"
#include "ivrt/mte.hpp"
#include "ivrt/optim.hpp"
#include "ivrt/report.hpp"
#include "ivrt/rt.hpp"
#include "ivrt/sim.hpp"

namespace ivrt {
namespace {

using json = nlohmann::ordered_json;

constexpr const char* kSpecVersion = "1";
constexpr int kMaxPropensityL = 12;

json vec_json(const Vec& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json mat_json(const Mat& m) {
  json a = json::array();
  for (int i = 0; i < m.rows(); ++i) a.push_back(vec_json(m.row(i).transpose()));
  return a;
}

Vec json_vec(const json& j, const char* what) {
  if (!j.is_array()) fail(ErrorKind::kSchema, std::string(what) + " must be an array of numbers");
  Vec v(static_cast<int>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail(ErrorKind::kSchema, std::string(what) + " must hold numbers only");
    v(static_cast<int>(i)) = j[i].get<double>();
  }
  return v;
}

json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kSchema, origin + ": " + e.what());
  }
}

// {"file": path} is replaced by the parsed content of that JSON file.
json resolve(const json& j, const char* what) {
  if (j.is_object() && j.size() == 1 && j.contains("file")) {
    const std::string path = j["file"].get<std::string>();
    return parse_json_text(read_text_file(path), std::string(what) + " file " + path);
  }
  return j;
}

template <class T>
T get_or(const json& cfg, const char* key, T fallback) {
  if (!cfg.contains(key) || cfg[key].is_null()) return fallback;
  try {
    return cfg[key].get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::kSchema, std::string("config key '") + key + "' has the wrong type");
  }
}

std::optional<std::string> opt_string(const json& cfg, const char* key) {
  if (!cfg.contains(key) || cfg[key].is_null()) return std::nullopt;
  if (!cfg[key].is_string()) fail(ErrorKind::kSchema, std::string("config key '") + key + "' must be a string");
  return cfg[key].get<std::string>();
}

json header(const char* command) {
  json r;
  r["spec_version"] = kSpecVersion;
  r["command"] = command;
  return r;
}

// Loaded and prepared sample shared by the data-driven commands.
struct Prepared {
  Dataset ds;
  CenteredDataset cd;
  MomentSummary ms;
  ValidationReport validation;
  int dropped_rows = 0;
  bool cluster = false;
  std::vector<std::string> warnings;
};

Dataset load_from_config(const json& cfg, int& dropped) {
  Schema schema;
  if (cfg.contains("schema")) {
    const json s = resolve(cfg["schema"], "schema");
    if (!s.is_object()) fail(ErrorKind::kSchema, "schema must be a JSON object");
    schema.y = get_or<std::string>(s, "y", "y");
    schema.d = get_or<std::string>(s, "d", "d");
    if (s.contains("z")) schema.z = s["z"].get<std::vector<std::string>>();
    schema.cluster = opt_string(s, "cluster");
    schema.cell = opt_string(s, "cell");
    schema.group = opt_string(s, "group");
    schema.drop_missing = get_or<bool>(s, "drop_missing", false);
  }
  if (auto c = opt_string(cfg, "cluster")) schema.cluster = c;
  if (auto c = opt_string(cfg, "cell")) schema.cell = c;
  if (auto c = opt_string(cfg, "group")) schema.group = c;
  const auto input = opt_string(cfg, "input");
  if (!input) fail(ErrorKind::kSchema, "no input file given");
  LoadResult lr = load_dataset_file(*input, schema);
  dropped = lr.dropped_rows;
  return std::move(lr.data);
}

Prepared prepare(const json& cfg, const Dataset* data) {
  Prepared p;
  p.ds = data ? *data : load_from_config(cfg, p.dropped_rows);
  check_dataset(p.ds);
  p.cluster = p.ds.cluster.has_value();
  p.cd = center(p.ds);
  ValidateOptions vo;
  vo.auto_flip = get_or<bool>(cfg, "auto_flip", false);
  p.validation = validate(p.cd, vo);
  if (!p.validation.flipped.empty()) {
    p.cd = flip_instruments(p.cd, p.validation.flipped);
    p.ds = flip_instruments(p.ds, p.validation.flipped);
    for (int l : p.validation.flipped)
      p.warnings.push_back("instrument " + p.cd.instrument_names[l] + " recoded as 1 - z");
  }
  p.ms = summarize(p.cd);
  if (!p.ms.undefined_wald.empty()) {
    if (!get_or<bool>(cfg, "lenient", false)) require_defined_wald(p.ms, p.cd.instrument_names);
    const std::vector<int> drop = p.ms.undefined_wald;
    p.cd = drop_undefined_wald(p.cd, p.ms, p.warnings);
    p.ds = drop_instruments(p.ds, drop);
    if (p.cd.L() == 0) fail(ErrorKind::kRelevance, "no instrument has a defined Wald ratio");
    p.ms = summarize(p.cd);
  }
  for (const auto& ic : p.validation.instruments) {
    if (ic.nonpositive && !ic.flipped)
      p.warnings.push_back("instrument " + ic.name + " has a nonpositive first stage");
    if (ic.weak) p.warnings.push_back("instrument " + ic.name + " is weak (|t| < 3.16)");
  }
  if (p.validation.sigma_z_singular)
    p.warnings.push_back("instrument covariance is numerically singular");
  return p;
}

json names_json(const std::vector<std::string>& names) {
  json a = json::array();
  for (const auto& s : names) a.push_back(s);
  return a;
}

json moments_json(const MomentSummary& ms) {
  json m;
  m["p"] = vec_json(ms.p);
  m["var_z"] = vec_json(ms.var_z);
  m["pi"] = vec_json(ms.pi);
  m["rho"] = vec_json(ms.rho);
  m["gamma"] = vec_json(ms.gamma);
  m["wald"] = vec_json(ms.wald);
  return m;
}

json validation_json(const ValidationReport& v) {
  json j;
  json inst = json::array();
  for (const auto& ic : v.instruments) {
    json e;
    e["name"] = ic.name;
    e["pi_hat"] = ic.pi_hat;
    e["t_stat"] = ic.t_stat;
    e["nonpositive"] = ic.nonpositive;
    e["weak"] = ic.weak;
    e["flipped"] = ic.flipped;
    inst.push_back(e);
  }
  j["instruments"] = inst;
  j["sigma_z_min_eigenvalue"] = v.sigma_z_min_eigenvalue;
  j["eigenvalue_tolerance"] = v.eigenvalue_tolerance;
  j["sigma_z_singular"] = v.sigma_z_singular;
  return j;
}

json prd_json(const PrdReport& r, const std::vector<std::string>& names) {
  json j;
  j["passed"] = r.passed;
  j["tolerance"] = r.tolerance;
  j["worst_margin"] = vec_json(r.worst_margin);
  j["worst"] = r.worst;
  j["worst_instrument"] = r.worst_ell >= 0 ? json(names[r.worst_ell]) : json(nullptr);
  j["worst_upper_set_mask"] = r.worst_set;
  j["upper_sets_checked"] = r.upper_sets_checked;
  json u = json::array();
  for (int l : r.undefined) u.push_back(names[l]);
  j["undefined"] = u;
  return j;
}

json prd_summary(const Dataset& ds, double tol, std::vector<std::string>& warnings) {
  if (ds.L() > 5) {
    json j;
    j["skipped"] = "exact upper-set test supports at most 5 instruments";
    return j;
  }
  const PrdReport r = prd_check(empirical_joint(ds), tol);
  if (!r.passed) warnings.push_back("instrument joint fails the positive regression dependence check");
  return prd_json(r, ds.instrument_names);
}

enum class WeightSource { kEw, kCsw, kCustom };

struct WeightChoice {
  WeightSource source = WeightSource::kCsw;
  std::optional<Vec> custom;
};

WeightChoice weight_choice(const json& cfg, int L) {
  WeightChoice w;
  if (!cfg.contains("weights") || cfg["weights"].is_null()) return w;
  const json& j = cfg["weights"];
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "ew") w.source = WeightSource::kEw;
    else if (s == "csw") w.source = WeightSource::kCsw;
    else fail(ErrorKind::kSchema, "weights must be ew, csw, a vector or a file");
    return w;
  }
  w.source = WeightSource::kCustom;
  if (j.is_object() && j.contains("file")) {
    const std::string path = j["file"].get<std::string>();
    const std::string text = read_text_file(path);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && (text[first] == '[' || text[first] == '{')) {
      json parsed = parse_json_text(text, "weights file " + path);
      if (parsed.is_object() && parsed.contains("omega")) parsed = parsed["omega"];
      w.custom = json_vec(parsed, "weights");
    } else {
      w.custom = parse_vector_csv(text);
    }
  } else {
    w.custom = json_vec(j, "weights");
  }
  if (w.custom->size() != L)
    fail(ErrorKind::kInput, "custom weights have " + std::to_string(w.custom->size()) +
                                " entries but there are " + std::to_string(L) + " instruments");
  require_simplex(*w.custom, "custom weights");
  return w;
}

const char* source_name(WeightSource s) {
  switch (s) {
    case WeightSource::kEw: return "ew";
    case WeightSource::kCsw: return "csw";
    case WeightSource::kCustom: return "custom";
  }
  return "custom";
}

json rt_json(const char* name, const RtResult& r) {
  json j;
  j["name"] = name;
  j["estimate"] = r.beta;
  j["se"] = r.se;
  j["omega"] = vec_json(r.omega);
  j["variance"] = r.variance;
  return j;
}

json egmm_json(const EgmmResult& e) {
  json j;
  j["name"] = "egmm";
  j["estimate"] = e.gmm.beta;
  j["se"] = e.gmm.se;
  j["se_type"] = "uncorrected sandwich";
  j["lambda"] = vec_json(e.gmm.lambda);
  j["mode"] = e.mode == EgmmMode::kIterated ? "iterated" : "two_step";
  j["iterations"] = e.iterations;
  j["converged"] = e.converged;
  j["fixed_point_residual"] = e.fixed_point_residual;
  j["weight_beta"] = e.weight_beta;
  j["ridge"] = e.ridge;
  if (e.j) {
    json jt;
    jt["statistic"] = e.j->j;
    jt["df"] = e.j->df;
    jt["pvalue"] = e.j->pvalue;
    j["j_test"] = jt;
  } else {
    j["j_test"] = nullptr;
  }
  if (!e.j_note.empty()) j["j_note"] = e.j_note;
  if (!e.roots.empty()) j["roots"] = e.roots;
  return j;
}

// Weights for the selected RT target, or nullopt with a warning when CSW is
// undefined and was not explicitly requested.
std::optional<Vec> csw_or_warn(const MomentSummary& ms, bool required,
                               std::vector<std::string>& warnings) {
  try {
    return csw_weights(ms);
  } catch (const Error& e) {
    if (required) throw;
    warnings.push_back(std::string("complier-share weights skipped: ") + e.what());
    return std::nullopt;
  }
}

Vec selected_weights(const WeightChoice& wc, const MomentSummary& ms) {
  switch (wc.source) {
    case WeightSource::kEw: return ew_weights(ms.L());
    case WeightSource::kCsw: return csw_weights(ms);
    case WeightSource::kCustom: return *wc.custom;
  }
  return ew_weights(ms.L());
}

CommandResult cmd_estimate(const json& cfg, const Dataset* data) {
  Prepared p = prepare(cfg, data);
  const WeightChoice wc = weight_choice(cfg, p.ms.L());
  json r = header("estimate");
  r["n"] = p.ms.n;
  r["L"] = p.ms.L();
  r["instruments"] = names_json(p.cd.instrument_names);
  r["dropped_rows"] = p.dropped_rows;
  r["grouped"] = p.ds.group.has_value();
  r["cluster_robust"] = p.cluster;
  r["weights"] = source_name(wc.source);
  r["moments"] = moments_json(p.ms);

  json est = json::array();
  const GmmResult ts = tsls(p.ms, p.cd, p.cluster);
  {
    json j;
    j["name"] = "2sls";
    j["estimate"] = ts.beta;
    j["se"] = ts.se;
    j["lambda"] = vec_json(ts.lambda);
    est.push_back(j);
  }
  EgmmOptions eo;
  eo.cluster = p.cluster;
  eo.tol = get_or<double>(cfg, "tol", 1e-10);
  eo.scan = get_or<bool>(cfg, "scan", false);
  eo.mode = get_or<std::string>(cfg, "egmm", "iterated") == "two_step" ? EgmmMode::kTwoStep
                                                                       : EgmmMode::kIterated;
  const EgmmResult eg = egmm(p.ms, p.cd, eo);
  if (!eg.converged)
    p.warnings.push_back("EGMM iteration did not converge; residual reported");
  if (eg.ridge > 0.0) p.warnings.push_back("ridge added to the EGMM weighting matrix");
  est.push_back(egmm_json(eg));

  const GammaWald gw = gamma_wald(p.cd, p.ms, p.cluster);
  if (auto w = csw_or_warn(p.ms, wc.source == WeightSource::kCsw, p.warnings))
    est.push_back(rt_json("rt_csw", rt_estimate(p.ms, gw, *w)));
  est.push_back(rt_json("rt_ew", rt_estimate(p.ms, gw, ew_weights(p.ms.L()))));
  if (wc.custom) est.push_back(rt_json("rt_custom", rt_estimate(p.ms, gw, *wc.custom)));
  r["estimators"] = est;

  if (p.ds.cell) {
    const Vec w = selected_weights(wc, p.ms);
    const int min_cell = get_or<int>(cfg, "min_cell_size", 30);
    const StratifiedRt st = rt_stratified(p.ds, w, StratMode::kMarginal, min_cell, p.cluster);
    json s;
    json cells = json::array();
    for (const auto& c : st.cells) {
      json e;
      e["cell"] = c.label;
      e["n"] = c.n;
      e["estimate"] = c.rt.beta;
      e["se"] = c.rt.se;
      e["wald"] = vec_json(c.rt.per_wald);
      cells.push_back(e);
    }
    s["cells"] = cells;
    s["marginal"] = rt_json("rt_marginal", *st.marginal);
    s["gamma_within"] = mat_json(st.gamma_within);
    s["gamma_between"] = mat_json(st.gamma_between);
    r["stratified"] = s;
  }
  r["validation"] = validation_json(p.validation);
  r["prd"] = prd_summary(p.ds, get_or<double>(cfg, "prd_tol", 0.0), p.warnings);
  r["warnings"] = p.warnings;
  return {r.dump(2) + "\n", {}};
}

CommandResult cmd_diagnose(const json& cfg, const Dataset* data) {
  Prepared p = prepare(cfg, data);
  const int L = p.ms.L();
  json r = header("diagnose");
  r["n"] = p.ms.n;
  r["L"] = L;
  r["instruments"] = names_json(p.cd.instrument_names);
  r["validation"] = validation_json(p.validation);
  r["moments"] = moments_json(p.ms);
  r["sigma_z"] = mat_json(p.ms.sigma_z);

  const GmmResult ts = tsls(p.ms, p.cd, p.cluster);
  const OmegaMatrix om = omega_at(p.cd, ts.beta, p.cluster);
  const DiagonalDiagnostics dd = diagonal_diagnostics(p.ms, om);
  json diag;
  diag["beta_at"] = om.beta_at;
  json rows = json::array();
  for (int l = 0; l < L; ++l) {
    json e;
    e["instrument"] = p.cd.instrument_names[l];
    e["sigma2_eps"] = dd.rows[l].sigma2_eps;
    e["lambda_2sls"] = dd.rows[l].lambda_2sls;
    e["lambda_egmm"] = dd.rows[l].lambda_egmm;
    e["ratio"] = dd.rows[l].ratio;
    rows.push_back(e);
  }
  diag["rows"] = rows;
  diag["max_offdiag"] = dd.max_offdiag;
  diag["max_offdiag_corr"] = dd.max_offdiag_corr;
  r["omega_diagonal"] = diag;

  const GammaWald gw = gamma_wald(p.cd, p.ms, p.cluster);
  r["gamma_wald"] = mat_json(gw.values);
  std::string forest = "instrument,wald,se,ci_lo,ci_hi\n";
  for (int l = 0; l < L; ++l) {
    const double se = std::sqrt(gw.values(l, l) / p.ms.n);
    forest += p.cd.instrument_names[l] + "," + format_double(p.ms.wald(l)) + "," +
              format_double(se) + "," + format_double(p.ms.wald(l) - 1.959963984540054 * se) +
              "," + format_double(p.ms.wald(l) + 1.959963984540054 * se) + "\n";
  }
  std::vector<Artifact> art;
  art.push_back({"wald_forest.csv", forest});
  art.push_back({"gamma_wald.csv", matrix_csv(gw.values, p.cd.instrument_names)});
  art.push_back({"omega.csv", matrix_csv(om.values, p.cd.instrument_names)});

  r["prd"] = prd_summary(p.ds, get_or<double>(cfg, "prd_tol", 0.0), p.warnings);

  if (L <= kMaxPropensityL) {
    const PropensityModel pm = empirical_propensity(p.ds);
    json pj;
    pj["breaks"] = vec_json(pm.breaks);
    json viol = json::array();
    for (const auto& [z, z2] : pm.monotonicity_violations()) viol.push_back({z, z2});
    pj["monotonicity_violations"] = viol;
    if (!viol.empty()) p.warnings.push_back("estimated propensity is not monotone in the instruments");
    json hs = json::array();
    std::vector<std::string> labels;
    std::vector<WeightFn> fns;
    for (int l = 0; l < L; ++l) {
      json e;
      e["instrument"] = p.cd.instrument_names[l];
      try {
        const WeightFn h = hv_weight(pm, l);
        e["min_value"] = h.min_value();
        e["integral"] = h.integral();
        labels.push_back(p.cd.instrument_names[l]);
        fns.push_back(h);
      } catch (const Error& err) {
        e["error"] = err.what();
      }
      hs.push_back(e);
    }
    pj["weight_functions"] = hs;
    if (p.ds.group)
      p.warnings.push_back("propensity diagnostics ignore group labels");
    r["propensity"] = pj;
    art.push_back({"hv_weights.csv", weight_fns_csv(labels, fns)});
  } else {
    r["propensity"] = {{"skipped", "too many instruments for the cell table"}};
  }
  r["warnings"] = p.warnings;
  return {r.dump(2) + "\n", art};
}

json decomposition_json(const char* name, const EfficiencyDecomposition& e, const Vec& omega) {
  json j;
  j["name"] = name;
  j["omega"] = vec_json(omega);
  j["beta_star"] = e.beta_star;
  j["v_rt"] = e.v_rt;
  j["frontier"] = e.frontier_part;
  j["composition_cost"] = e.composition_cost;
  j["frontier_omega"] = vec_json(e.frontier_omega);
  return j;
}

CommandResult cmd_frontier(const json& cfg, const Dataset* data) {
  Prepared p = prepare(cfg, data);
  const WeightChoice wc = weight_choice(cfg, p.ms.L());
  const int grid = get_or<int>(cfg, "grid", 101);
  const GammaWald gw = gamma_wald(p.cd, p.ms, p.cluster);
  const FrontierCurve fc = variance_frontier(gw, p.ms.wald, grid);
  json r = header("frontier");
  r["n"] = p.ms.n;
  r["L"] = p.ms.L();
  r["instruments"] = names_json(p.cd.instrument_names);
  r["grid_size"] = fc.grid.size();
  r["beta_min"] = fc.grid(0);
  r["beta_max"] = fc.grid(fc.grid.size() - 1);
  r["psd_clip"] = fc.psd_clip;
  r["wald"] = vec_json(p.ms.wald);
  json pts = json::array();
  if (auto w = csw_or_warn(p.ms, wc.source == WeightSource::kCsw, p.warnings))
    pts.push_back(decomposition_json("csw", efficiency_decomposition(*w, gw, p.ms.wald), *w));
  const Vec ew = ew_weights(p.ms.L());
  pts.push_back(decomposition_json("ew", efficiency_decomposition(ew, gw, p.ms.wald), ew));
  if (wc.custom)
    pts.push_back(decomposition_json("custom", efficiency_decomposition(*wc.custom, gw, p.ms.wald),
                                     *wc.custom));
  r["points"] = pts;
  r["warnings"] = p.warnings;
  return {r.dump(2) + "\n", {{"frontier.csv", frontier_csv(fc)}}};
}

PropensityLaw law_json(const json& j, const char* what) {
  if (!j.is_object() || !j.contains("values") || !j.contains("probs"))
    fail(ErrorKind::kSchema, std::string(what) + " needs values and probs");
  return {json_vec(j["values"], what), json_vec(j["probs"], what)};
}

// Distinct propensity values in increasing order with their masses.
std::pair<Vec, Vec> sorted_law(const PropensityLaw& law) {
  std::map<double, double> m;
  for (int i = 0; i < law.values.size(); ++i) m[law.values(i)] += law.probs(i);
  Vec probs(static_cast<int>(m.size())), rates(static_cast<int>(m.size()));
  int k = 0;
  for (const auto& [v, pr] : m) {
    rates(k) = v;
    probs(k++) = pr;
  }
  return {probs, rates};
}

CommandResult cmd_target_prte(const json& cfg, const Dataset* data) {
  if (!cfg.contains("policy")) fail(ErrorKind::kSchema, "target-prte needs a policy");
  const json pol = resolve(cfg["policy"], "policy");
  Prepared p = prepare(cfg, data);
  const int L = p.ms.L();
  if (L > kMaxPropensityL) fail(ErrorKind::kCapacity, "target-prte supports at most 12 instruments");
  const PropensityModel pm = empirical_propensity(p.ds);
  if (!pm.monotonicity_violations().empty())
    p.warnings.push_back("estimated propensity is not monotone in the instruments");
  const std::vector<WeightFn> hs = hv_weights(pm);

  const std::string type = get_or<std::string>(pol, "type", "staircase");
  PolicyPair pp;
  if (type == "staircase") {
    if (pol.contains("group_probs") || pol.contains("approval_rates")) {
      pp = staircase_policy(json_vec(pol.at("group_probs"), "group_probs"),
                            json_vec(pol.at("approval_rates"), "approval_rates"));
    } else {
      const auto [probs, rates] = sorted_law(propensity_law(pm));
      pp = staircase_policy(probs, rates);
    }
  } else if (type == "shift") {
    pp.status_quo = pol.contains("status_quo") ? law_json(pol["status_quo"], "status_quo")
                                               : propensity_law(pm);
    pp.counterfactual = law_json(pol.at("counterfactual"), "counterfactual");
  } else {
    fail(ErrorKind::kSchema, "policy type must be staircase or shift");
  }
  const WeightFn wp = prte_weight(pp);
  const GammaWald gw = gamma_wald(p.cd, p.ms, p.cluster);
  const PrteTarget t = prte_target(hs, wp, gw.values);
  const RtResult rt = rt_estimate(p.ms, gw, t.omega);

  json r = header("target-prte");
  r["n"] = p.ms.n;
  r["L"] = L;
  r["instruments"] = names_json(p.cd.instrument_names);
  r["policy_type"] = type;
  r["policy_mass"] = policy_mass(pp);
  r["omega"] = vec_json(t.omega);
  r["estimate"] = rt.beta;
  r["se"] = rt.se;
  r["l2_error"] = t.l2_error;
  r["relative_l2"] = t.relative_l2;
  r["stage1_omega"] = vec_json(t.stage1_omega);
  r["stage1_value"] = t.stage1_value;
  r["face_rank"] = t.face_rank;
  r["psd_clip"] = t.psd_clip;

  const double range = p.ms.wald.maxCoeff() - p.ms.wald.minCoeff();
  const Vec mult = pol.contains("lipschitz_multipliers")
                       ? json_vec(pol["lipschitz_multipliers"], "lipschitz_multipliers")
                       : Vec((Vec(2) << 1.0, 3.0).finished());
  json lip = json::array();
  for (int k = 0; k < mult.size(); ++k) {
    json e;
    e["multiplier"] = mult(k);
    e["M"] = mult(k) * range;
    e["bound"] = gap_lipschitz(mult(k) * range, t.l2_error);
    lip.push_back(e);
  }
  r["wald_range"] = range;
  r["lipschitz"] = lip;

  GapRestrictions gr;
  const json gap = pol.contains("gap") ? pol["gap"] : json::object();
  if (gap.contains("bounds")) {
    const Vec b = json_vec(gap["bounds"], "gap bounds");
    if (b.size() != 2) fail(ErrorKind::kSchema, "gap bounds must be [lo, hi]");
    gr.bounds = std::make_pair(b(0), b(1));
  } else {
    gr.bounds = std::make_pair(p.ds.y.minCoeff(), p.ds.y.maxCoeff());
  }
  gr.mtr = get_or<bool>(gap, "mtr", false);
  gr.mts = get_or<bool>(gap, "mts", false);
  const GapBounds gb = gap_lp(p.ms.wald, hs, t.error_fn, gr);
  json g;
  g["outcome_bounds"] = {gr.bounds->first, gr.bounds->second};
  g["mtr"] = gr.mtr;
  g["mts"] = gr.mts;
  g["feasible"] = gb.feasible;
  g["status_lo"] = lp_status_name(gb.status_lo);
  g["status_hi"] = lp_status_name(gb.status_hi);
  g["lo"] = gb.feasible ? json(gb.lo) : json(nullptr);
  g["hi"] = gb.feasible ? json(gb.hi) : json(nullptr);
  g["intervals"] = gb.intervals;
  r["gap"] = g;
  if (!gb.feasible) p.warnings.push_back("identification-gap LP is infeasible under the stated restrictions");
  r["warnings"] = p.warnings;

  std::vector<std::string> labels = {"w_p", "composite", "error"};
  std::vector<WeightFn> fns = {wp, t.composite, t.error_fn};
  for (int l = 0; l < L; ++l) {
    labels.push_back(p.cd.instrument_names[l]);
    fns.push_back(hs[l]);
  }
  return {r.dump(2) + "\n", {{"prte_weights.csv", weight_fns_csv(labels, fns)}}};
}

CommandResult cmd_prd_check(const json& cfg, const Dataset* data) {
  json r = header("prd-check");
  InstrumentJoint zj;
  std::vector<std::string> names;
  double tol;
  if (cfg.contains("joint")) {
    const json j = resolve(cfg["joint"], "joint");
    zj = make_joint(j.at("L").get<int>(), json_vec(j.at("prob"), "joint prob"));
    for (int l = 0; l < zj.L; ++l) names.push_back("z" + std::to_string(l + 1));
    tol = get_or<double>(cfg, "tol", 1e-9);
    r["source"] = "joint";
  } else {
    int dropped = 0;
    const Dataset ds = data ? *data : load_from_config(cfg, dropped);
    check_dataset(ds);
    zj = empirical_joint(ds);
    names = ds.instrument_names;
    tol = get_or<double>(cfg, "tol", 0.0);
    r["source"] = "data";
    r["n"] = ds.n();
  }
  r["L"] = zj.L;
  r["instruments"] = names_json(names);
  r["joint"] = vec_json(zj.prob);
  json cov = json::array();
  for (int l = 0; l < zj.L; ++l) {
    json row = json::array();
    for (int k = 0; k < zj.L; ++k) row.push_back(instrument_covariance(zj, l, k));
    cov.push_back(row);
  }
  r["covariance"] = cov;
  r["result"] = prd_json(prd_check(zj, tol), names);
  return {r.dump(2) + "\n", {}};
}

McEstimator estimator_from_name(const std::string& s) {
  if (s == "2sls") return McEstimator::kTsls;
  if (s == "egmm") return McEstimator::kEgmm;
  if (s == "rt_ew") return McEstimator::kRtEw;
  if (s == "rt_csw") return McEstimator::kRtCsw;
  if (s == "rt_custom") return McEstimator::kRtCustom;
  fail(ErrorKind::kSchema, "unknown estimator '" + s + "'");
}

CommandResult cmd_simulate(const json& cfg) {
  if (!cfg.contains("spec")) fail(ErrorKind::kSchema, "simulate needs a spec");
  const json spec = resolve(cfg["spec"], "spec");
  const std::string dgp = get_or<std::string>(spec, "dgp", "star");
  McConfig mc;
  mc.R = get_or<int>(cfg, "R", get_or<int>(spec, "R", 100));
  mc.n = get_or<int>(cfg, "n", get_or<int>(spec, "n", 1000));
  mc.seed = get_or<std::uint64_t>(cfg, "seed", get_or<std::uint64_t>(spec, "seed", 1));
  mc.threads = get_or<int>(cfg, "threads", 1);
  if (spec.contains("trim")) {
    const Vec t = json_vec(spec["trim"], "trim");
    if (t.size() != 2) fail(ErrorKind::kSchema, "trim must be [lo, hi]");
    mc.trim_lo = t(0);
    mc.trim_hi = t(1);
  }
  if (spec.contains("estimators")) {
    mc.estimators.clear();
    for (const auto& e : spec["estimators"]) mc.estimators.push_back(estimator_from_name(e.get<std::string>()));
  }
  if (spec.contains("custom_omega")) mc.custom_omega = json_vec(spec["custom_omega"], "custom_omega");

  PopulationMoments pm;
  Sampler sampler;
  if (dgp == "star") {
    StarDgpSpec s;
    s.shares = json_vec(spec.at("shares"), "shares");
    s.p = json_vec(spec.at("p"), "p");
    s.late = json_vec(spec.at("late"), "late");
    s.sigma2_y0 = json_vec(spec.at("sigma2_y0"), "sigma2_y0");
    s.sigma2_tau = json_vec(spec.at("sigma2_tau"), "sigma2_tau");
    pm = population_moments(s);
    sampler = [s](int n, std::uint64_t seed, std::uint64_t stream) {
      return star_sample(s, n, seed, stream);
    };
  } else if (dgp == "latent") {
    LatentDgpSpec s;
    const int L = spec.at("L").get<int>();
    s.joint = make_joint(L, json_vec(spec.at("joint"), "joint"));
    s.p_of_z = json_vec(spec.at("p_of_z"), "p_of_z");
    const json& m = spec.at("mte");
    s.mte = make_weight_fn(json_vec(m.at("breaks"), "mte breaks"), json_vec(m.at("values"), "mte values"));
    s.noise_sd = get_or<double>(spec, "noise_sd", 0.0);
    s.sigma2_y0 = get_or<double>(spec, "sigma2_y0", 1.0);
    pm = population_moments(s);
    sampler = [s](int n, std::uint64_t seed, std::uint64_t stream) {
      return latent_sample(s, n, seed, stream);
    };
  } else {
    fail(ErrorKind::kSchema, "spec dgp must be star or latent");
  }
  const PopulationTargets t = population_targets(pm, mc.custom_omega);
  const McReport rep = monte_carlo(sampler, t, mc);

  json r = header("simulate");
  r["dgp"] = dgp;
  r["R"] = rep.R;
  r["n"] = rep.n;
  r["seed"] = rep.seed;
  r["trim"] = {rep.trim_lo, rep.trim_hi};
  json pt;
  pt["wald"] = vec_json(t.wald);
  pt["gamma"] = vec_json(t.gamma);
  pt["beta_2sls"] = t.beta_2sls;
  pt["lambda_2sls"] = vec_json(t.lambda_2sls);
  pt["beta_egmm"] = t.beta_egmm;
  pt["lambda_egmm"] = vec_json(t.lambda_egmm);
  pt["egmm_residual"] = t.egmm_residual;
  pt["beta_csw"] = t.beta_csw;
  pt["beta_ew"] = t.beta_ew;
  if (t.beta_rt) pt["beta_rt_custom"] = *t.beta_rt;
  r["population"] = pt;
  json rows = json::array();
  for (const McRow& row : rep.rows) {
    json e;
    e["estimator"] = row.estimator;
    e["target"] = row.target;
    e["bias"] = row.bias;
    e["sd"] = row.sd;
    e["rmse"] = row.rmse;
    e["coverage"] = row.coverage;
    e["mean_se"] = row.mean_se;
    e["used"] = row.used;
    e["kept"] = row.kept;
    e["failures"] = row.failures;
    rows.push_back(e);
  }
  r["estimators"] = rows;
  json jt;
  jt["reject_rate"] = rep.j_reject_rate;
  jt["mean"] = rep.j_mean;
  jt["count"] = rep.j_count;
  r["j_test"] = jt;
  r["sample_failures"] = rep.sample_failures;
  return {r.dump(2) + "\n", {{"mc_report.csv", mc_csv(rep)}}};
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"estimate", "diagnose", "frontier",
                                                 "target-prte", "prd-check", "simulate"};
  return names;
}

CommandResult run_command(const std::string& command, const std::string& config_json,
                          const Dataset* data) {
  const json cfg = config_json.empty() ? json::object() : parse_json_text(config_json, "config");
  if (!cfg.is_object()) fail(ErrorKind::kSchema, "config must be a JSON object");
  try {
    if (command == "estimate") return cmd_estimate(cfg, data);
    if (command == "diagnose") return cmd_diagnose(cfg, data);
    if (command == "frontier") return cmd_frontier(cfg, data);
    if (command == "target-prte") return cmd_target_prte(cfg, data);
    if (command == "prd-check") return cmd_prd_check(cfg, data);
    if (command == "simulate") return cmd_simulate(cfg);
  } catch (const json::exception& e) {
    fail(ErrorKind::kSchema, std::string("config: ") + e.what());
  }
  fail(ErrorKind::kSchema, "unknown command '" + command + "'");
}

}  // namespace ivrt
