#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "ivrt/ivrt.h"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Options {
  std::string input;
  std::string schema;
  std::string weights;
  std::string policy;
  std::string spec;
  std::string joint;
  std::string cluster, cell, group;
  std::string out;
  std::string egmm = "iterated";
  std::optional<unsigned long long> seed;
  std::optional<int> grid, R, n, threads, min_cell_size;
  std::optional<double> tol;
  bool lenient = false;
  bool auto_flip = false;
  bool scan = false;
};

json file_ref(const std::string& path) { return json{{"file", path}}; }

json build_config(const Options& o) {
  json c = json::object();
  if (!o.input.empty()) c["input"] = o.input;
  if (!o.schema.empty()) c["schema"] = file_ref(o.schema);
  if (!o.cluster.empty()) c["cluster"] = o.cluster;
  if (!o.cell.empty()) c["cell"] = o.cell;
  if (!o.group.empty()) c["group"] = o.group;
  if (!o.weights.empty()) {
    if (o.weights == "ew" || o.weights == "csw") c["weights"] = o.weights;
    else c["weights"] = file_ref(o.weights);
  }
  if (!o.policy.empty()) c["policy"] = file_ref(o.policy);
  if (!o.spec.empty()) c["spec"] = file_ref(o.spec);
  if (!o.joint.empty()) c["joint"] = file_ref(o.joint);
  if (o.seed) c["seed"] = *o.seed;
  if (o.grid) c["grid"] = *o.grid;
  if (o.R) c["R"] = *o.R;
  if (o.n) c["n"] = *o.n;
  if (o.threads) c["threads"] = *o.threads;
  if (o.min_cell_size) c["min_cell_size"] = *o.min_cell_size;
  if (o.tol) c["tol"] = *o.tol;
  if (o.lenient) c["lenient"] = true;
  if (o.auto_flip) c["auto_flip"] = true;
  if (o.scan) c["scan"] = true;
  c["egmm"] = o.egmm;
  return c;
}

std::string report_name(const std::string& command) {
  if (command == "simulate") return "mc_report.json";
  std::string s = command;
  for (char& ch : s)
    if (ch == '-') ch = '_';
  return s + ".json";
}

bool write_file(const fs::path& p, const char* data) {
  std::ofstream f(p, std::ios::binary);
  if (!f) return false;
  f << data;
  return static_cast<bool>(f);
}

int run(const std::string& command, const Options& o) {
  const std::string cfg = build_config(o).dump();
  ivrt_result* res = nullptr;
  const ivrt_status st = ivrt_run(command.c_str(), cfg.c_str(), nullptr, &res);
  if (st != IVRT_OK) {
    std::cerr << "ivrt " << command << ": " << ivrt_last_error() << "\n";
    return static_cast<int>(st);
  }
  int rc = 0;
  if (o.out.empty()) {
    std::cout << ivrt_result_report(res);
    if (ivrt_result_artifact_count(res) > 0)
      std::cerr << "note: pass --out DIR to also write the CSV outputs\n";
  } else {
    std::error_code ec;
    fs::create_directories(o.out, ec);
    const fs::path dir(o.out);
    if (!write_file(dir / report_name(command), ivrt_result_report(res))) {
      std::cerr << "ivrt " << command << ": cannot write to " << o.out << "\n";
      rc = 2;
    }
    for (size_t i = 0; rc == 0 && i < ivrt_result_artifact_count(res); ++i) {
      if (!write_file(dir / ivrt_result_artifact_name(res, i), ivrt_result_artifact_data(res, i))) {
        std::cerr << "ivrt " << command << ": cannot write " << ivrt_result_artifact_name(res, i) << "\n";
        rc = 2;
      }
    }
  }
  ivrt_result_free(res);
  return rc;
}

void add_data_options(CLI::App* sub, Options& o) {
  sub->add_option("--input", o.input, "CSV file with a header row")->check(CLI::ExistingFile);
  sub->add_option("--schema", o.schema, "JSON column mapping {y, d, z, cluster, cell, group}")
      ->check(CLI::ExistingFile);
  sub->add_option("--cluster", o.cluster, "cluster column (cluster-robust moments)");
  sub->add_option("--cell", o.cell, "covariate cell column (stratified RT)");
  sub->add_option("--group", o.group, "group column for within-group demeaning");
  sub->add_flag("--lenient", o.lenient, "drop instruments with undefined Wald ratios");
  sub->add_flag("--auto-flip", o.auto_flip, "recode instruments with negative first stage");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instrument-specific Wald estimators, GMM and representative targeting"};
  app.set_version_flag("--version", std::string(ivrt_version()));
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--out", o.out, "output directory (report printed to stdout if omitted)");
    sub->add_option("--tol", o.tol, "numerical tolerance");
  };

  auto* est = app.add_subcommand("estimate", "2SLS, EGMM with J test, and RT estimates");
  add_data_options(est, o);
  common(est);
  est->add_option("--weights", o.weights, "ew | csw | FILE with custom simplex weights");
  est->add_option("--egmm", o.egmm, "EGMM mode")->check(CLI::IsMember({"iterated", "two_step"}));
  est->add_flag("--scan", o.scan, "report every EGMM fixed point on a grid");
  est->add_option("--min-cell-size", o.min_cell_size, "minimum rows per covariate cell");

  auto* dia = app.add_subcommand("diagnose", "first stages, residual variances, PRD and weight functions");
  add_data_options(dia, o);
  common(dia);

  auto* fro = app.add_subcommand("frontier", "variance frontier and composition costs");
  add_data_options(fro, o);
  common(fro);
  fro->add_option("--weights", o.weights, "ew | csw | FILE with custom simplex weights");
  fro->add_option("--grid", o.grid, "number of grid points")->check(CLI::Range(2, 100000));

  auto* prte = app.add_subcommand("target-prte", "RT weights targeting a policy-relevant effect");
  add_data_options(prte, o);
  common(prte);
  prte->add_option("--policy", o.policy, "policy JSON")->required()->check(CLI::ExistingFile);

  auto* prd = app.add_subcommand("prd-check", "positive regression dependence of the instruments");
  add_data_options(prd, o);
  common(prd);
  prd->add_option("--joint", o.joint, "JSON {L, prob} with an exact instrument joint")
      ->check(CLI::ExistingFile);

  auto* sim = app.add_subcommand("simulate", "Monte Carlo study from a DGP spec");
  common(sim);
  sim->add_option("--spec", o.spec, "simulation spec JSON")->required()->check(CLI::ExistingFile);
  sim->add_option("--seed", o.seed, "base seed");
  sim->add_option("-R,--reps", o.R, "replications");
  sim->add_option("-n,--n", o.n, "sample size per replication");
  sim->add_option("--threads", o.threads, "worker threads (results do not depend on it)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  for (auto* sub : app.get_subcommands()) return run(sub->get_name(), o);
  return 2;
}
