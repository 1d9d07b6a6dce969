#include <cmath>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "ivrt/commands.hpp"
#include "ivrt/error.hpp"

using namespace ivrt;
using json = nlohmann::ordered_json;

namespace {

std::string fixture(const char* name) { return std::string(IVRT_FIXTURE_DIR) + "/" + name; }

json run_json(const std::string& cmd, const json& cfg) {
  return json::parse(run_command(cmd, cfg.dump()).report);
}

ErrorKind kind_of(const std::string& cmd, const json& cfg) {
  try {
    run_command(cmd, cfg.dump());
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("command did not fail");
  return ErrorKind::kInput;
}

const json* find_estimator(const json& r, const char* name) {
  for (const auto& e : r["estimators"])
    if (e["name"] == name) return &e;
  return nullptr;
}

}  // namespace

TEST_CASE("estimate on a homogeneous fixture agrees across estimators") {
  const json r = run_json("estimate", {{"input", fixture("homog.csv")}});
  CHECK(r["spec_version"] == "1");
  const json* ts = find_estimator(r, "2sls");
  REQUIRE(ts);
  for (const auto& e : r["estimators"]) {
    const double diff = std::abs(e["estimate"].get<double>() - (*ts)["estimate"].get<double>());
    CHECK(diff <= 3.0 * e["se"].get<double>());
    CHECK(std::abs(e["estimate"].get<double>() - 2.0) <= 3.0 * e["se"].get<double>());
  }
  CHECK(r.contains("prd"));
  CHECK(r["warnings"].is_array());
}

TEST_CASE("estimate with one instrument skips J") {
  const json r = run_json("estimate", {{"input", fixture("single.csv")}});
  const json* eg = find_estimator(r, "egmm");
  REQUIRE(eg);
  CHECK((*eg)["j_test"].is_null());
  CHECK((*eg)["j_note"] == "not overidentified");
}

TEST_CASE("estimate: custom weights") {
  const json r = run_json("estimate", {{"input", fixture("hetero.csv")},
                                       {"weights", {{"file", fixture("weights_custom.csv")}}}});
  const json* c = find_estimator(r, "rt_custom");
  REQUIRE(c);
  CHECK((*c)["omega"][2].get<double>() == 0.5);
  CHECK(kind_of("estimate", {{"input", fixture("hetero.csv")},
                             {"weights", {{"file", fixture("weights_off_simplex.csv")}}}}) ==
        ErrorKind::kInput);
  CHECK(kind_of("estimate", {{"input", fixture("hetero.csv")}, {"weights", {0.5, 0.5}}}) ==
        ErrorKind::kInput);
}

TEST_CASE("estimate: clusters, cells and schema files") {
  const json r = run_json("estimate", {{"input", fixture("hetero.csv")},
                                       {"schema", {{"file", fixture("schema.json")}}},
                                       {"cell", "cell"}});
  CHECK(r["cluster_robust"] == true);
  REQUIRE(r.contains("stratified"));
  CHECK(r["stratified"]["cells"].size() == 2);
  CHECK(kind_of("estimate", {{"input", fixture("hetero.csv")}, {"cluster", "nope"}}) ==
        ErrorKind::kSchema);
}

TEST_CASE("frontier command") {
  const CommandResult cr = run_command(
      "frontier", json{{"input", fixture("hetero.csv")}, {"grid", 25}}.dump());
  const json r = json::parse(cr.report);
  CHECK(r["grid_size"] == 25);
  REQUIRE(cr.artifacts.size() == 1);
  std::istringstream csv(cr.artifacts[0].content);
  std::string line;
  int lines = 0;
  std::getline(csv, line);
  CHECK(line == "beta_star,v_min,omega_1,omega_2,omega_3");
  while (std::getline(csv, line)) ++lines;
  CHECK(lines == 25);
  for (const auto& p : r["points"]) CHECK(p["composition_cost"].get<double>() >= -1e-8);
}

TEST_CASE("target-prte on a staircase policy") {
  const CommandResult cr = run_command(
      "target-prte",
      json{{"input", fixture("hetero.csv")}, {"policy", {{"file", fixture("policy_staircase.json")}}}}.dump());
  const json r = json::parse(cr.report);
  double s = 0.0;
  for (const auto& w : r["omega"]) {
    CHECK(w.get<double>() >= -1e-12);
    s += w.get<double>();
  }
  CHECK(s == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(r["lipschitz"].size() == 2);
  CHECK(r["gap"]["feasible"] == true);
  CHECK(r["gap"]["lo"].get<double>() <= r["gap"]["hi"].get<double>());
  CHECK(kind_of("target-prte", {{"input", fixture("hetero.csv")},
                                {"policy", {{"file", fixture("policy_degenerate.json")}}}}) ==
        ErrorKind::kRelevance);
}

TEST_CASE("prd-check on an exact joint and on data") {
  const json r = run_json("prd-check", {{"joint", {{"file", fixture("joint_counterexample.json")}}}});
  CHECK(r["result"]["passed"] == false);
  CHECK(r["covariance"][0][1].get<double>() == doctest::Approx(-1.0 / 9));
  const json d = run_json("prd-check", {{"input", fixture("hetero.csv")}});
  CHECK(d["source"] == "data");
}

TEST_CASE("simulate is deterministic and lists every estimator") {
  const json cfg = {{"spec", {{"file", fixture("star_spec.json")}}}, {"R", 100}, {"n", 300}};
  const CommandResult a = run_command("simulate", cfg.dump());
  const CommandResult b = run_command("simulate", cfg.dump());
  CHECK(a.report == b.report);
  CHECK(a.artifacts[0].content == b.artifacts[0].content);
  const json r = json::parse(a.report);
  CHECK(r["estimators"].size() == 4);
}

TEST_CASE("reports round-trip byte for byte") {
  const std::string rep = run_command("estimate", json{{"input", fixture("hetero.csv")}}.dump()).report;
  CHECK(json::parse(rep).dump(2) + "\n" == rep);
}

TEST_CASE("bad configs") {
  CHECK_THROWS_AS(run_command("estimate", "{not json"), Error);
  CHECK(kind_of("nope", json::object()) == ErrorKind::kSchema);
  CHECK(kind_of("estimate", json::object()) == ErrorKind::kSchema);
  CHECK(kind_of("estimate", {{"input", fixture("bad_z.csv")}}) == ErrorKind::kSchema);
}
