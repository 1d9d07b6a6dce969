// Exercises the shared library through its C interface only.
#include <cstdio>
#include <cstring>
#include <string>

#include "ivrt/ivrt.h"

namespace {

int failures = 0;

void check(bool ok, const char* what) {
  if (!ok) {
    std::printf("FAILED: %s (%s)\n", what, ivrt_last_error());
    ++failures;
  }
}

std::string fixture(const char* name) { return std::string(IVRT_FIXTURE_DIR) + "/" + name; }

}  // namespace

int main() {
  check(std::strlen(ivrt_version()) > 0, "version string");

  ivrt_dataset* ds = nullptr;
  check(ivrt_dataset_load_csv(fixture("tiny.csv").c_str(), nullptr, &ds) == IVRT_OK, "load tiny");
  size_t n = 0, L = 0;
  check(ivrt_dataset_dims(ds, &n, &L) == IVRT_OK && n == 4 && L == 2, "dims 4x2");
  ivrt_dataset_free(ds);

  ds = nullptr;
  check(ivrt_dataset_load_csv(fixture("bad_z.csv").c_str(), nullptr, &ds) == IVRT_ERR_INPUT,
        "bad instrument maps to input status");
  check(ds == nullptr, "no handle on failure");
  check(std::strstr(ivrt_last_error(), "row 2") != nullptr, "error names the row");

  check(ivrt_dataset_load_csv(fixture("hetero.csv").c_str(), "{\"cluster\":\"cluster\"}", &ds) ==
            IVRT_OK,
        "load with schema");
  ivrt_result* res = nullptr;
  check(ivrt_run("estimate", "{}", ds, &res) == IVRT_OK, "estimate on handle");
  check(std::strstr(ivrt_result_report(res), "\"spec_version\": \"1\"") != nullptr, "versioned report");
  ivrt_result_free(res);

  res = nullptr;
  check(ivrt_run("frontier", "{\"grid\": 5}", ds, &res) == IVRT_OK, "frontier on handle");
  check(ivrt_result_artifact_count(res) == 1, "one artifact");
  check(std::strcmp(ivrt_result_artifact_name(res, 0), "frontier.csv") == 0, "artifact name");
  check(ivrt_result_artifact_name(res, 7) == nullptr, "out-of-range artifact");
  ivrt_result_free(res);

  res = nullptr;
  check(ivrt_run("estimate", "{\"weights\": [0.9, 0.9, -0.8]}", ds, &res) == IVRT_ERR_INPUT,
        "off-simplex weights");
  check(res == nullptr, "no result on failure");
  check(ivrt_run("target-prte",
                 ("{\"policy\": {\"file\": \"" + fixture("policy_degenerate.json") + "\"}}").c_str(), ds,
                 &res) == IVRT_ERR_RELEVANCE,
        "degenerate policy maps to relevance status");
  ivrt_dataset_free(ds);

  check(ivrt_run("estimate", nullptr, nullptr, &res) == IVRT_ERR_INPUT, "missing input");
  check(ivrt_run(nullptr, "{}", nullptr, &res) == IVRT_ERR_INPUT, "null command");

  std::printf("%s\n", failures == 0 ? "capi: all checks passed" : "capi: failures");
  return failures == 0 ? 0 : 1;
}
