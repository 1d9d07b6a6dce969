#include "ivrt/ivrt.h"

#include <exception>
#include <new>
#include <string>

#include "json.hpp"

#include "ivrt/commands.hpp"
#include "ivrt/data.hpp"
#include "ivrt/error.hpp"

struct ivrt_dataset {
  ivrt::Dataset data;
};

struct ivrt_result {
  ivrt::CommandResult value;
};

namespace {

thread_local std::string g_last_error;

ivrt_status status_of(ivrt::ErrorKind k) {
  switch (k) {
    case ivrt::ErrorKind::kRelevance: return IVRT_ERR_RELEVANCE;
    case ivrt::ErrorKind::kNumerical: return IVRT_ERR_NUMERICAL;
    default: return IVRT_ERR_INPUT;
  }
}

template <class F>
ivrt_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return IVRT_OK;
  } catch (const ivrt::Error& e) {
    g_last_error = std::string(ivrt::kind_name(e.kind())) + " error: " + e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return IVRT_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return IVRT_ERR_INTERNAL;
  }
}

ivrt::Schema parse_schema(const char* text) {
  ivrt::Schema s;
  if (!text || !*text) return s;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    ivrt::fail(ivrt::ErrorKind::kSchema, std::string("schema: ") + e.what());
  }
  try {
    if (j.contains("y")) s.y = j["y"].get<std::string>();
    if (j.contains("d")) s.d = j["d"].get<std::string>();
    if (j.contains("z")) s.z = j["z"].get<std::vector<std::string>>();
    if (j.contains("cluster")) s.cluster = j["cluster"].get<std::string>();
    if (j.contains("cell")) s.cell = j["cell"].get<std::string>();
    if (j.contains("group")) s.group = j["group"].get<std::string>();
    if (j.contains("drop_missing")) s.drop_missing = j["drop_missing"].get<bool>();
  } catch (const nlohmann::json::exception& e) {
    ivrt::fail(ivrt::ErrorKind::kSchema, std::string("schema: ") + e.what());
  }
  return s;
}

}  // namespace

extern "C" {

const char* ivrt_version(void) { return "1.0.0"; }

const char* ivrt_last_error(void) { return g_last_error.c_str(); }

ivrt_status ivrt_dataset_load_csv(const char* path, const char* schema_json, ivrt_dataset** out) {
  return guarded([&] {
    if (!path || !out) ivrt::fail(ivrt::ErrorKind::kInput, "null argument");
    *out = nullptr;
    auto* ds = new ivrt_dataset{ivrt::load_dataset_file(path, parse_schema(schema_json)).data};
    *out = ds;
  });
}

ivrt_status ivrt_dataset_dims(const ivrt_dataset* ds, size_t* n, size_t* L) {
  return guarded([&] {
    if (!ds) ivrt::fail(ivrt::ErrorKind::kInput, "null dataset");
    if (n) *n = static_cast<size_t>(ds->data.n());
    if (L) *L = static_cast<size_t>(ds->data.L());
  });
}

void ivrt_dataset_free(ivrt_dataset* ds) { delete ds; }

ivrt_status ivrt_run(const char* command, const char* config_json, const ivrt_dataset* dataset,
                     ivrt_result** out) {
  return guarded([&] {
    if (!command || !out) ivrt::fail(ivrt::ErrorKind::kInput, "null argument");
    *out = nullptr;
    auto res = ivrt::run_command(command, config_json ? config_json : "",
                                 dataset ? &dataset->data : nullptr);
    *out = new ivrt_result{std::move(res)};
  });
}

const char* ivrt_result_report(const ivrt_result* r) { return r ? r->value.report.c_str() : ""; }

size_t ivrt_result_artifact_count(const ivrt_result* r) {
  return r ? r->value.artifacts.size() : 0;
}

const char* ivrt_result_artifact_name(const ivrt_result* r, size_t i) {
  if (!r || i >= r->value.artifacts.size()) return nullptr;
  return r->value.artifacts[i].name.c_str();
}

const char* ivrt_result_artifact_data(const ivrt_result* r, size_t i) {
  if (!r || i >= r->value.artifacts.size()) return nullptr;
  return r->value.artifacts[i].content.c_str();
}

void ivrt_result_free(ivrt_result* r) { delete r; }

}  // extern "C"
