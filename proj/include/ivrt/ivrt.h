#ifndef IVRT_IVRT_H
#define IVRT_IVRT_H

#include <stddef.h>

#if defined(_WIN32)
#  ifdef IVRT_BUILDING
#    define IVRT_API __declspec(dllexport)
#  else
#    define IVRT_API __declspec(dllimport)
#  endif
#else
#  define IVRT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes.  The nonzero values match the command-line exit codes. */
typedef enum ivrt_status {
  IVRT_OK = 0,
  IVRT_ERR_INTERNAL = 1,
  IVRT_ERR_INPUT = 2,
  IVRT_ERR_RELEVANCE = 3,
  IVRT_ERR_NUMERICAL = 4,
} ivrt_status;

typedef struct ivrt_dataset ivrt_dataset;
typedef struct ivrt_result ivrt_result;

IVRT_API const char* ivrt_version(void);

/* Message for the most recent failure on the calling thread; "" if none. */
IVRT_API const char* ivrt_last_error(void);

/* schema_json may be NULL (columns y, d, z*). */
IVRT_API ivrt_status ivrt_dataset_load_csv(const char* path, const char* schema_json,
                                           ivrt_dataset** out);
IVRT_API ivrt_status ivrt_dataset_dims(const ivrt_dataset* ds, size_t* n, size_t* L);
IVRT_API void ivrt_dataset_free(ivrt_dataset* ds);

/* Runs one command.  `dataset` may be NULL, in which case the config must
 * name an input file (simulate needs none). */
IVRT_API ivrt_status ivrt_run(const char* command, const char* config_json,
                              const ivrt_dataset* dataset, ivrt_result** out);

/* JSON report; owned by the result. */
IVRT_API const char* ivrt_result_report(const ivrt_result* r);
IVRT_API size_t ivrt_result_artifact_count(const ivrt_result* r);
IVRT_API const char* ivrt_result_artifact_name(const ivrt_result* r, size_t i);
IVRT_API const char* ivrt_result_artifact_data(const ivrt_result* r, size_t i);
IVRT_API void ivrt_result_free(ivrt_result* r);

#ifdef __cplusplus
}
#endif

#endif
