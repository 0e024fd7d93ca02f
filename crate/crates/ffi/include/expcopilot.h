/* Generated by cbindgen from crates/ffi. Do not edit. */

#ifndef EXPCOPILOT_H
#define EXPCOPILOT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EcStatus {
  EC_STATUS_OK = 0,
  EC_STATUS_INVALID_ARGUMENT = 1,
  EC_STATUS_CONFIG = 2,
  EC_STATUS_BACKEND = 3,
  EC_STATUS_PARSE = 4,
  EC_STATUS_IO = 5,
  EC_STATUS_INTERNAL = 6,
} EcStatus;

// A lookup-table benchmark.
typedef struct EcBenchmark EcBenchmark;

// A loaded experience pool plus its backend.
typedef struct EcSession EcSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next call into this library on the same thread.
const char *ec_last_error(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and must not be used afterwards.
void ec_string_free(char *s);

// Opens a session from a TOML configuration file. The pool must already be ingested.
//
// # Safety
// `config_path` must be a NUL-terminated string; `out` must be writable.
enum EcStatus ec_session_open(const char *config_path, struct EcSession **out);

// Suggests configurations for a task given as JSON or as a plain description.
// `n` overrides the configured number of suggestions when positive. The
// result is a JSON array of ranked suggestions.
//
// # Safety
// `session` must be a live handle; `task` a NUL-terminated string; `out_json` writable.
enum EcStatus ec_session_suggest(struct EcSession *session,
                                 const char *task,
                                 size_t n,
                                 char **out_json);

// The prompt the model would see for `task`.
//
// # Safety
// As for [`ec_session_suggest`].
enum EcStatus ec_session_prompt(const struct EcSession *session, const char *task, char **out_text);

// # Safety
// `session` must come from [`ec_session_open`] and must not be used afterwards. Null is ignored.
void ec_session_free(struct EcSession *session);

// Loads a benchmark directory (space.json, tasks.jsonl, table.jsonl).
//
// # Safety
// `dir` must be a NUL-terminated string; `out` must be writable.
enum EcStatus ec_benchmark_open(const char *dir, struct EcBenchmark **out);

// Table lookup of a solution given as a JSON object of parameter values.
//
// # Safety
// `bench` must be a live handle; strings NUL-terminated; `out_metric` writable.
enum EcStatus ec_benchmark_evaluate(const struct EcBenchmark *bench,
                                    const char *task_id,
                                    const char *solution_json,
                                    double *out_metric);

// # Safety
// `bench` must come from [`ec_benchmark_open`] and must not be used afterwards. Null is ignored.
void ec_benchmark_free(struct EcBenchmark *bench);

// Best of the first `t` values (1-based).
//
// # Safety
// `values` must point to `len` doubles; `out` must be writable.
enum EcStatus ec_metric_at_t(const double *values,
                             size_t len,
                             size_t t,
                             bool lower_is_better,
                             double *out);

// Cosine similarity of two vectors of length `len`.
//
// # Safety
// `a` and `b` must point to `len` doubles; `out` must be writable.
enum EcStatus ec_cosine(const double *a, const double *b, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXPCOPILOT_H */
