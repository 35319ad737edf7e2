#ifndef MODFILTER_H
#define MODFILTER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/*
 Status codes returned by every fallible call.
 */
typedef enum MfStatus {
  MF_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  MF_STATUS_NULL_POINTER = 1,
  /*
   A string argument was not valid UTF-8.
   */
  MF_STATUS_INVALID_UTF8 = 2,
  /*
   Scenario file or output could not be read or written.
   */
  MF_STATUS_IO = 3,
  /*
   Malformed or invalid scenario document.
   */
  MF_STATUS_PARSE = 4,
  /*
   Invalid parameter or model.
   */
  MF_STATUS_INVALID = 5,
  /*
   The integrator became unstable.
   */
  MF_STATUS_NUMERICAL = 6,
  /*
   Index out of range or value not available for this result.
   */
  MF_STATUS_OUT_OF_RANGE = 7,
  /*
   Internal panic; the handle arguments should be considered unusable.
   */
  MF_STATUS_PANIC = 8,
} MfStatus;

/*
 Tables and report of one run.
 */
typedef struct MfRunResult MfRunResult;

/*
 Parsed and validated scenario.
 */
typedef struct MfScenario MfScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *mf_version(void);

/*
 Message of the last failed call on this thread; empty if none. The
 pointer stays valid until the next failing call on the same thread.
 */
const char *mf_last_error(void);

/*
 Load and validate a scenario file.

 # Safety
 `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum MfStatus mf_scenario_load(const char *path, struct MfScenario **out);

/*
 Parse and validate a scenario document. Relative pulse paths resolve
 against `base_dir`, or the working directory when it is null.

 # Safety
 `json` and a non-null `base_dir` must be NUL-terminated strings; `out`
 must be writable.
 */
enum MfStatus mf_scenario_parse(const char *json, const char *base_dir, struct MfScenario **out);

/*
 Override the time step, end time and replication tolerance in place.
 Pass NaN to keep a value. The scenario is re-validated; on failure it
 is left unchanged.

 # Safety
 `scenario` must be a live handle from this library.
 */
enum MfStatus mf_scenario_override(struct MfScenario *scenario,
                                   double dt,
                                   double t_end,
                                   double tolerance);

/*
 Scenario document as JSON; free with [`mf_string_free`]. Null on a null handle.

 # Safety
 `scenario` must be null or a live handle.
 */
char *mf_scenario_to_json(const struct MfScenario *scenario);

/*
 # Safety
 `scenario` must be null or a handle not yet freed.
 */
void mf_scenario_free(struct MfScenario *scenario);

/*
 Run a scenario. A run that completes returns `Ok` even when an invariant
 or the replication check fails; query [`mf_result_exit_code`].

 # Safety
 `scenario` must be a live handle and `out` writable.
 */
enum MfStatus mf_run(const struct MfScenario *scenario, struct MfRunResult **out);

/*
 CLI exit code of the run: 0 pass, 3 invariant violation, 4 replication
 failure; -1 for a null handle.

 # Safety
 `result` must be null or a live handle.
 */
int32_t mf_result_exit_code(const struct MfRunResult *result);

/*
 Number of stored time samples; 0 for a null handle.

 # Safety
 `result` must be null or a live handle.
 */
uintptr_t mf_result_rows(const struct MfRunResult *result);

/*
 Number of observables; 0 for a null handle.

 # Safety
 `result` must be null or a live handle.
 */
uintptr_t mf_result_observables(const struct MfRunResult *result);

/*
 Name of observable `k`; free with [`mf_string_free`]. Null when out of range.

 # Safety
 `result` must be null or a live handle.
 */
char *mf_result_observable_name(const struct MfRunResult *result, uintptr_t k);

/*
 Copy the sample times into `times[0..len]`; `len` must equal [`mf_result_rows`].

 # Safety
 `times` must point to `len` writable doubles.
 */
enum MfStatus mf_result_times(const struct MfRunResult *result, double *times, uintptr_t len);

/*
 Copy observable `k` into `re[0..len]` and `im[0..len]`. With
 `cascade` nonzero, read the cascade side of a replicate run.

 # Safety
 `re` and `im` must each point to `len` writable doubles.
 */
enum MfStatus mf_result_observable(const struct MfRunResult *result,
                                   uintptr_t k,
                                   bool cascade,
                                   double *re,
                                   double *im,
                                   uintptr_t len);

/*
 Largest hierarchy/cascade deviation of a replicate run.

 # Safety
 `out` must be writable.
 */
enum MfStatus mf_result_max_deviation(const struct MfRunResult *result, double *out);

/*
 JSON report; free with [`mf_string_free`].

 # Safety
 `result` must be null or a live handle.
 */
char *mf_result_report_json(const struct MfRunResult *result);

/*
 CSV table (the hierarchy side in replicate mode); free with [`mf_string_free`].

 # Safety
 `result` must be null or a live handle.
 */
char *mf_result_csv(const struct MfRunResult *result);

/*
 # Safety
 `result` must be null or a handle not yet freed.
 */
void mf_result_free(struct MfRunResult *result);

/*
 Free a string returned by this library.

 # Safety
 `s` must be null or a string from this library not yet freed.
 */
void mf_string_free(char *s);

/*
 `true` when a run passed all checks.

 # Safety
 `result` must be null or a live handle.
 */
bool mf_result_passed(const struct MfRunResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MODFILTER_H */
