#ifndef HETSIM_H
#define HETSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HsStatus {
  HS_STATUS_OK = 0,
  HS_STATUS_NULL_POINTER = 1,
  HS_STATUS_INVALID_UTF8 = 2,
  HS_STATUS_INVALID_CONFIG = 3,
  HS_STATUS_PARSE_ERROR = 4,
  HS_STATUS_VALIDATION_FAILED = 5,
  /**
   * No events left; returned by `hs_simulation_step`.
   */
  HS_STATUS_FINISHED = 6,
  HS_STATUS_UNSUPPORTED_FORMAT = 7,
  HS_STATUS_INTERNAL = 8,
  HS_STATUS_PANIC = 9,
} HsStatus;

typedef enum HsEventKind {
  HS_EVENT_KIND_COMPLETION = 0,
  HS_EVENT_KIND_DEADLINE_DROP = 1,
  HS_EVENT_KIND_ARRIVAL = 2,
  HS_EVENT_KIND_SCHEDULER_INVOKE = 3,
} HsEventKind;

/**
 * Opaque simulation handle.
 */
typedef struct HsSimulation HsSimulation;

typedef struct HsStepInfo {
  uint64_t event_no;
  double time;
  enum HsEventKind kind;
} HsStepInfo;

typedef struct HsCounters {
  uint64_t arrived;
  uint64_t completed;
  uint64_t missed;
  uint64_t cancelled;
  uint64_t in_system;
} HsCounters;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *hs_version(void);

/**
 * Message for the last failed call on this thread, or NULL. Valid until the
 * next hetsim call on the same thread.
 */
const char *hs_last_error_message(void);

/**
 * Builds a simulation from a JSON configuration and the two CSV inputs.
 *
 * # Safety
 * All string arguments must be NUL-terminated; `out` must be writable.
 */
enum HsStatus hs_simulation_new(const char *config_json,
                                const char *eet_csv,
                                const char *trace_csv,
                                struct HsSimulation **out);

/**
 * Processes one event. Returns `HS_STATUS_FINISHED` when none are left.
 * `info` may be NULL.
 *
 * # Safety
 * `sim` must be a live handle; `info` NULL or writable.
 */
enum HsStatus hs_simulation_step(struct HsSimulation *sim, struct HsStepInfo *info);

/**
 * Runs to the stop condition in the configuration.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum HsStatus hs_simulation_run(struct HsSimulation *sim);

/**
 * Processes every event with time <= `horizon`.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum HsStatus hs_simulation_run_until(struct HsSimulation *sim, double horizon);

/**
 * Returns to the state right after construction.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum HsStatus hs_simulation_reset(struct HsSimulation *sim);

/**
 * # Safety
 * `sim` must be a live handle; `out` writable.
 */
enum HsStatus hs_simulation_now(struct HsSimulation *sim, double *out);

/**
 * # Safety
 * `sim` must be a live handle; `out` writable.
 */
enum HsStatus hs_simulation_counters(struct HsSimulation *sim, struct HsCounters *out);

/**
 * Report for the state reached so far, as `"json"` or `"csv"`. The string
 * written to `out` must be freed with `hs_string_free`.
 *
 * # Safety
 * `sim` must be a live handle; `format` NUL-terminated; `out` writable.
 */
enum HsStatus hs_simulation_report(struct HsSimulation *sim, const char *format, char **out);

/**
 * # Safety
 * `s` must come from this library, or be NULL.
 */
void hs_string_free(char *s);

/**
 * # Safety
 * `sim` must come from `hs_simulation_new`, or be NULL. It must not be used
 * afterwards.
 */
void hs_simulation_free(struct HsSimulation *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HETSIM_H */
