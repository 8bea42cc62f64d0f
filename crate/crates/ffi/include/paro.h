/* C interface for the paro sharding planner and collective simulator. */

#ifndef PARO_H
#define PARO_H

/* Generated by cbindgen from paro-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every API call.
 */
typedef enum ParoStatus {
  PARO_STATUS_OK = 0,
  PARO_STATUS_NULL_ARGUMENT = 1,
  PARO_STATUS_INVALID_ARGUMENT = 2,
  PARO_STATUS_INVALID_UTF8 = 3,
  PARO_STATUS_FAILED = 4,
  PARO_STATUS_PANIC = 5,
} ParoStatus;

/**
 * Opaque configuration handle.
 */
typedef struct ParoSession ParoSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Description of the most recent failure on this thread, or NULL. The
 * pointer is valid until the next API call on the same thread.
 */
const char *paro_last_error_message(void);

/**
 * # Safety
 * `s` must be NULL or a pointer previously returned through an `out`
 * parameter of this API and not yet freed.
 */
void paro_string_free(char *s);

/**
 * Create a session. Returns NULL on invalid configuration, with the reason
 * available from `paro_last_error_message`.
 *
 * `trainable_params` of 0 means fully trainable; `layers` sets schedule
 * granularity; `peft` marks parameter-efficient fine-tuning.
 */
struct ParoSession *paro_session_new(uint64_t n_gpus,
                                     uint64_t group_size,
                                     uint64_t accum_steps,
                                     uint64_t total_params,
                                     uint64_t trainable_params,
                                     uint64_t layers,
                                     bool peft);

/**
 * # Safety
 * `session` must be NULL or a pointer from `paro_session_new` that has not
 * been freed.
 */
void paro_session_free(struct ParoSession *session);

/**
 * Override the two-tier network profile.
 *
 * # Safety
 * `session` must be a live pointer from `paro_session_new`.
 */
enum ParoStatus paro_session_set_network(struct ParoSession *session,
                                         double intra_bw,
                                         double inter_bw,
                                         double intra_latency,
                                         double inter_latency);

/**
 * Override the per-state byte widths (parameter bytes, gradient bytes,
 * optimizer bytes per trainable parameter).
 *
 * # Safety
 * `session` must be a live pointer from `paro_session_new`.
 */
enum ParoStatus paro_session_set_widths(struct ParoSession *session,
                                        uint64_t param_bytes,
                                        uint64_t grad_bytes,
                                        double optim_factor);

/**
 * Strategy recommendations for a regime ("full", "partial-large",
 * "partial-small" or "peft"), as JSON.
 *
 * # Safety
 * `session` must be live; `regime` must be a NUL-terminated string; `out`
 * must be a valid location to store the result pointer.
 */
enum ParoStatus paro_recommend_json(const struct ParoSession *session,
                                    const char *regime,
                                    char **out);

/**
 * Memory/volume/time report for one method name or strategy code, as JSON.
 *
 * # Safety
 * Same contract as `paro_recommend_json`.
 */
enum ParoStatus paro_cost_json(const struct ParoSession *session, const char *method, char **out);

/**
 * The eight-method volume/memory summary, as JSON.
 *
 * # Safety
 * Same contract as `paro_recommend_json`.
 */
enum ParoStatus paro_method_summary_json(const struct ParoSession *session, char **out);

/**
 * Per-GPU parameter volume saved by grouped two-step gradient sync.
 *
 * # Safety
 * `session` must be live; `out` must be a valid u64 location.
 */
enum ParoStatus paro_accumulation_savings(const struct ParoSession *session, uint64_t *out);

/**
 * Run one collective ("ring", "h-ring" or "ho-ring"; "all-gather" or
 * "reduce-scatter") on a simulated cluster and return the byte/round/time
 * report as JSON. `session` may be NULL to use the default network profile.
 *
 * # Safety
 * `topology` and `collective` must be NUL-terminated strings; `out` must be
 * a valid location; a non-NULL `session` must be live.
 */
enum ParoStatus paro_simulate_json(const struct ParoSession *session,
                                   const char *topology,
                                   const char *collective,
                                   uint64_t ranks,
                                   uint64_t group_size,
                                   uint64_t payload_bytes,
                                   uint64_t seed,
                                   char **out);

/**
 * Train the built-in tiny model under a strategy code on the session's
 * cluster and compare against single-process training; JSON report.
 *
 * # Safety
 * Same contract as `paro_recommend_json`.
 */
enum ParoStatus paro_verify_json(const struct ParoSession *session,
                                 const char *strategy,
                                 uint32_t steps,
                                 uint64_t seed,
                                 char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PARO_H */
