#ifndef REBALANCE_H
#define REBALANCE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RbStatus {
  RB_STATUS_OK = 0,
  RB_STATUS_NULL_POINTER = 1,
  RB_STATUS_INVALID_ARGUMENT = 2,
  RB_STATUS_CONFIG = 3,
  RB_STATUS_IO = 4,
  RB_STATUS_CHECKPOINT = 5,
  RB_STATUS_NUMERIC = 6,
  RB_STATUS_SIMULATION = 7,
  RB_STATUS_PANIC = 8,
} RbStatus;

/**
 * A configured world with an optional trained agent.
 */
typedef struct RbExperiment RbExperiment;

/**
 * One episode's metrics. `acceptance_rate` is NaN when no recommendation was issued.
 */
typedef struct RbMetrics {
  double tdi;
  double ri;
  double rrr;
  double acceptance_rate;
  uint64_t repositions;
  uint64_t seed;
} RbMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *rb_version(void);

/**
 * Copy the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t rb_last_error_message(char *buf, size_t len);

/**
 * Acceptance probability under the default coefficients.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum RbStatus rb_acceptance_probability(double rank, double income, double obedience, double *out);

/**
 * Acceptance probability with coefficients `[b, w_r, w_m, w_o]`; null uses the defaults.
 *
 * # Safety
 * `coefficients` must be null or point to 4 doubles; `out` must be valid for writes.
 */
enum RbStatus rb_acceptance_probability_with(const double *coefficients,
                                             double rank,
                                             double income,
                                             double obedience,
                                             double *out);

/**
 * Build an experiment from TOML text; null means the default configuration.
 *
 * # Safety
 * `config_toml` must be null or a NUL-terminated string; `out` must be valid for writes.
 */
enum RbStatus rb_experiment_new(const char *config_toml, struct RbExperiment **out);

/**
 * # Safety
 * `h` must be null or a handle from [`rb_experiment_new`] not yet freed.
 */
void rb_experiment_free(struct RbExperiment *h);

/**
 * # Safety
 * `h` must be a live handle; `out` valid for writes.
 */
enum RbStatus rb_experiment_config_hash(struct RbExperiment *h, uint64_t *out);

/**
 * Evaluate `policy` (e.g. `"min_cost_flow"`) on one seed. `dual_agent`
 * needs a prior [`rb_experiment_train`] or [`rb_experiment_load_checkpoint`].
 *
 * # Safety
 * `h` must be a live handle, `policy` NUL-terminated, `out` valid for writes.
 */
enum RbStatus rb_experiment_evaluate(struct RbExperiment *h,
                                     const char *policy,
                                     uint64_t seed,
                                     struct RbMetrics *out);

/**
 * Train the dual agent for `episodes` episodes (0 uses the configured count).
 *
 * # Safety
 * `h` must be a live handle.
 */
enum RbStatus rb_experiment_train(struct RbExperiment *h, uint64_t episodes);

/**
 * Load an agent and preference model from a checkpoint written under the same config.
 *
 * # Safety
 * `h` must be a live handle and `path` NUL-terminated.
 */
enum RbStatus rb_experiment_load_checkpoint(struct RbExperiment *h, const char *path);

/**
 * Write the trained agent to `path`.
 *
 * # Safety
 * `h` must be a live handle and `path` NUL-terminated.
 */
enum RbStatus rb_experiment_save_checkpoint(struct RbExperiment *h, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REBALANCE_H */
