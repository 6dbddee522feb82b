#ifndef HARTREE_CONTROL_H
#define HARTREE_CONTROL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HcStatus {
  HC_STATUS_OK = 0,
  HC_STATUS_INVALID_ARGUMENT = 1,
  HC_STATUS_NULL_POINTER = 2,
  /**
   * the CG solve stopped early; the handle still holds the best iterate
   */
  HC_STATUS_NOT_CONVERGED = 3,
  HC_STATUS_NOT_CONTRACTING = 4,
  HC_STATUS_NUMERICAL = 5,
  HC_STATUS_IO = 6,
  HC_STATUS_PANIC = 7,
} HcStatus;

/**
 * Which trajectory of a control solution to copy out.
 */
typedef enum HcTrack {
  HC_TRACK_STATE = 0,
  HC_TRACK_CONTROL = 1,
} HcTrack;

typedef struct HcConfig HcConfig;

typedef struct HcControl HcControl;

typedef struct HcControlSummary {
  double cost;
  double residual;
  double target_error;
  double relative_target_error;
  double unresolved_tail;
  size_t cg_iterations;
  bool converged;
} HcControlSummary;

typedef struct HcNonlinearSummary {
  bool converged;
  size_t iterations;
  /**
   * NaN when fewer than two iterates were taken
   */
  double contraction_factor;
  double target_error;
  double cost;
} HcNonlinearSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *hc_version(void);

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the buffer size the full message needs,
 * or 0 when there is no message.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t hc_last_error_message(char *buf, size_t len);

/**
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum HcStatus hc_config_default(struct HcConfig **out);

/**
 * Parse and validate a TOML run configuration.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` valid for a pointer write.
 */
enum HcStatus hc_config_from_toml(const char *toml, struct HcConfig **out);

/**
 * # Safety
 * `cfg` must be null or a handle from `hc_config_*` not yet freed.
 */
void hc_config_free(struct HcConfig *cfg);

/**
 * Write the first `n` eigenvalues of the configured `basis.operator`.
 *
 * # Safety
 * `cfg` must be a live handle and `out` valid for `n` doubles.
 */
enum HcStatus hc_basis_eigenvalues(const struct HcConfig *cfg, size_t n, double *out);

/**
 * Eigenvalue `index` of `-∂² + |x|` on the line, from the Airy zeros.
 *
 * # Safety
 * `out` must be valid for one double.
 */
enum HcStatus hc_airy_eigenvalue(size_t index, double *out);

/**
 * Solve the linear control problem of `cfg`. On `HC_STATUS_NOT_CONVERGED`
 * `*out` is still set and holds the best iterate.
 *
 * # Safety
 * `cfg` must be a live handle; `out` valid for a pointer write.
 */
enum HcStatus hc_control_solve(const struct HcConfig *cfg, struct HcControl **out);

/**
 * # Safety
 * `h` must be a live control handle; `out` valid for one summary.
 */
enum HcStatus hc_control_summary(const struct HcControl *h, struct HcControlSummary *out);

/**
 * Number of time nodes (steps + 1) and grid points of the trajectories.
 *
 * # Safety
 * `h` must be a live control handle; the outputs valid for one size_t each.
 */
enum HcStatus hc_control_dims(const struct HcControl *h, size_t *nodes, size_t *points);

/**
 * Copy the real and imaginary parts of one time node of `track`.
 *
 * # Safety
 * `h` must be a live control handle; `re` and `im` valid for `len`
 * doubles, where `len` equals the point count from `hc_control_dims`.
 */
enum HcStatus hc_control_copy(const struct HcControl *h,
                              enum HcTrack track,
                              size_t node,
                              double *re,
                              double *im,
                              size_t len);

/**
 * # Safety
 * `h` must be null or a handle from `hc_control_solve` not yet freed.
 */
void hc_control_free(struct HcControl *h);

/**
 * Fixed-point control of the Hartree equation with both data scaled by
 * `factor`.
 *
 * # Safety
 * `cfg` must be a live handle; `out` valid for one summary.
 */
enum HcStatus hc_nonlinear_solve(const struct HcConfig *cfg,
                                 double factor,
                                 struct HcNonlinearSummary *out);

/**
 * Run every verification suite with `samples` random cases each.
 * Returns `HC_STATUS_NUMERICAL` when any check fails.
 *
 * # Safety
 * The outputs must be valid for one size_t each.
 */
enum HcStatus hc_verify(size_t samples, uint64_t seed, size_t *checks, size_t *failures);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HARTREE_CONTROL_H */
