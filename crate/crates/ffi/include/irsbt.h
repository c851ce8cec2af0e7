#ifndef IRSBT_H
#define IRSBT_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IrsbtStatus {
  IRSBT_STATUS_OK = 0,
  IRSBT_STATUS_NULL_POINTER = 1,
  IRSBT_STATUS_INVALID_ARGUMENT = 2,
  IRSBT_STATUS_DIMENSION_MISMATCH = 3,
  IRSBT_STATUS_DEGENERATE_GEOMETRY = 4,
  IRSBT_STATUS_ILL_CONDITIONED = 5,
  IRSBT_STATUS_INSUFFICIENT_ANCHORS = 6,
  IRSBT_STATUS_NUMERICAL = 7,
  IRSBT_STATUS_CONFIG = 8,
  IRSBT_STATUS_PARSE = 9,
  IRSBT_STATUS_IO = 10,
  IRSBT_STATUS_UTF8 = 11,
  IRSBT_STATUS_PANIC = 12,
} IrsbtStatus;

/**
 * Experiment configuration.
 */
typedef struct IrsbtExperiment IrsbtExperiment;

/**
 * Recorded sounding session of one link.
 */
typedef struct IrsbtSession IrsbtSession;

typedef struct IrsbtComplex {
  double re;
  double im;
} IrsbtComplex;

/**
 * One path estimate. `delta` is the physical path gain.
 */
typedef struct IrsbtPathEstimate {
  struct IrsbtComplex delta;
  double theta;
  double phi;
  double residual_ratio;
  double objective;
  uint32_t iterations;
  bool converged;
} IrsbtPathEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *irsbt_version(void);

/**
 * Message of the last failing call on this thread, or NULL. Valid until
 * the next failing call on the same thread.
 */
const char *irsbt_last_error(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void irsbt_string_free(char *s);

/**
 * Wrapped cosine-angle difference.
 */
double irsbt_cos_sub(double a, double b);

/**
 * Wrapped cosine-angle sum.
 */
double irsbt_cos_add(double a, double b);

/**
 * Loads a session dump written by the library.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum IrsbtStatus irsbt_session_load_csv(const char *path, struct IrsbtSession **out);

/**
 * Writes a session dump.
 *
 * # Safety
 * `session` must be a live handle and `path` a NUL-terminated string.
 */
enum IrsbtStatus irsbt_session_save_csv(const struct IrsbtSession *session, const char *path);

/**
 * Builds a session from row-major beam matrices: `tx` holds `rows × n_tx`
 * entries, `rx` holds `rows × n_rx` and `y` holds `rows`.
 *
 * # Safety
 * The arrays must hold the stated number of elements.
 */
enum IrsbtStatus irsbt_session_new(size_t link,
                                   size_t n_tx,
                                   size_t n_rx,
                                   size_t rows,
                                   const struct IrsbtComplex *tx,
                                   const struct IrsbtComplex *rx,
                                   const struct IrsbtComplex *y,
                                   double gain_scale,
                                   double noise_variance,
                                   struct IrsbtSession **out);

/**
 * Number of training slots in the session, 0 for NULL.
 *
 * # Safety
 * `session` must be NULL or a live handle.
 */
size_t irsbt_session_rows(const struct IrsbtSession *session);

/**
 * # Safety
 * `session` must be NULL or a handle not yet freed.
 */
void irsbt_session_free(struct IrsbtSession *session);

/**
 * Estimates the dominant path. `grid` of 0 derives the coarse grid from
 * the array sizes.
 *
 * # Safety
 * `session` must be a live handle and `out` a valid pointer.
 */
enum IrsbtStatus irsbt_estimate_path(const struct IrsbtSession *session,
                                     size_t grid,
                                     struct IrsbtPathEstimate *out);

/**
 * Matched-filter objective of the session at `(theta, phi)`.
 *
 * # Safety
 * `session` must be a live handle and `out` a valid pointer.
 */
enum IrsbtStatus irsbt_objective(const struct IrsbtSession *session,
                                 double theta,
                                 double phi,
                                 double *out);

/**
 * Default experiment configuration.
 */
struct IrsbtExperiment *irsbt_experiment_new(void);

/**
 * Loads a TOML configuration; missing keys take defaults.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum IrsbtStatus irsbt_experiment_from_file(const char *path, struct IrsbtExperiment **out);

/**
 * Overrides the base seed and the trial count of every figure.
 *
 * # Safety
 * `exp` must be a live handle.
 */
enum IrsbtStatus irsbt_experiment_configure(struct IrsbtExperiment *exp,
                                            uint64_t seed,
                                            size_t trials);

/**
 * Runs one full trial and returns its record as JSON. Release the string
 * with [`irsbt_string_free`].
 *
 * # Safety
 * `exp` must be a live handle and `out_json` a valid pointer.
 */
enum IrsbtStatus irsbt_experiment_run_trial(const struct IrsbtExperiment *exp,
                                            size_t index,
                                            double tx_power_dbm,
                                            size_t training_length,
                                            char **out_json);

/**
 * Runs a named figure (`fig5`..`fig10`, `contour`) and writes its CSV
 * tables into `out_dir`.
 *
 * # Safety
 * `exp` must be a live handle; `name` and `out_dir` NUL-terminated.
 */
enum IrsbtStatus irsbt_experiment_run_figure(const struct IrsbtExperiment *exp,
                                             const char *name,
                                             const char *out_dir);

/**
 * # Safety
 * `exp` must be NULL or a handle not yet freed.
 */
void irsbt_experiment_free(struct IrsbtExperiment *exp);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IRSBT_H */
