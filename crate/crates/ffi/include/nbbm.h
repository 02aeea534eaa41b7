#ifndef NBBM_H
#define NBBM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes.
 */
typedef enum NbbmStatus {
  NBBM_STATUS_OK = 0,
  NBBM_STATUS_ARGUMENT = 1,
  NBBM_STATUS_DATA = 2,
  NBBM_STATUS_QUERY = 3,
  NBBM_STATUS_CAPACITY = 4,
  NBBM_STATUS_CONSISTENCY = 5,
  NBBM_STATUS_CONFIG = 6,
  NBBM_STATUS_PARTIAL_FAILURE = 7,
  NBBM_STATUS_IO = 8,
  NBBM_STATUS_NULL_POINTER = 9,
  NBBM_STATUS_PANIC = 10,
} NbbmStatus;

typedef enum NbbmScore {
  /**
   * `<lambda, x>`.
   */
  NBBM_SCORE_LINEAR = 0,
  /**
   * `|x|`.
   */
  NBBM_SCORE_EUCLIDEAN = 1,
} NbbmScore;

typedef enum NbbmEngineKind {
  NBBM_ENGINE_KIND_AUTO = 0,
  NBBM_ENGINE_KIND_DENSE = 1,
  NBBM_ENGINE_KIND_LAZY = 2,
} NbbmEngineKind;

/**
 * Opaque engine handle.
 */
typedef struct NbbmEngine NbbmEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates an engine with `n` particles in dimension `d`.
 *
 * `direction` (length `d`) sets the linear score direction and is
 * normalised; null selects the first axis. It is ignored for the
 * Euclidean score. `positions` (length `n * d`, row-major) gives the
 * initial configuration; null starts every particle at the origin.
 *
 * # Safety
 * Non-null pointers must be valid for the stated lengths; `out` must be
 * writable.
 */
enum NbbmStatus nbbm_engine_new(size_t n,
                                size_t d,
                                enum NbbmScore score,
                                const double *direction,
                                const double *positions,
                                double branch_rate,
                                uint64_t seed,
                                enum NbbmEngineKind kind,
                                struct NbbmEngine **out);

/**
 * Releases an engine; null is ignored.
 *
 * # Safety
 * `h` must come from [`nbbm_engine_new`] and not be used afterwards.
 */
void nbbm_engine_free(struct NbbmEngine *h);

/**
 * Processes every event up to `t` and stores the configuration at `t`.
 *
 * # Safety
 * `h` must be a live handle.
 */
enum NbbmStatus nbbm_engine_run_until(struct NbbmEngine *h, double t);

/**
 * Current time and number of processed events.
 *
 * # Safety
 * `h` must be a live handle; `time` and `events` writable or null.
 */
enum NbbmStatus nbbm_engine_clock(struct NbbmEngine *h, double *time, uint64_t *events);

/**
 * Scores of the stored configuration, fittest first; `len` must be `n`.
 *
 * # Safety
 * `h` must be a live handle and `out` valid for `len` values.
 */
enum NbbmStatus nbbm_engine_scores(struct NbbmEngine *h, double *out, size_t len);

/**
 * Positions of the stored configuration, fittest first, row-major;
 * `len` must be `n * d`.
 *
 * # Safety
 * `h` must be a live handle and `out` valid for `len` values.
 */
enum NbbmStatus nbbm_engine_positions(struct NbbmEngine *h, double *out, size_t len);

/**
 * Age at the current time of the most recent common ancestor of the
 * living particles; `NBBM_STATUS_QUERY` while they descend from distinct
 * initial particles.
 *
 * # Safety
 * `h` must be a live handle and `out` writable.
 */
enum NbbmStatus nbbm_engine_mrca_age(struct NbbmEngine *h, double *out);

/**
 * Runs the scenario described by a JSON config and writes its outputs
 * into `out_dir`. Outputs are written even when some replicas fail, in
 * which case `NBBM_STATUS_PARTIAL_FAILURE` is returned.
 *
 * # Safety
 * Both arguments must be NUL-terminated strings.
 */
enum NbbmStatus nbbm_run_scenario(const char *config_json, const char *out_dir);

/**
 * Child of `a` and `b` (length `d` each) split after coordinate `k`,
 * written to `out` (length `d`).
 *
 * # Safety
 * All pointers must be valid for `d` values.
 */
enum NbbmStatus nbbm_recombine(const double *a,
                               const double *b,
                               size_t d,
                               size_t k,
                               uint64_t seed,
                               double *out);

/**
 * Copies the last error message of this thread into `buf` (NUL
 * terminated, truncated to `cap - 1` bytes) and returns its full length
 * in bytes. With a null `buf` only the length is returned.
 *
 * # Safety
 * `buf` must be null or valid for `cap` bytes.
 */
size_t nbbm_last_error_message(char *buf, size_t cap);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nbbm_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NBBM_H */
