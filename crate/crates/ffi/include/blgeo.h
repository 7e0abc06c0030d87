#ifndef BLGEO_H
#define BLGEO_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  BLGEO_METHOD_FIXED_POINT = 0,
  BLGEO_METHOD_GEODESIC = 1,
  BLGEO_METHOD_CAPACITY = 2,
} BlgeoMethod;

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum {
  BLGEO_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  BLGEO_STATUS_NULL_ARGUMENT = 1,
  /**
   * Input text was not valid UTF-8, not valid JSON or not a valid datum.
   */
  BLGEO_STATUS_INVALID_INPUT = 2,
  /**
   * The datum fails the scaling condition or a map is rank deficient.
   */
  BLGEO_STATUS_INFEASIBLE = 3,
  /**
   * The iteration budget ran out; a partial result is still returned.
   */
  BLGEO_STATUS_NOT_CONVERGED = 4,
  /**
   * The iterates escaped to the boundary; a partial result is still
   * returned when one exists.
   */
  BLGEO_STATUS_DIVERGED = 5,
  /**
   * The operator-scaling reduction exceeds the dimension cap.
   */
  BLGEO_STATUS_DIMENSION_CAP_EXCEEDED = 6,
  /**
   * The caller's buffer is too small.
   */
  BLGEO_STATUS_BUFFER_TOO_SMALL = 7,
  /**
   * The requested quantity is not available for this result.
   */
  BLGEO_STATUS_UNAVAILABLE = 8,
  /**
   * A numerical failure or a caught panic.
   */
  BLGEO_STATUS_INTERNAL = 9,
} BlgeoStatus;

/**
 * A validated Brascamp-Lieb datum.
 */
typedef struct BlgeoDatum BlgeoDatum;

/**
 * The outcome of one solve.
 */
typedef struct BlgeoResult BlgeoResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses and validates a datum from JSON text.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a valid pointer.
 */
BlgeoStatus blgeo_datum_from_json(const char *json, BlgeoDatum **out);

/**
 * Releases a datum. Null is ignored.
 *
 * # Safety
 * `datum` must come from [`blgeo_datum_from_json`] and not be freed twice.
 */
void blgeo_datum_free(BlgeoDatum *datum);

/**
 * Ambient dimension `n`, or 0 for a null handle.
 *
 * # Safety
 * `datum` must be null or a live handle.
 */
size_t blgeo_datum_dim(const BlgeoDatum *datum);

/**
 * Number of maps `m`, or 0 for a null handle.
 *
 * # Safety
 * `datum` must be null or a live handle.
 */
size_t blgeo_datum_map_count(const BlgeoDatum *datum);

/**
 * Computes `log BL` with the chosen method.
 *
 * `tol = 0` and `max_iter = 0` select the method defaults. On
 * [`BlgeoStatus::NotConverged`] and (when an iterate exists)
 * [`BlgeoStatus::Diverged`], `*out` still receives the last iterate;
 * otherwise `*out` is null unless the status is [`BlgeoStatus::Ok`].
 *
 * # Safety
 * `datum` must be a live handle and `out` a valid pointer.
 */
BlgeoStatus blgeo_solve(const BlgeoDatum *datum,
                        BlgeoMethod method,
                        double tol,
                        size_t max_iter,
                        BlgeoResult **out);

/**
 * Releases a result. Null is ignored.
 *
 * # Safety
 * `result` must come from [`blgeo_solve`] and not be freed twice.
 */
void blgeo_result_free(BlgeoResult *result);

/**
 * Estimated `log BL`; NaN for a null handle.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
double blgeo_result_log_bl(const BlgeoResult *result);

/**
 * Stationarity residual, or the doubly-stochastic residual for capacity;
 * NaN for a null handle.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
double blgeo_result_residual(const BlgeoResult *result);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
size_t blgeo_result_iterations(const BlgeoResult *result);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
bool blgeo_result_converged(const BlgeoResult *result);

/**
 * Copies the unit-determinant optimizer `X*` into `buf` in row-major
 * order. `len` must be at least `n * n`.
 *
 * # Safety
 * `result` must be a live handle and `buf` valid for `len` writes.
 */
BlgeoStatus blgeo_result_optimizer(const BlgeoResult *result, double *buf, size_t len);

/**
 * The result as the same JSON document `blgeo solve` prints. Release with
 * [`blgeo_string_free`]. Null for a null handle.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
char *blgeo_result_to_json(const BlgeoResult *result);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from [`blgeo_result_to_json`] and not be freed twice.
 */
void blgeo_string_free(char *s);

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *blgeo_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *blgeo_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLGEO_H */
