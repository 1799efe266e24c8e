#ifndef TPSEARCH_H
#define TPSEARCH_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TpStatus {
  TP_STATUS_OK = 0,
  TP_STATUS_NULL_POINTER = 1,
  TP_STATUS_INVALID_ARGUMENT = 2,
  TP_STATUS_IO = 3,
  TP_STATUS_PARSE = 4,
  TP_STATUS_DEGENERATE = 5,
  TP_STATUS_UNKNOWN_CLASS = 6,
  TP_STATUS_BUFFER_TOO_SMALL = 7,
  TP_STATUS_PANIC = 8,
} TpStatus;

typedef struct TpDensity TpDensity;

typedef struct TpIndex TpIndex;

typedef struct TpModel TpModel;

typedef struct TpScan TpScan;

/**
 * Search and likelihood parameters. Start from
 * [`tp_search_params_default`].
 */
typedef struct TpSearchParams {
  /**
   * Acceptance threshold on L.
   */
  double theta;
  /**
   * Candidate threshold on Φ; NaN keeps every feature value.
   */
  double xi;
  /**
   * Cap on likelihood evaluations per object; 0 means no cap.
   */
  size_t max_hypotheses;
  size_t max_objects;
  double a;
  double b;
  double delta_s;
  double volume_unit;
  uint64_t seed;
} TpSearchParams;

/**
 * One recognised object.
 */
typedef struct TpObject {
  uint32_t class_id;
  /**
   * Rotation as a unit quaternion `w, x, y, z`.
   */
  double rotation[4];
  /**
   * Translation (mm).
   */
  double translation[3];
  double log_likelihood;
  double tp;
  size_t evaluations;
} TpObject;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *tp_last_error(void);

/**
 * Builds a scan from `n` points stored as `x y z` triples.
 *
 * # Safety
 * `points` must hold `3 * n` doubles, `gaze` three doubles, and `out` must
 * be writable.
 */
enum TpStatus tp_scan_new(const double *points, size_t n, const double *gaze, struct TpScan **out);

/**
 * Reads a scan file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum TpStatus tp_scan_load(const char *path, struct TpScan **out);

/**
 * Number of points in a scan, 0 for a null handle.
 *
 * # Safety
 * `scan` must be null or a live handle.
 */
size_t tp_scan_len(const struct TpScan *scan);

/**
 * # Safety
 * `scan` must be null or a handle not yet freed.
 */
void tp_scan_free(struct TpScan *scan);

/**
 * Reads an object model file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum TpStatus tp_model_load(const char *path, struct TpModel **out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void tp_model_free(struct TpModel *model);

/**
 * Reads a density file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum TpStatus tp_density_load(const char *path, struct TpDensity **out);

/**
 * # Safety
 * `density` must be null or a handle not yet freed.
 */
void tp_density_free(struct TpDensity *density);

/**
 * Reads an index file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum TpStatus tp_index_load(const char *path, struct TpIndex **out);

/**
 * # Safety
 * `index` must be null or a handle not yet freed.
 */
void tp_index_free(struct TpIndex *index);

/**
 * Δ coordinates `(r, d, a)` of the triangle `x1 x2 x3` about `c`.
 *
 * # Safety
 * `c`, `x1`, `x2`, `x3` and `gaze` must each hold three doubles and `out`
 * must have room for three.
 */
enum TpStatus tp_delta_map(const double *c,
                           const double *x1,
                           const double *x2,
                           const double *x3,
                           double radius,
                           const double *gaze,
                           double *out);

/**
 * Φ of shape class `shape` at location `f`.
 *
 * # Safety
 * `scan` and `density` must be live handles, `f` must hold three doubles
 * and `out` must be writable.
 */
enum TpStatus tp_phi_score(const struct TpScan *scan,
                           const struct TpDensity *density,
                           uint32_t shape,
                           const double *f,
                           uint64_t seed,
                           double *out);

/**
 * Rigid pose taking the three `src` points onto `dst`, as a quaternion
 * `w x y z` and a translation.
 *
 * # Safety
 * `src` and `dst` must hold nine doubles each, `rotation` room for four and
 * `translation` room for three.
 */
enum TpStatus tp_solve_rigid(const double *src,
                             const double *dst,
                             double *rotation,
                             double *translation);

/**
 * Library defaults for [`TpSearchParams`].
 */
struct TpSearchParams tp_search_params_default(void);

/**
 * Sequential recognition. Writes up to `capacity` objects to `out` and
 * their number to `found`; a scan with no accepted object gives
 * `found = 0` and `TP_STATUS_OK`.
 *
 * # Safety
 * All handles must be live, `models` must hold `n_models` handles, `out`
 * must have room for `capacity` objects and `found` must be writable.
 */
enum TpStatus tp_recognize(const struct TpScan *scan,
                           const struct TpModel *const *models,
                           size_t n_models,
                           const struct TpDensity *density,
                           const struct TpIndex *index,
                           const struct TpSearchParams *params,
                           struct TpObject *out,
                           size_t capacity,
                           size_t *found);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TPSEARCH_H */
