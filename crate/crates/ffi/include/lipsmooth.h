#ifndef LIPSMOOTH_H
#define LIPSMOOTH_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LsRegion {
  LS_REGION_INNER = 0,
  LS_REGION_OMEGA_MINUS_INNER = 1,
  LS_REGION_OUTER_MINUS_OMEGA = 2,
  LS_REGION_OUTSIDE = 3,
  LS_REGION_ON_BOUNDARY = 4,
} LsRegion;

typedef enum LsStatus {
  LS_STATUS_OK = 0,
  LS_STATUS_NULL_POINTER = 1,
  LS_STATUS_INVALID_ARGUMENT = 2,
  LS_STATUS_PARSE = 3,
  LS_STATUS_GEOMETRY = 4,
  LS_STATUS_BELOW_M0 = 5,
  LS_STATUS_OUTSIDE_DOMAIN = 6,
  LS_STATUS_NO_CONVERGENCE = 7,
  LS_STATUS_IO = 8,
  LS_STATUS_UNSUPPORTED = 9,
  LS_STATUS_PANIC = 10,
} LsStatus;

/**
 * Regularized defining functions for one m.
 */
typedef struct LsApproximation LsApproximation;

/**
 * Domain atlas with its partition of unity.
 */
typedef struct LsAtlas LsAtlas;

/**
 * Values of the inner, exact and outer defining functions at one point.
 */
typedef struct LsTriple {
  double inner;
  double exact;
  double outer;
} LsTriple;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t ls_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ls_version(void);

/**
 * Builds a library shape such as `disk:radius=4,lipschitz=0.2`.
 *
 * # Safety
 * `shape` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LsStatus ls_atlas_from_shape(const char *shape, struct LsAtlas **out);

/**
 * Builds an atlas from the text of a domain spec file.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LsStatus ls_atlas_from_spec(const char *text, struct LsAtlas **out);

/**
 * # Safety
 * `atlas` must be null or a handle from `ls_atlas_from_*` not yet freed.
 */
void ls_atlas_free(struct LsAtlas *atlas);

/**
 * Dimension (2 or 3); 0 for a null handle.
 *
 * # Safety
 * `atlas` must be null or a live handle.
 */
size_t ls_atlas_dim(const struct LsAtlas *atlas);

/**
 * Number of charts; 0 for a null handle.
 *
 * # Safety
 * `atlas` must be null or a live handle.
 */
size_t ls_atlas_chart_count(const struct LsAtlas *atlas);

/**
 * Lipschitz constant and chart radius of the atlas.
 *
 * # Safety
 * `atlas` must be a live handle; the out pointers may be null.
 */
enum LsStatus ls_atlas_characteristic(const struct LsAtlas *atlas,
                                      double *lipschitz,
                                      double *radius);

/**
 * Depth of `x` below the boundary (positive inside).
 *
 * # Safety
 * `atlas` must be a live handle, `x` must point to `n` doubles.
 */
enum LsStatus ls_atlas_depth(const struct LsAtlas *atlas, const double *x, size_t n, double *out);

/**
 * Regularizes the atlas at parameter `m`. The handle keeps the atlas alive.
 *
 * # Safety
 * `atlas` must be a live handle and `out` a valid pointer.
 */
enum LsStatus ls_approximation_new(const struct LsAtlas *atlas,
                                   double m,
                                   struct LsApproximation **out);

/**
 * # Safety
 * `ap` must be null or a handle from `ls_approximation_new` not yet freed.
 */
void ls_approximation_free(struct LsApproximation *ap);

/**
 * Evaluates the three defining functions at `x`.
 *
 * # Safety
 * `ap` must be a live handle, `x` must point to `n` doubles, `out` valid.
 */
enum LsStatus ls_approximation_eval(const struct LsApproximation *ap,
                                    const double *x,
                                    size_t n,
                                    struct LsTriple *out);

/**
 * Evaluates `count` points stored row-major (`count * dim` doubles).
 * Stops at the first failing point and reports its index in `failed_at`.
 *
 * # Safety
 * `xs` must point to `count * dim` doubles and `out` to `count` triples.
 * `failed_at` may be null.
 */
enum LsStatus ls_approximation_eval_many(const struct LsApproximation *ap,
                                         const double *xs,
                                         size_t count,
                                         struct LsTriple *out,
                                         size_t *failed_at);

/**
 * Region of `x` relative to the inner, exact and outer domains, and whether
 * it lies in the band between the approximating boundaries.
 *
 * # Safety
 * `ap` must be a live handle, `x` must point to `n` doubles; `band` may be null.
 */
enum LsStatus ls_approximation_classify(const struct LsApproximation *ap,
                                        const double *x,
                                        size_t n,
                                        enum LsRegion *region,
                                        bool *band);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LIPSMOOTH_H */
