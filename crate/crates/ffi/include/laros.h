#ifndef LAROS_H
#define LAROS_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum {
  LAROS_STATUS_OK = 0,
  LAROS_STATUS_NULL_POINTER = 1,
  LAROS_STATUS_INVALID_ARGUMENT = 2,
  LAROS_STATUS_DIMENSION_MISMATCH = 3,
  LAROS_STATUS_NO_FEATURE_FOUND = 4,
  LAROS_STATUS_NUMERICAL = 5,
  LAROS_STATUS_OUT_OF_RANGE = 6,
  LAROS_STATUS_PANIC = 7,
} LarosStatus;

typedef enum {
  LAROS_ALGORITHM_DUAL = 0,
  LAROS_ALGORITHM_PRIMAL = 1,
} LarosAlgorithm;

typedef enum {
  LAROS_STOP_REASON_RESIDUAL = 0,
  LAROS_STOP_REASON_CERTIFIED = 1,
  LAROS_STOP_REASON_ITERATION_CAP = 2,
} LarosStopReason;

/**
 * Result of [`laros_extract`].
 */
typedef struct LarosFeatures LarosFeatures;

/**
 * A matrix and its penalty parameter.
 */
typedef struct LarosProblem LarosProblem;

/**
 * Result of [`laros_solve`].
 */
typedef struct LarosSolution LarosSolution;

/**
 * Solver settings. Start from [`laros_solve_options_default`].
 */
typedef struct {
  LarosAlgorithm algorithm;
  double eps;
  size_t max_outer;
  /**
   * 0 keeps the algorithm's own default.
   */
  size_t max_inner;
  /**
   * Non-positive means `1/theta`.
   */
  double lambda0;
  bool certify;
  size_t cert_cadence;
  double eps_s;
} LarosSolveOptions;

typedef struct {
  size_t outer_iters;
  size_t inner_iters_total;
  double wall_seconds;
  double certify_seconds;
  bool certified;
  LarosStopReason stop_reason;
  double objective;
  double residual;
} LarosStats;

typedef struct {
  double theta;
  /**
   * Number of rows of the support.
   */
  size_t size;
  /**
   * Number of columns of the support.
   */
  size_t n_images;
  double sigma;
  double f_min;
} LarosFeatureInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or null. The pointer
 * stays valid until the next `laros_*` call on the same thread.
 */
const char *laros_last_error_message(void);

/**
 * Fills `out` with the defaults used by the command line `solve`.
 *
 * # Safety
 * `out` must be null or point to writable memory for one options struct.
 */
LarosStatus laros_solve_options_default(LarosSolveOptions *out);

/**
 * Creates a problem from a row-major `rows × cols` matrix.
 *
 * # Safety
 * `data` must point to `rows * cols` doubles; `out` must be writable.
 */
LarosStatus laros_problem_new(const double *data,
                              size_t rows,
                              size_t cols,
                              double theta,
                              LarosProblem **out);

/**
 * # Safety
 * `p` must be null or a handle from [`laros_problem_new`] not yet freed.
 */
void laros_problem_free(LarosProblem *p);

/**
 * Runs one solve. `options` may be null for the defaults.
 *
 * # Safety
 * `problem` must be a live handle, `options` null or valid, `out` writable.
 */
LarosStatus laros_solve(const LarosProblem *problem,
                        const LarosSolveOptions *options,
                        LarosSolution **out);

/**
 * # Safety
 * `s` must be null or a handle from [`laros_solve`] not yet freed.
 */
void laros_solution_free(LarosSolution *s);

/**
 * # Safety
 * `s` must be a live handle and `out` writable.
 */
LarosStatus laros_solution_stats(const LarosSolution *s, LarosStats *out);

/**
 * Copies `X₁` row-major into `buf`, which holds `len` doubles.
 *
 * # Safety
 * `s` must be a live handle and `buf` must hold `len` doubles.
 */
LarosStatus laros_solution_x1(const LarosSolution *s, double *buf, size_t len);

/**
 * Copies `X₂` row-major into `buf`, which holds `len` doubles.
 *
 * # Safety
 * `s` must be a live handle and `buf` must hold `len` doubles.
 */
LarosStatus laros_solution_x2(const LarosSolution *s, double *buf, size_t len);

/**
 * Sequential feature extraction with the default θ grid.
 *
 * `max_features` of 0 keeps the default; `negative_scale > 0` extracts dark
 * features of `negative_scale − A`. `options` may be null.
 *
 * # Safety
 * `data` must point to `rows * cols` doubles, `options` null or valid, `out`
 * writable.
 */
LarosStatus laros_extract(const double *data,
                          size_t rows,
                          size_t cols,
                          const LarosSolveOptions *options,
                          size_t max_features,
                          double negative_scale,
                          LarosFeatures **out);

/**
 * # Safety
 * `f` must be null or a handle from [`laros_extract`] not yet freed.
 */
void laros_features_free(LarosFeatures *f);

/**
 * Number of extracted features; 0 for a null handle.
 *
 * # Safety
 * `f` must be null or a live handle.
 */
size_t laros_features_count(const LarosFeatures *f);

/**
 * # Safety
 * `f` must be a live handle and `out` writable.
 */
LarosStatus laros_feature_info(const LarosFeatures *f, size_t index, LarosFeatureInfo *out);

/**
 * Copies the zero-based support rows (length `size`) into `buf`.
 *
 * # Safety
 * `f` must be a live handle and `buf` must hold `len` values.
 */
LarosStatus laros_feature_rows(const LarosFeatures *f, size_t index, size_t *buf, size_t len);

/**
 * Copies the zero-based support columns (length `n_images`) into `buf`.
 *
 * # Safety
 * `f` must be a live handle and `buf` must hold `len` values.
 */
LarosStatus laros_feature_cols(const LarosFeatures *f, size_t index, size_t *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LAROS_H */
