#ifndef DDBOOT_H
#define DDBOOT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes shared by every entry point.
 */
typedef enum DdbootStatus {
  DDBOOT_STATUS_OK = 0,
  DDBOOT_STATUS_NULL_POINTER = 1,
  DDBOOT_STATUS_INVALID_ARGUMENT = 2,
  DDBOOT_STATUS_DIMENSION_MISMATCH = 3,
  /**
   * Rank deficiency, non-convergence, infeasibility or a non-PSD matrix.
   */
  DDBOOT_STATUS_NUMERICAL = 4,
  /**
   * A panic was caught at the boundary.
   */
  DDBOOT_STATUS_INTERNAL = 5,
} DdbootStatus;

typedef enum DdbootMetric {
  DDBOOT_METRIC_BOUNDED_LIPSCHITZ = 0,
  DDBOOT_METRIC_KOLMOGOROV_SMIRNOV = 1,
} DdbootMetric;

/**
 * Opaque empirical law.
 */
typedef struct DdbootLaw DdbootLaw;

/**
 * Opaque test report.
 */
typedef struct DdbootReport DdbootReport;

/**
 * Summary of a report.
 */
typedef struct DdbootReportView {
  double statistic;
  double critical_value;
  double p_value;
  double alpha;
  bool reject;
  /**
   * The bootstrap law collapsed to a point.
   */
  bool degenerate;
} DdbootReportView;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *ddboot_last_error(void);

/**
 * Library version as a static string.
 */
const char *ddboot_version(void);

/**
 * Builds a law from `len` atoms; `probs` may be null for uniform weights.
 *
 * # Safety
 * `atoms` (and `probs` when given) must hold `len` values; `out` must be writable.
 */
enum DdbootStatus ddboot_law_new(const double *atoms,
                                 const double *probs,
                                 size_t len,
                                 struct DdbootLaw **out);

/**
 * # Safety
 * `law` must be null or a handle from [`ddboot_law_new`] not yet freed.
 */
void ddboot_law_free(struct DdbootLaw *law);

/**
 * # Safety
 * `law` must be a live handle and `out` writable.
 */
enum DdbootStatus ddboot_law_len(const struct DdbootLaw *law, size_t *out);

/**
 * Smallest atom whose cumulative probability reaches `level`.
 *
 * # Safety
 * `law` must be a live handle and `out` writable.
 */
enum DdbootStatus ddboot_law_quantile(const struct DdbootLaw *law, double level, double *out);

/**
 * # Safety
 * `law` must be a live handle and `out` writable.
 */
enum DdbootStatus ddboot_law_cdf(const struct DdbootLaw *law, double x, double *out);

/**
 * # Safety
 * `a` and `b` must be live handles and `out` writable.
 */
enum DdbootStatus ddboot_law_distance(const struct DdbootLaw *a,
                                      const struct DdbootLaw *b,
                                      enum DdbootMetric metric,
                                      double *out);

/**
 * Weighted projection of `y` onto nondecreasing sequences.
 *
 * # Safety
 * `y`, `weights` and `out` must hold `len` values; `weights` may be null for unit weights.
 */
enum DdbootStatus ddboot_isotonic(const double *y, const double *weights, size_t len, double *out);

/**
 * Quantile regression of `y` on the `n x p` row-major design `x` at
 * level `tau`. Writes `p` coefficients to `beta` and the check-loss sum
 * to `objective` (which may be null).
 *
 * # Safety
 * `y` must hold `n` values, `x` `n * p` values and `beta` `p` values.
 */
enum DdbootStatus ddboot_quantile_regression(const double *y,
                                             const double *x,
                                             size_t n,
                                             size_t p,
                                             double tau,
                                             double *beta,
                                             double *objective);

/**
 * Moment inequality test of `E[X_j] <= 0` for every column of the `n x d`
 * row-major sample, with the selection-based modified bootstrap.
 *
 * # Safety
 * `data` must hold `n * d` values and `out` must be writable.
 */
enum DdbootStatus ddboot_test_moments(const double *data,
                                      size_t n,
                                      size_t d,
                                      double alpha,
                                      size_t draws,
                                      uint64_t seed,
                                      struct DdbootReport **out);

/**
 * Monotonicity test of the treatment coefficient in a quantile regression
 * on the default grid `0.2, 0.225, .., 0.8`. Column 0 of the row-major
 * design `x` is the treatment. `epsilon_n = c n^(-kappa)`.
 *
 * # Safety
 * `y` must hold `n` values, `x` `n * p` values, and `out` must be writable.
 */
enum DdbootStatus ddboot_test_monotone(const double *y,
                                       const double *x,
                                       size_t n,
                                       size_t p,
                                       double alpha,
                                       size_t draws,
                                       double c,
                                       double kappa,
                                       uint64_t seed,
                                       struct DdbootReport **out);

/**
 * # Safety
 * `report` must be null or a live handle.
 */
void ddboot_report_free(struct DdbootReport *report);

/**
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum DdbootStatus ddboot_report_view(const struct DdbootReport *report,
                                     struct DdbootReportView *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DDBOOT_H */
