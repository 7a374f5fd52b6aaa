#ifndef DP_ESTIM_H
#define DP_ESTIM_H

/* Generated by cbindgen from the dp-estim-ffi sources. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum DpStatus {
  DP_STATUS_OK = 0,
  DP_STATUS_INVALID_ARGUMENT = 1,
  DP_STATUS_UNSUPPORTED = 2,
  DP_STATUS_NULL_POINTER = 3,
  DP_STATUS_DATA = 4,
  DP_STATUS_PANIC = 5,
  DP_STATUS_INTERNAL = 6,
} DpStatus;

/**
 * Released estimate with its budget ledger.
 */
typedef struct DpEstimate DpEstimate;

/**
 * Row-major data matrix.
 */
typedef struct DpMatrix DpMatrix;

/**
 * Design matrix with responses.
 */
typedef struct DpRegressionData DpRegressionData;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into this library from the same thread.
 */
const char *dp_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dp_version(void);

/**
 * Copies `n * d` row-major values into a new matrix.
 *
 * # Safety
 * `values` must point to `n * d` readable doubles; `out` must be writable.
 */
enum DpStatus dp_matrix_new(const double *values, size_t n, size_t d, struct DpMatrix **out);

/**
 * # Safety
 * `m` must be NULL or a handle from [`dp_matrix_new`] not yet freed.
 */
void dp_matrix_free(struct DpMatrix *m);

/**
 * Copies an `n × d` row-major design and `n` responses.
 *
 * # Safety
 * `x` must point to `n * d` doubles and `y` to `n`; `out` must be writable.
 */
enum DpStatus dp_regression_data_new(const double *x,
                                     const double *y,
                                     size_t n,
                                     size_t d,
                                     struct DpRegressionData **out);

/**
 * # Safety
 * `r` must be NULL or a handle from [`dp_regression_data_new`] not yet freed.
 */
void dp_regression_data_free(struct DpRegressionData *r);

/**
 * Gaussian-perturbed mean of entries clamped to `[-r, r]`.
 *
 * # Safety
 * `x` must be a live matrix handle; `out` must be writable.
 */
enum DpStatus dp_private_mean(const struct DpMatrix *x,
                              double epsilon,
                              double delta,
                              double r,
                              uint64_t seed,
                              struct DpEstimate **out);

/**
 * `s`-sparse private mean of entries clamped to `[-r, r]`.
 *
 * # Safety
 * `x` must be a live matrix handle; `out` must be writable.
 */
enum DpStatus dp_private_sparse_mean(const struct DpMatrix *x,
                                     double epsilon,
                                     double delta,
                                     double r,
                                     size_t s,
                                     uint64_t seed,
                                     struct DpEstimate **out);

/**
 * Noisy projected gradient descent with default tuning and response clamp
 * `sqrt(2 ln n)`.
 *
 * # Safety
 * `data` must be a live regression handle; `out` must be writable.
 */
enum DpStatus dp_private_linear_regression(const struct DpRegressionData *data,
                                           double epsilon,
                                           double delta,
                                           uint64_t seed,
                                           struct DpEstimate **out);

/**
 * Noisy iterative hard thresholding at sparsity `s` with default tuning.
 *
 * # Safety
 * `data` must be a live regression handle; `out` must be writable.
 */
enum DpStatus dp_private_sparse_regression(const struct DpRegressionData *data,
                                           double epsilon,
                                           double delta,
                                           size_t s,
                                           uint64_t seed,
                                           struct DpEstimate **out);

/**
 * Regression with every parameter given as a JSON configuration object.
 * A configuration with `"s"` runs the sparse estimator.
 *
 * # Safety
 * `data` must be a live regression handle, `config_json` a NUL-terminated
 * UTF-8 string; `out` must be writable.
 */
enum DpStatus dp_private_regression_json(const struct DpRegressionData *data,
                                         const char *config_json,
                                         struct DpEstimate **out);

/**
 * Number of coordinates in the estimate (0 for NULL).
 *
 * # Safety
 * `e` must be NULL or a live estimate handle.
 */
size_t dp_estimate_len(const struct DpEstimate *e);

/**
 * Copies the estimate into `buf`, which must hold exactly `len` doubles.
 *
 * # Safety
 * `e` must be a live estimate handle and `buf` writable for `len` doubles.
 */
enum DpStatus dp_estimate_values(const struct DpEstimate *e, double *buf, size_t len);

/**
 * Budget ledger as JSON in `*out`; release it with [`dp_string_free`].
 *
 * # Safety
 * `e` must be a live estimate handle; `out` must be writable.
 */
enum DpStatus dp_estimate_ledger_json(const struct DpEstimate *e, char **out);

/**
 * 1 when every node of the ledger sums exactly to its budget, else 0.
 *
 * # Safety
 * `e` must be NULL or a live estimate handle.
 */
int32_t dp_estimate_budget_balanced(const struct DpEstimate *e);

/**
 * # Safety
 * `e` must be NULL or a live estimate handle not yet freed.
 */
void dp_estimate_free(struct DpEstimate *e);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library not yet freed.
 */
void dp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DP_ESTIM_H */
