#ifndef FACTORCLUST_H
#define FACTORCLUST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum FcStatus {
  FC_STATUS_OK = 0,
  FC_STATUS_NULL_POINTER = 1,
  FC_STATUS_IO = 2,
  FC_STATUS_PARSE = 3,
  FC_STATUS_PANEL_SIZE = 4,
  FC_STATUS_DUPLICATE_ID = 5,
  FC_STATUS_DIMENSION = 6,
  FC_STATUS_LAG = 7,
  FC_STATUS_ORTHONORMAL = 8,
  FC_STATUS_PARAM = 9,
  FC_STATUS_LOCAL_MAXIMA = 10,
  FC_STATUS_RANK = 11,
  FC_STATUS_EIGEN = 12,
  FC_STATUS_ZERO_ROW = 13,
  FC_STATUS_INDEX = 14,
  FC_STATUS_CONFIG = 15,
  FC_STATUS_PANIC = 16,
  FC_STATUS_BUFFER_TOO_SMALL = 17,
} FcStatus;

/**
 * Output of the full clustering pipeline.
 */
typedef struct FcClustering FcClustering;

/**
 * Ratio sequence and selected factor counts.
 */
typedef struct FcFactorCounts FcFactorCounts;

/**
 * A loaded panel of `p` series by `n` time points.
 */
typedef struct FcPanel FcPanel;

/**
 * Tuning for [`fc_cluster`]. Start from [`fc_cluster_options_default`].
 */
typedef struct FcClusterOptions {
  size_t k0;
  /**
   * 0 selects the default `max(p/4, 8)` capped at `p`.
   */
  size_t j0;
  /**
   * Negative values estimate `r0` and `r` from the ratio sequence.
   */
  int64_t r0;
  int64_t r;
  /**
   * 1, 2 or 3 for the named threshold rules; 0 uses `omega_value`.
   */
  int omega_rule;
  double omega_value;
  /**
   * 0 chooses the number of clusters by the elbow rule.
   */
  size_t d;
  uint64_t seed;
  size_t restarts;
} FcClusterOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *fc_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fc_version(void);

/**
 * Build a panel from `p * n` values, one row of `n` per series.
 *
 * # Safety
 * `data` must point to `p * n` readable doubles; `out` must be writable.
 */
enum FcStatus fc_panel_new(const double *data, size_t p, size_t n, struct FcPanel **out);

/**
 * Load a panel from a CSV file. With `rows_are_series` zero, each line is a
 * time point and the header names the series.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FcStatus fc_panel_load_csv(const char *path, int rows_are_series, struct FcPanel **out);

/**
 * Number of series, or 0 for a null handle.
 *
 * # Safety
 * `panel` must be null or a live handle.
 */
size_t fc_panel_p(const struct FcPanel *panel);

/**
 * Number of time points, or 0 for a null handle.
 *
 * # Safety
 * `panel` must be null or a live handle.
 */
size_t fc_panel_n(const struct FcPanel *panel);

/**
 * # Safety
 * `panel` must be null or a handle not yet freed.
 */
void fc_panel_free(struct FcPanel *panel);

/**
 * Cumulative eigenvalue-ratio sequence with selected counts.
 * `j0 = 0` uses the default; a failed selection still returns the handle
 * together with [`FcStatus::LocalMaxima`].
 *
 * # Safety
 * `panel` must be a live handle; `out` must be writable.
 */
enum FcStatus fc_factor_count(const struct FcPanel *panel,
                              size_t k0,
                              size_t j0,
                              struct FcFactorCounts **out);

/**
 * Selected `(r0, r)`; [`FcStatus::LocalMaxima`] when no selection exists.
 *
 * # Safety
 * `counts` must be a live handle; `r0` and `r` must be writable.
 */
enum FcStatus fc_factor_counts_selected(const struct FcFactorCounts *counts, size_t *r0, size_t *r);

/**
 * Length of the ratio sequence (`J0 − 1`).
 *
 * # Safety
 * `counts` must be null or a live handle.
 */
size_t fc_factor_counts_len(const struct FcFactorCounts *counts);

/**
 * Copy the ratios into `buf`; entry `i` is `R_{i+1}`. A zero denominator
 * is written as +infinity and an undefined `0/0` ratio as NaN.
 *
 * # Safety
 * `counts` must be a live handle; `buf` must hold `len` doubles.
 */
enum FcStatus fc_factor_counts_ratios(const struct FcFactorCounts *counts, double *buf, size_t len);

/**
 * # Safety
 * `counts` must be null or a handle not yet freed.
 */
void fc_factor_counts_free(struct FcFactorCounts *counts);

/**
 * Defaults: k0 = 5, default J0, estimated counts, rule p2, elbow, 20 restarts.
 */
struct FcClusterOptions fc_cluster_options_default(void);

/**
 * Run the full pipeline. A null `options` uses the defaults.
 *
 * # Safety
 * `panel` must be a live handle; `options` null or valid; `out` writable.
 */
enum FcStatus fc_cluster(const struct FcPanel *panel,
                         const struct FcClusterOptions *options,
                         struct FcClustering **out);

/**
 * # Safety
 * `c` must be null or a live handle.
 */
size_t fc_clustering_r0(const struct FcClustering *c);

/**
 * # Safety
 * `c` must be null or a live handle.
 */
size_t fc_clustering_r(const struct FcClustering *c);

/**
 * Number of clusters used for the final assignment.
 *
 * # Safety
 * `c` must be null or a live handle.
 */
size_t fc_clustering_d(const struct FcClustering *c);

/**
 * Upper bound on the number of clusters from the loading eigenvalues.
 *
 * # Safety
 * `c` must be null or a live handle.
 */
size_t fc_clustering_d_hat(const struct FcClustering *c);

/**
 * Threshold used for the no-cluster test.
 *
 * # Safety
 * `c` must be null or a live handle.
 */
double fc_clustering_omega(const struct FcClustering *c);

/**
 * Cluster of every series (0-based), −1 for series in no cluster.
 *
 * # Safety
 * `c` must be a live handle; `buf` must hold `len` values.
 */
enum FcStatus fc_clustering_assignments(const struct FcClustering *c, int64_t *buf, size_t len);

/**
 * Strong loadings, row-major `p × r0`.
 *
 * # Safety
 * `c` must be a live handle; `buf` must hold `len` doubles.
 */
enum FcStatus fc_clustering_strong_loadings(const struct FcClustering *c, double *buf, size_t len);

/**
 * Weak loadings, row-major `p × r`.
 *
 * # Safety
 * `c` must be a live handle; `buf` must hold `len` doubles.
 */
enum FcStatus fc_clustering_weak_loadings(const struct FcClustering *c, double *buf, size_t len);

/**
 * # Safety
 * `c` must be null or a handle not yet freed.
 */
void fc_clustering_free(struct FcClustering *c);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FACTORCLUST_H */
