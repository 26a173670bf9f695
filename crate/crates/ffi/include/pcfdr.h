#ifndef PCFDR_H
#define PCFDR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PcfdrStatus {
  PCFDR_STATUS_OK = 0,
  PCFDR_STATUS_NULL_POINTER = 1,
  PCFDR_STATUS_INVALID_ARGUMENT = 2,
  PCFDR_STATUS_DEGENERATE = 3,
  PCFDR_STATUS_SIZE_LIMIT = 4,
  PCFDR_STATUS_WEIGHT_NORMALIZATION = 5,
  PCFDR_STATUS_LENGTH_MISMATCH = 6,
  PCFDR_STATUS_INDEX_OUT_OF_RANGE = 7,
  PCFDR_STATUS_NO_TRUE_NULL = 8,
  PCFDR_STATUS_INVALID_UTF8 = 9,
  PCFDR_STATUS_JSON = 10,
  PCFDR_STATUS_PANIC = 11,
} PcfdrStatus;

typedef enum PcfdrMethod {
  PCFDR_METHOD_FISHER = 0,
  PCFDR_METHOD_STOUFFER = 1,
  PCFDR_METHOD_SIMES = 2,
  PCFDR_METHOD_BONFERRONI = 3,
  PCFDR_METHOD_HOMMEL = 4,
  /*
   Uses the `lambda` argument of the call.
   */
  PCFDR_METHOD_SIMES_STOREY = 5,
} PcfdrMethod;

typedef enum PcfdrShape {
  PCFDR_SHAPE_IDENTITY = 0,
  PCFDR_SHAPE_RECIPROCAL_SUM = 1,
  PCFDR_SHAPE_BONFERRONI = 2,
} PcfdrShape;

/*
 Opaque p-value matrix (rows = features, columns = studies).
 */
typedef struct PcfdrMatrix PcfdrMatrix;

/*
 Opaque replicability report.
 */
typedef struct PcfdrReport PcfdrReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread; empty if none. Valid
 until the next failing call on the same thread.
 */
const char *pcfdr_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *pcfdr_version(void);

/*
 Global-null combination of `p[0..len]`.

 # Safety
 `p` must point to `len` readable doubles and `out` to a writable double.
 */
enum PcfdrStatus pcfdr_combine(const double *p,
                               size_t len,
                               enum PcfdrMethod m,
                               double lambda,
                               double *out);

/*
 Partial conjunction p-value for "at least `u` of `len` effects".

 # Safety
 `p` must point to `len` readable doubles and `out` to a writable double.
 */
enum PcfdrStatus pcfdr_pc_pvalue(const double *p,
                                 size_t len,
                                 size_t u,
                                 enum PcfdrMethod m,
                                 double lambda,
                                 double *out);

/*
 BH-adjusted p-values into `out[0..len]`.

 # Safety
 `p` must point to `len` readable doubles and `out` to `len` writable doubles.
 */
enum PcfdrStatus pcfdr_bh_adjusted(const double *p, size_t len, double *out);

/*
 Weighted step-up procedure with thresholds `alpha * w_i * beta(r) / len`.
 `w` and `v` may be null for unit weights. `rejected[i]` is set to 1 for
 rejected hypotheses and 0 otherwise; `n_rejected` may be null.

 # Safety
 `p`, and `w`/`v` when non-null, must point to `len` readable doubles;
 `rejected` must point to `len` writable bytes.
 */
enum PcfdrStatus pcfdr_step_up(const double *p,
                               size_t len,
                               const double *w,
                               const double *v,
                               double alpha,
                               enum PcfdrShape beta,
                               uint8_t *rejected,
                               size_t *n_rejected);

/*
 Copies a row-major `m x n` matrix into a new handle.

 # Safety
 `data` must point to `m * n` readable doubles and `out` to a writable pointer.
 */
enum PcfdrStatus pcfdr_matrix_new(size_t m, size_t n, const double *data, struct PcfdrMatrix **out);

/*
 # Safety
 `mat` must be null or a handle from [`pcfdr_matrix_new`] not yet freed.
 */
void pcfdr_matrix_free(struct PcfdrMatrix *mat);

/*
 Number of rows, or 0 for a null handle.

 # Safety
 `mat` must be null or a live handle.
 */
size_t pcfdr_matrix_rows(const struct PcfdrMatrix *mat);

/*
 Number of columns, or 0 for a null handle.

 # Safety
 `mat` must be null or a live handle.
 */
size_t pcfdr_matrix_cols(const struct PcfdrMatrix *mat);

/*
 Two-step replicability analysis with unit weights: BH-type selection at
 level `q` on the global-null p-values of `m`, then lower bounds on the
 number of studies with an effect, both using shape `beta`.

 # Safety
 `mat` must be a live handle and `out` a writable pointer.
 */
enum PcfdrStatus pcfdr_replicate(const struct PcfdrMatrix *mat,
                                 enum PcfdrMethod m,
                                 double lambda,
                                 double q,
                                 enum PcfdrShape beta,
                                 struct PcfdrReport **out);

/*
 # Safety
 `report` must be null or a handle from [`pcfdr_replicate`] not yet freed.
 */
void pcfdr_report_free(struct PcfdrReport *report);

/*
 Number of selected features, or 0 for a null handle.

 # Safety
 `report` must be null or a live handle.
 */
size_t pcfdr_report_len(const struct PcfdrReport *report);

/*
 Weighted size of the selected set.

 # Safety
 `report` must be null or a live handle.
 */
double pcfdr_report_selected_volume(const struct PcfdrReport *report);

/*
 Entry `idx` of the report: feature index, its lower bound and the Step 2
 threshold. Any output pointer may be null.

 # Safety
 `report` must be a live handle; non-null outputs must be writable.
 */
enum PcfdrStatus pcfdr_report_get(const struct PcfdrReport *report,
                                  size_t idx,
                                  size_t *feature,
                                  size_t *khat,
                                  double *threshold);

/*
 The report as JSON.

 # Safety
 `report` must be a live handle and `out` a writable pointer.
 */
enum PcfdrStatus pcfdr_report_to_json(const struct PcfdrReport *report, char **out);

/*
 Runs the Monte Carlo checks of a scenario document (same format as the
 command-line `verify`) and returns the JSON report. `all_pass` may be null.

 # Safety
 `scenario_json` must be a NUL-terminated string; `out` a writable pointer.
 */
enum PcfdrStatus pcfdr_verify_json(const char *scenario_json, char **out, int *all_pass);

/*
 Releases a string returned by this library.

 # Safety
 `s` must be null or a string from this library not yet freed.
 */
void pcfdr_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PCFDR_H */
