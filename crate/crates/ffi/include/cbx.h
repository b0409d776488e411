/* Generated by cbindgen. Do not edit. */

#ifndef CBX_H
#define CBX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CbxStatus {
  CBX_STATUS_OK = 0,
  CBX_STATUS_NULL_ARG = 1,
  CBX_STATUS_INVALID_UTF8 = 2,
  CBX_STATUS_PARSE = 3,
  CBX_STATUS_VALIDATION = 4,
  CBX_STATUS_NOT_FOUND = 5,
  CBX_STATUS_CONFLICT = 6,
  CBX_STATUS_INVALID_ARGUMENT = 7,
  CBX_STATUS_UNDEFINED = 8,
  CBX_STATUS_PANIC = 9,
} CbxStatus;

typedef enum CbxOutcome {
  CBX_OUTCOME_TP = 0,
  CBX_OUTCOME_FP = 1,
  CBX_OUTCOME_TN = 2,
  CBX_OUTCOME_FN = 3,
  CBX_OUTCOME_REJECTED = 4,
} CbxOutcome;

/**
 * Opaque analysis session.
 */
typedef struct CbxSession CbxSession;

/**
 * Weighted outcome tallies.
 */
typedef struct CbxTrinaryCounts {
  double tp;
  double fp;
  double tn;
  double fn_;
  double rejected;
  double total;
} CbxTrinaryCounts;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *cbx_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *cbx_version(void);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void cbx_string_free(char *s);

/**
 * Load a dataset from its JSON ingest document and open a session on it.
 *
 * # Safety
 * `json` must be a nul-terminated string; `out` must be writable.
 */
enum CbxStatus cbx_session_open_json(const char *json, bool normalize, struct CbxSession **out);

/**
 * Rebuild a session from an exported session document.
 *
 * # Safety
 * `json` must be a nul-terminated string; `out` must be writable.
 */
enum CbxStatus cbx_session_import_json(const char *json, struct CbxSession **out);

/**
 * Close a session. Null is ignored.
 *
 * # Safety
 * `session` must come from this library and not have been freed already.
 */
void cbx_session_free(struct CbxSession *session);

/**
 * Number of instances in the session's dataset.
 *
 * # Safety
 * `session` must be a live handle; `out` must be writable.
 */
enum CbxStatus cbx_instance_count(const struct CbxSession *session, size_t *out);

/**
 * Move a classifier's operating point; writes the new version.
 *
 * # Safety
 * `session` must be a live handle, `classifier` a nul-terminated string;
 * `out_version` may be null.
 */
enum CbxStatus cbx_set_operating_point(struct CbxSession *session,
                                       const char *classifier,
                                       double lower,
                                       double upper,
                                       uint64_t *out_version);

/**
 * Outcome of one score under `(lower, upper)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum CbxStatus cbx_classify(double score,
                            bool positive,
                            double lower,
                            double upper,
                            enum CbxOutcome *out);

/**
 * Outcome tallies of a classifier at its current point, over the visible
 * items or the given selection (null for all).
 *
 * # Safety
 * `session` must be a live handle, string arguments nul-terminated or
 * null where allowed; `out` must be writable.
 */
enum CbxStatus cbx_trinary_summary(const struct CbxSession *session,
                                   const char *classifier,
                                   const char *selection,
                                   struct CbxTrinaryCounts *out);

/**
 * Metric of a classifier at its current point. `metric` is one of
 * `accuracy`, `precision`, `recall`, `f1`, `mcc`, `auc`, `brier`;
 * `policy` (nullable) is `exclude`, `as-correct` or `as-incorrect`.
 * A zero-denominator ratio yields `0` with `*out_undefined` set.
 *
 * # Safety
 * `session` must be a live handle, string arguments nul-terminated or
 * null where allowed; `out_value` must be writable and `out_undefined`
 * writable or null.
 */
enum CbxStatus cbx_metric(const struct CbxSession *session,
                          const char *classifier,
                          const char *metric,
                          const char *policy,
                          const char *selection,
                          double *out_value,
                          bool *out_undefined);

/**
 * Create a selection from a JSON request
 * (`{"expr": ..., "name"?, "weight"?, "slot"?}`); writes its new id.
 *
 * # Safety
 * `session` must be a live handle, `request_json` nul-terminated and
 * `out_id` writable. Free the id with [`cbx_string_free`].
 */
enum CbxStatus cbx_create_selection(struct CbxSession *session,
                                    const char *request_json,
                                    char **out_id);

/**
 * Current member count of a selection.
 *
 * # Safety
 * `session` must be a live handle, `id` nul-terminated, `out` writable.
 */
enum CbxStatus cbx_selection_size(const struct CbxSession *session, const char *id, size_t *out);

/**
 * Curve of the given kind (`roc`, `pr`, `reliability`, `perf-conf`, `arc`,
 * `bandwidth`, `heatmap`, `scatter`, `feature-histogram`,
 * `trinary-summary`) as JSON. `query` holds `key=value` pairs joined by
 * `&`, or is null.
 *
 * # Safety
 * `session` must be a live handle, strings nul-terminated or null where
 * allowed, `out_json` writable. Free the result with [`cbx_string_free`].
 */
enum CbxStatus cbx_curve_json(const struct CbxSession *session,
                              const char *kind,
                              const char *query,
                              char **out_json);

/**
 * Full session document as JSON, loadable with [`cbx_session_import_json`].
 *
 * # Safety
 * `session` must be a live handle and `out_json` writable. Free the result
 * with [`cbx_string_free`].
 */
enum CbxStatus cbx_export_json(const struct CbxSession *session, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CBX_H */
