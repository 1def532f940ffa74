#ifndef INTERCLUST_H
#define INTERCLUST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum IcStatus {
  IC_STATUS_OK = 0,
  IC_STATUS_NULL_POINTER = 1,
  IC_STATUS_DOMAIN = 2,
  IC_STATUS_PRECONDITION = 3,
  IC_STATUS_SPLIT_INFEASIBLE = 4,
  IC_STATUS_UNKNOWN_CLUSTER = 5,
  IC_STATUS_UNKNOWN_POINT = 6,
  IC_STATUS_SIZE_CAP = 7,
  IC_STATUS_PARSE = 8,
  IC_STATUS_IO = 9,
  IC_STATUS_INVALID_ARGUMENT = 10,
  IC_STATUS_PANIC = 11,
} IcStatus;

typedef enum IcModel {
  IC_MODEL_ETA_MERGE = 0,
  IC_MODEL_ETA_MERGE_CC = 1,
  IC_MODEL_UNRESTRICTED_MERGE = 2,
} IcModel;

typedef enum IcTreeMode {
  IC_TREE_MODE_GLOBAL = 0,
  IC_TREE_MODE_LOCAL = 1,
  IC_TREE_MODE_THRESHOLD_GRAPH = 2,
  IC_TREE_MODE_ROBUST_GLOBAL = 3,
} IcTreeMode;

typedef enum IcEditKind {
  IC_EDIT_KIND_SPLIT_APPLIED = 0,
  IC_EDIT_KIND_MERGE_COMBINED = 1,
  IC_EDIT_KIND_MERGE_CARVED_PURE = 2,
  IC_EDIT_KIND_MERGE_RESPLIT = 3,
  IC_EDIT_KIND_CC_MERGE_MOVED = 4,
} IcEditKind;

typedef struct IcClustering IcClustering;

typedef struct IcMatrix IcMatrix;

typedef struct IcSession IcSession;

typedef struct IcErrorReport {
  uint64_t delta_u;
  uint64_t delta_o;
  uint64_t delta;
  uint64_t delta_cco;
  uint64_t delta_ccu;
  uint64_t delta_cc;
} IcErrorReport;

typedef struct IcModelConfig {
  enum IcModel model;
  double eta;
  enum IcTreeMode tree_mode;
  // Minimum blob size for the robust tree; 0 selects the default.
  size_t min_blob;
} IcModelConfig;

// Outcome of one edit; the added cluster ids are read with
// [`ic_session_last_added`].
typedef struct IcEditSummary {
  enum IcEditKind kind;
  size_t removed;
  size_t added;
  size_t touched_points;
  bool root_fallback;
} IcEditSummary;

typedef struct IcRunSummary {
  bool converged;
  size_t iterations;
  size_t splits;
  size_t merges;
  struct IcErrorReport initial_errors;
  struct IcErrorReport final_errors;
  // Number of non-audit bound checks that failed.
  size_t failed_bound_checks;
} IcRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call on this thread.
const char *ic_last_error(void);

// Library version as a static NUL-terminated string.
const char *ic_version(void);

// Matrix from `n * n` row-major values (symmetric, in [0, 1]).
//
// # Safety
// `values` must point to `n * n` readable doubles; `out` must be writable.
enum IcStatus ic_matrix_new(size_t n, const double *values, struct IcMatrix **out);

// Loads a binary or CSV matrix file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum IcStatus ic_matrix_load(const char *path_, struct IcMatrix **out);

// # Safety
// `m` must be a live matrix handle; `out` must be writable.
enum IcStatus ic_matrix_size(const struct IcMatrix *m, size_t *out);

// # Safety
// `m` must be null or a handle from this library, not used afterwards.
void ic_matrix_free(struct IcMatrix *m);

// Clustering where point `p` belongs to cluster `labels[p]`.
//
// # Safety
// `labels` must point to `n` readable values; `out` must be writable.
enum IcStatus ic_clustering_new(size_t n, const uint64_t *labels, struct IcClustering **out);

// Loads a `point<TAB>cluster` text file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum IcStatus ic_clustering_load(const char *path_, struct IcClustering **out);

// # Safety
// `c` must be a live handle; `path` a NUL-terminated string.
enum IcStatus ic_clustering_save(const struct IcClustering *c, const char *path_);

// Number of points and of clusters.
//
// # Safety
// `c` must be a live handle; `points` and `clusters` writable.
enum IcStatus ic_clustering_shape(const struct IcClustering *c, size_t *points, size_t *clusters);

// Writes the cluster id of every point into `labels` (length `n`).
//
// # Safety
// `c` must be a live handle; `labels` must have room for `n` values.
enum IcStatus ic_clustering_labels(const struct IcClustering *c, uint64_t *labels, size_t n);

// # Safety
// `c` must be null or a handle from this library, not used afterwards.
void ic_clustering_free(struct IcClustering *c);

// Errors of `proposed` against `target`.
//
// # Safety
// Both handles must be live; `out` writable.
enum IcStatus ic_error_report(const struct IcClustering *proposed,
                              const struct IcClustering *target,
                              struct IcErrorReport *out);

// Starts an editing session over copies of `matrix` and `initial`; the
// global tree is built here when the configuration needs one.
//
// # Safety
// Handles and `cfg` must be live; `out` writable.
enum IcStatus ic_session_new(const struct IcMatrix *matrix,
                             const struct IcClustering *initial,
                             const struct IcModelConfig *cfg,
                             struct IcSession **out);

// Splits cluster `cluster`. `out` may be null.
//
// # Safety
// `session` must be a live handle; `out` null or writable.
enum IcStatus ic_session_split(struct IcSession *session,
                               uint64_t cluster,
                               struct IcEditSummary *out);

// Merges clusters `first` and `second`. `out` may be null.
//
// # Safety
// `session` must be a live handle; `out` null or writable.
enum IcStatus ic_session_merge(struct IcSession *session,
                               uint64_t first,
                               uint64_t second,
                               struct IcEditSummary *out);

// Copies the ids of the clusters added by the last edit into `ids`
// (capacity `cap`) and their count into `len`.
//
// # Safety
// `session` must be live; `ids` must have room for `cap` values; `len` writable.
enum IcStatus ic_session_last_added(const struct IcSession *session,
                                    uint64_t *ids,
                                    size_t cap,
                                    size_t *len);

// Snapshot of the session's current clustering as a new handle.
//
// # Safety
// `session` must be live; `out` writable.
enum IcStatus ic_session_clustering(const struct IcSession *session, struct IcClustering **out);

// # Safety
// `s` must be null or a handle from this library, not used afterwards.
void ic_session_free(struct IcSession *s);

// Runs the simulated oracle from `initial` towards `target` for at most
// `cap` edits.
//
// # Safety
// Handles and `cfg` must be live; `out` writable.
enum IcStatus ic_simulate(const struct IcMatrix *matrix,
                          const struct IcClustering *target,
                          const struct IcClustering *initial,
                          const struct IcModelConfig *cfg,
                          uint64_t seed,
                          size_t cap,
                          struct IcRunSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INTERCLUST_H */
