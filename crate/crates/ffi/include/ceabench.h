#ifndef CEABENCH_H
#define CEABENCH_H

/* Generated by cbindgen from ceabench-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Call outcome. Nonzero values match the CLI exit codes for the same
// failure kinds.
typedef enum CeabenchStatus {
  CEABENCH_STATUS_OK = 0,
  // A panic was caught at the boundary; state may be stale but the
  // process is intact.
  CEABENCH_STATUS_INTERNAL = 1,
  CEABENCH_STATUS_MISSING_INPUT = 3,
  CEABENCH_STATUS_SCHEMA = 4,
  CEABENCH_STATUS_PARAM = 5,
  CEABENCH_STATUS_INSUFFICIENT_DATA = 6,
  CEABENCH_STATUS_FORMAT = 7,
  CEABENCH_STATUS_VOCABULARY = 8,
  CEABENCH_STATUS_IO = 9,
} CeabenchStatus;

// Owned forest model; create with `ceabench_model_fit` or
// `ceabench_model_load`, release with `ceabench_model_free`.
typedef struct CeabenchModel CeabenchModel;

// Owned feature table; create with `ceabench_table_read`, release with
// `ceabench_table_free`.
typedef struct CeabenchTable CeabenchTable;

// Forest training controls; fill with `ceabench_forest_params_default`
// and adjust.
typedef struct CeabenchForestParams {
  size_t trees;
  size_t max_leaves;
  size_t features_per_split;
  size_t min_samples_leaf;
  // Nonzero reweights classes to equal total weight.
  uint8_t balanced;
  uint64_t seed;
} CeabenchForestParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message from the most recent failure on this thread, or an empty string.
// The pointer stays valid until the next failing ceabench call on the same
// thread.
//
// # Safety
// The returned pointer must not be freed or written through.
const char *ceabench_last_error(void);

// Library version as a static C string.
//
// # Safety
// The returned pointer is static; do not free it.
const char *ceabench_version(void);

// Reads a feature-table CSV.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer slot.
enum CeabenchStatus ceabench_table_read(const char *path, struct CeabenchTable **out);

// Writes a feature table as CSV.
//
// # Safety
// `table` must come from this library and `path` must be NUL-terminated.
enum CeabenchStatus ceabench_table_write(const struct CeabenchTable *table, const char *path);

// Number of rows. Zero when `table` is null.
//
// # Safety
// `table` must be null or come from this library.
size_t ceabench_table_rows(const struct CeabenchTable *table);

// Number of feature columns. Zero when `table` is null.
//
// # Safety
// `table` must be null or come from this library.
size_t ceabench_table_columns(const struct CeabenchTable *table);

// Releases a table. Null is a no-op.
//
// # Safety
// `table` must be null or an unreleased pointer from this library.
void ceabench_table_free(struct CeabenchTable *table);

// Spec-default training parameters.
//
// # Safety
// `out` must be a valid pointer.
void ceabench_forest_params_default(struct CeabenchForestParams *out);

// Trains a forest on a feature table.
//
// # Safety
// All pointers must be valid; `out` receives an owned model on success.
enum CeabenchStatus ceabench_model_fit(const struct CeabenchTable *table,
                                       const struct CeabenchForestParams *params,
                                       struct CeabenchModel **out);

// Loads a model file.
//
// # Safety
// `path` must be NUL-terminated and `out` a valid pointer slot.
enum CeabenchStatus ceabench_model_load(const char *path, struct CeabenchModel **out);

// Saves a model file.
//
// # Safety
// `model` must come from this library and `path` must be NUL-terminated.
enum CeabenchStatus ceabench_model_save(const struct CeabenchModel *model, const char *path);

// Number of classes the model can predict. Zero when `model` is null.
//
// # Safety
// `model` must be null or come from this library.
size_t ceabench_model_classes(const struct CeabenchModel *model);

// Copies the class name at `index` into `buf` (NUL-terminated, truncated
// to `cap`). Returns the full length in bytes excluding the NUL, or 0 for
// a bad index or null model. Call with `cap` 0 to size the buffer.
//
// # Safety
// `buf` must point to at least `cap` writable bytes unless `cap` is 0.
size_t ceabench_model_class_name(const struct CeabenchModel *model,
                                 size_t index,
                                 char *buf,
                                 size_t cap);

// Number of feature columns the model expects.
//
// # Safety
// `model` must be null or come from this library.
size_t ceabench_model_features(const struct CeabenchModel *model);

// Classifies one feature vector. Writes the winning class index to
// `class_index_out`; when `probs_out` is non-null it must hold
// `ceabench_model_classes` doubles and receives the class distribution.
// Missing features may be NaN.
//
// # Safety
// `values` must point to `len` doubles; output pointers must be valid as
// described.
enum CeabenchStatus ceabench_model_predict(const struct CeabenchModel *model,
                                           const double *values,
                                           size_t len,
                                           size_t *class_index_out,
                                           double *probs_out);

// Releases a model. Null is a no-op.
//
// # Safety
// `model` must be null or an unreleased pointer from this library.
void ceabench_model_free(struct CeabenchModel *model);

// The 12 NN-interval statistics in schema order: ibi_mean, bpm, sdnn,
// sdsd, rmssd, pnn50, pnn20, hr_mad, sd1, sd2, s, sd1_sd2. Intervals are
// milliseconds. `degenerate_out` (nullable) is set nonzero when sd2 = 0
// forced the sd1/sd2 ratio to 0.
//
// # Safety
// `nn_ms` must point to `len` doubles and `out` to 12 writable doubles.
enum CeabenchStatus ceabench_hrv_features(const double *nn_ms,
                                          size_t len,
                                          double *out,
                                          uint8_t *degenerate_out);

// Detects R peaks in an ECG trace sampled at `rate_hz` starting at
// `start_s`. On success `peaks_out` receives an owned array of peak times
// in seconds and `n_out` its length; release it with
// `ceabench_doubles_free`.
//
// # Safety
// `samples` must point to `len` doubles; `peaks_out` and `n_out` must be
// valid pointer slots.
enum CeabenchStatus ceabench_detect_r_peaks(const double *samples,
                                            size_t len,
                                            double rate_hz,
                                            double start_s,
                                            double **peaks_out,
                                            size_t *n_out);

// NN intervals (milliseconds) from peak times (seconds), mirroring the
// artifact-rejection rules of the feature extractor. Ownership as in
// `ceabench_detect_r_peaks`.
//
// # Safety
// `peaks_s` must point to `len` doubles; outputs must be valid slots.
enum CeabenchStatus ceabench_nn_intervals(const double *peaks_s,
                                          size_t len,
                                          double **nn_ms_out,
                                          size_t *n_out);

// Releases an array returned by this library. Null is a no-op.
//
// # Safety
// `ptr`/`len` must be exactly as returned by a ceabench call.
void ceabench_doubles_free(double *ptr, size_t len);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* CEABENCH_H */
