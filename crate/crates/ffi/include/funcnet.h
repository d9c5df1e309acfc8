#ifndef FUNCNET_H
#define FUNCNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Baseline architectures for `funcnet_count_params`.
typedef enum FuncnetModelKind {
  FUNCNET_MODEL_KIND_RNN = 0,
  FUNCNET_MODEL_KIND_LSTM = 1,
  FUNCNET_MODEL_KIND_GRU = 2,
  FUNCNET_MODEL_KIND_FMLP = 3,
} FuncnetModelKind;

// Result code of every fallible call.
typedef enum FuncnetStatus {
  FUNCNET_STATUS_OK = 0,
  FUNCNET_STATUS_NULL_POINTER = 1,
  FUNCNET_STATUS_INVALID_UTF8 = 2,
  FUNCNET_STATUS_IO = 3,
  FUNCNET_STATUS_PARSE = 4,
  FUNCNET_STATUS_INVALID_ARGUMENT = 5,
  FUNCNET_STATUS_DIMENSION_MISMATCH = 6,
  FUNCNET_STATUS_NUMERICAL = 7,
  FUNCNET_STATUS_FORMAT_VERSION = 8,
  FUNCNET_STATUS_BUFFER_TOO_SMALL = 9,
  FUNCNET_STATUS_PANIC = 10,
} FuncnetStatus;

// FPCA scorer (univariate per feature, or joint).
typedef struct FuncnetFpca FuncnetFpca;

// Trained pipeline: FPCA scorer plus network.
typedef struct FuncnetPipeline FuncnetPipeline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *funcnet_version(void);

// Message of the last failed call on this thread, or null.
//
// The pointer stays valid until the next library call on the same thread.
const char *funcnet_last_error(void);

// Load a pipeline bundle written by `Pipeline::save` or `funcnet train`.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum FuncnetStatus funcnet_pipeline_load(const char *path, struct FuncnetPipeline **out);

// Parse a pipeline bundle from JSON text.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum FuncnetStatus funcnet_pipeline_from_json(const char *json, struct FuncnetPipeline **out);

// Release a pipeline. Null is ignored.
//
// # Safety
// `handle` must come from this library and not be used afterwards.
void funcnet_pipeline_free(struct FuncnetPipeline *handle);

// Number of input features (curves per subject).
//
// # Safety
// `handle` must be a live pipeline; `out` must be writable.
enum FuncnetStatus funcnet_pipeline_n_features(const struct FuncnetPipeline *handle, size_t *out);

// Length of the score vector fed to the network.
//
// # Safety
// `handle` must be a live pipeline; `out` must be writable.
enum FuncnetStatus funcnet_pipeline_n_inputs(const struct FuncnetPipeline *handle, size_t *out);

// Predict one subject.
//
// Feature `r` is observed `lens[r]` times at `times[r]` with `values[r]`.
// `out_value` receives the probability (classification) or response;
// `out_label` receives 0/1, or -1 for regression. Either may be null.
//
// # Safety
// Arrays must match the layout above; `handle` must be live.
enum FuncnetStatus funcnet_pipeline_predict(const struct FuncnetPipeline *handle,
                                            size_t n_features,
                                            const size_t *lens,
                                            const double *const *times,
                                            const double *const *values,
                                            double *out_value,
                                            int32_t *out_label);

// Network inputs (FPC scores) of one subject under a pipeline's scorer.
//
// Writes up to `capacity` doubles to `out` and the required length to
// `out_len`; returns `BufferTooSmall` when `capacity` is short.
//
// # Safety
// Same curve layout as `funcnet_pipeline_predict`; `out` holds `capacity` doubles.
enum FuncnetStatus funcnet_pipeline_scores(const struct FuncnetPipeline *handle,
                                           size_t n_features,
                                           const size_t *lens,
                                           const double *const *times,
                                           const double *const *values,
                                           double *out,
                                           size_t capacity,
                                           size_t *out_len);

// Load an FPCA scorer from `funcnet fpca` output or from a pipeline bundle.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum FuncnetStatus funcnet_fpca_load(const char *path, struct FuncnetFpca **out);

// Release an FPCA handle. Null is ignored.
//
// # Safety
// `handle` must come from this library and not be used afterwards.
void funcnet_fpca_free(struct FuncnetFpca *handle);

// Number of features the scorer expects.
//
// # Safety
// `handle` must be live; `out` must be writable.
enum FuncnetStatus funcnet_fpca_n_features(const struct FuncnetFpca *handle, size_t *out);

// Total score-vector length.
//
// # Safety
// `handle` must be live; `out` must be writable.
enum FuncnetStatus funcnet_fpca_n_scores(const struct FuncnetFpca *handle, size_t *out);

// Scores of one subject; see `funcnet_pipeline_scores` for the buffer protocol.
//
// # Safety
// Same as `funcnet_pipeline_scores`.
enum FuncnetStatus funcnet_fpca_scores(const struct FuncnetFpca *handle,
                                       size_t n_features,
                                       const size_t *lens,
                                       const double *const *times,
                                       const double *const *values,
                                       double *out,
                                       size_t capacity,
                                       size_t *out_len);

// Parameter count of a recurrent baseline or of an FMLP whose functional
// neurons each use `q` basis coefficients per feature.
//
// # Safety
// `out` must be writable.
enum FuncnetStatus funcnet_count_params(enum FuncnetModelKind kind,
                                        size_t hidden,
                                        size_t features,
                                        size_t q,
                                        uint64_t *out);

// `min(linear_rul, cap)`.
double funcnet_piecewise_rul(double linear_rul, double cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FUNCNET_H */
