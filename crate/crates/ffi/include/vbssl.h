#ifndef VBSSL_H
#define VBSSL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every exported function.
 */
typedef enum VbsslStatus {
  VBSSL_STATUS_OK = 0,
  VBSSL_STATUS_NULL_POINTER = 1,
  VBSSL_STATUS_INVALID_ARGUMENT = 2,
  VBSSL_STATUS_SHAPE_MISMATCH = 3,
  VBSSL_STATUS_IO = 4,
  VBSSL_STATUS_BAD_CHECKPOINT = 5,
  VBSSL_STATUS_NON_FINITE = 6,
  VBSSL_STATUS_BUFFER_TOO_SMALL = 7,
  VBSSL_STATUS_PANIC = 8,
} VbsslStatus;

/**
 * Opaque handle to a loaded model.
 */
typedef struct VbsslModel VbsslModel;

/**
 * The loss and its terms, each term unweighted.
 */
typedef struct VbsslLoss {
  double invariance;
  double variance_a;
  double variance_b;
  double covariance_a;
  double covariance_b;
  double total;
} VbsslLoss;

typedef struct VbsslMetrics {
  double accuracy;
  double top3_accuracy;
  double f1_macro;
  double precision_macro;
  double recall_macro;
} VbsslMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `cap - 1` bytes) and returns the full message length in bytes.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes, or be null with `cap == 0`.
 */
size_t vbssl_last_error_message(char *buf, size_t cap);

/**
 * VICReg loss of two `n x d` embedding batches.
 *
 * # Safety
 * `za` and `zb` must each point to `n * d` doubles; `out` must be writable.
 */
enum VbsslStatus vbssl_vicreg_loss(const double *za,
                                   const double *zb,
                                   size_t n,
                                   size_t d,
                                   double lambda,
                                   double mu,
                                   double nu,
                                   double gamma,
                                   double epsilon,
                                   struct VbsslLoss *out);

/**
 * Shape of the magnitude STFT of `len` samples.
 *
 * # Safety
 * `bins` and `frames` must be writable.
 */
enum VbsslStatus vbssl_stft_shape(size_t len,
                                  size_t fft_size,
                                  size_t hop,
                                  size_t *bins,
                                  size_t *frames);

/**
 * Magnitude STFT (Hann window) of mono samples, written as a
 * `bins x frames` row-major matrix into `out`.
 *
 * # Safety
 * `samples` must point to `len` floats and `out` to `cap` doubles.
 */
enum VbsslStatus vbssl_stft_magnitude(const float *samples,
                                      size_t len,
                                      uint32_t sample_rate,
                                      size_t fft_size,
                                      size_t hop,
                                      double *out,
                                      size_t cap);

/**
 * Classification metrics of `n x k` logits against labels in `0..k`.
 *
 * # Safety
 * `labels` must point to `n` values, `logits` to `n * k` doubles, and
 * `out` must be writable.
 */
enum VbsslStatus vbssl_compute_metrics(const size_t *labels,
                                       const double *logits,
                                       size_t n,
                                       size_t k,
                                       struct VbsslMetrics *out);

/**
 * Loads a checkpoint. Release the handle with `vbssl_model_free`.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string and `out` writable.
 */
enum VbsslStatus vbssl_model_load(const char *path, struct VbsslModel **out);

/**
 * # Safety
 * `model` must come from `vbssl_model_load` and not be used afterwards.
 */
void vbssl_model_free(struct VbsslModel *model);

/**
 * Input spectrogram shape and number of classes (0 for a model without a
 * classifier head).
 *
 * # Safety
 * `model` must be a live handle; the outputs must be writable.
 */
enum VbsslStatus vbssl_model_info(const struct VbsslModel *model,
                                  size_t *bins,
                                  size_t *frames,
                                  size_t *classes);

/**
 * Eval-mode logits for `n` spectrograms of the model's input shape, written
 * as an `n x classes` matrix.
 *
 * # Safety
 * `views` must point to `n * bins * frames` doubles and `out` to `cap` doubles.
 */
enum VbsslStatus vbssl_model_predict(const struct VbsslModel *model,
                                     const double *views,
                                     size_t n,
                                     double *out,
                                     size_t cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VBSSL_H */
