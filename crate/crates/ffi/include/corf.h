#ifndef CORF_H
#define CORF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum CorfStatus {
  CORF_STATUS_OK = 0,
  CORF_STATUS_NULL_POINTER = 1,
  CORF_STATUS_INVALID_PARAMETER = 2,
  CORF_STATUS_IO = 3,
  CORF_STATUS_FORMAT = 4,
  CORF_STATUS_DIMENSION = 5,
  CORF_STATUS_CONFIGURATION = 6,
  CORF_STATUS_INVALID_CELL = 7,
  CORF_STATUS_DATA = 8,
  CORF_STATUS_DIVERGENCE = 9,
  CORF_STATUS_PANIC = 10,
} CorfStatus;

/**
 * Configured push-pull filter bank.
 */
typedef struct CorfBank CorfBank;

/**
 * Grayscale image with intensities in [0, 1].
 */
typedef struct CorfImage CorfImage;

/**
 * Height x width x channels feature tensor, channel-major f32.
 */
typedef struct CorfTensor CorfTensor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *corf_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *corf_version(void);

/**
 * Copies `width * height` row-major intensities into a new image.
 *
 * # Safety
 * `data` must point to `width * height` readable doubles; `out` must be writable.
 */
enum CorfStatus corf_image_new(size_t width,
                               size_t height,
                               const double *data,
                               struct CorfImage **out);

/**
 * Loads a PNG or PGM file as grayscale.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CorfStatus corf_image_load(const char *path, struct CorfImage **out);

/**
 * # Safety
 * `image` must be a live handle; the out pointers must be writable or NULL.
 */
enum CorfStatus corf_image_size(const struct CorfImage *image, size_t *width, size_t *height);

/**
 * # Safety
 * `image` must come from this library and not be used afterwards. NULL is ignored.
 */
void corf_image_free(struct CorfImage *image);

/**
 * Default bank: 17 scales from 1 to 5, 12 orientations, k = 1.8, beta = sigma.
 *
 * # Safety
 * `out` must be writable.
 */
enum CorfStatus corf_bank_new_default(struct CorfBank **out);

/**
 * Bank over the scale grid `sigma_start..=sigma_end` in `sigma_step`
 * increments. `beta < 0` selects beta = sigma; `k < 0` selects the default.
 *
 * # Safety
 * `out` must be writable.
 */
enum CorfStatus corf_bank_new(double sigma_start,
                              double sigma_end,
                              double sigma_step,
                              size_t orientations,
                              double k,
                              double beta,
                              struct CorfBank **out);

/**
 * # Safety
 * `bank` must be a live handle; `channels` must be writable.
 */
enum CorfStatus corf_bank_channels(const struct CorfBank *bank, size_t *channels);

/**
 * # Safety
 * `bank` must come from this library and not be used afterwards. NULL is ignored.
 */
void corf_bank_free(struct CorfBank *bank);

/**
 * Runs the bank on an image.
 *
 * # Safety
 * `bank` and `image` must be live handles; `out` must be writable.
 */
enum CorfStatus corf_bank_apply(const struct CorfBank *bank,
                                const struct CorfImage *image,
                                struct CorfTensor **out);

/**
 * # Safety
 * `tensor` must be a live handle; the out pointers must be writable or NULL.
 */
enum CorfStatus corf_tensor_shape(const struct CorfTensor *tensor,
                                  size_t *height,
                                  size_t *width,
                                  size_t *channels);

/**
 * Borrowed pointer to the `height * width * channels` values, channel-major.
 * Valid while the tensor lives. Returns NULL for a NULL handle.
 *
 * # Safety
 * `tensor` must be a live handle or NULL.
 */
const float *corf_tensor_data(const struct CorfTensor *tensor);

/**
 * Writes the tensor in the binary `CORF` format.
 *
 * # Safety
 * `tensor` must be a live handle; `path` a NUL-terminated string.
 */
enum CorfStatus corf_tensor_export(const struct CorfTensor *tensor, const char *path);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CorfStatus corf_tensor_import(const char *path, struct CorfTensor **out);

/**
 * Cosine similarity of two same-shape tensors (1 when both are all-zero).
 *
 * # Safety
 * `a` and `b` must be live handles; `out` must be writable.
 */
enum CorfStatus corf_feature_stability(const struct CorfTensor *a,
                                       const struct CorfTensor *b,
                                       double *out);

/**
 * # Safety
 * `tensor` must come from this library and not be used afterwards. NULL is ignored.
 */
void corf_tensor_free(struct CorfTensor *tensor);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CORF_H */
