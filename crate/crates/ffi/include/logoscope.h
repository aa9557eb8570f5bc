#ifndef LOGOSCOPE_H
#define LOGOSCOPE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  LS_COLOR_BUCKET_BLACK_WHITE = 0,
  LS_COLOR_BUCKET_SILVER = 1,
  LS_COLOR_BUCKET_RED = 2,
  LS_COLOR_BUCKET_YELLOW = 3,
  LS_COLOR_BUCKET_BLUE = 4,
  LS_COLOR_BUCKET_GREEN = 5,
} LsColorBucket;

typedef enum {
  LS_PERTURBATION_BLUR = 0,
  LS_PERTURBATION_FLIP_H = 1,
  LS_PERTURBATION_FLIP_V = 2,
  LS_PERTURBATION_INVERT_COLOR = 3,
  LS_PERTURBATION_OCCLUSION = 4,
  LS_PERTURBATION_ROTATE180 = 5,
  LS_PERTURBATION_ROTATE90 = 6,
  LS_PERTURBATION_ROTATE_RANDOM = 7,
  LS_PERTURBATION_SHARPEN = 8,
} LsPerturbation;

typedef enum {
  LS_ROTATION_FULL_CIRCLE = 0,
  LS_ROTATION_NARROW = 1,
} LsRotation;

typedef enum {
  LS_SHAPE_BUCKET_CIRCLE = 0,
  LS_SHAPE_BUCKET_SQUARE = 1,
  LS_SHAPE_BUCKET_TRIANGLE = 2,
  LS_SHAPE_BUCKET_IRREGULAR = 3,
} LsShapeBucket;

typedef enum {
  LS_STATUS_OK = 0,
  LS_STATUS_NULL_POINTER = 1,
  LS_STATUS_INVALID_ARGUMENT = 2,
  LS_STATUS_IO = 3,
  LS_STATUS_UPSTREAM = 4,
  LS_STATUS_INVARIANT = 5,
  LS_STATUS_PANIC = 6,
} LsStatus;

typedef struct LsEmbedding LsEmbedding;

typedef struct LsImage LsImage;

typedef struct LsMask LsMask;

typedef struct LsProbe LsProbe;

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into this library on the same thread.
 */
const char *ls_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ls_version(void);

/**
 * Copy `len` bytes of row-major 8-bit pixels (3 or 4 channels) into a new image.
 *
 * # Safety
 * `pixels` must point to `len` readable bytes and `out` to writable storage.
 */
LsStatus ls_image_new(uint32_t width,
                      uint32_t height,
                      uint8_t channels,
                      const uint8_t *pixels,
                      size_t len,
                      LsImage **out);

/**
 * # Safety
 * `file` must be a NUL-terminated path; `out` must be writable.
 */
LsStatus ls_image_load(const char *file, LsImage **out);

/**
 * Borrow the pixel buffer. The pointer lives as long as the image.
 *
 * # Safety
 * All pointers must be valid; `img` must come from this library.
 */
LsStatus ls_image_pixels(const LsImage *img,
                         uint32_t *width,
                         uint32_t *height,
                         uint8_t *channels,
                         const uint8_t **pixels,
                         size_t *len);

/**
 * # Safety
 * `img` must come from this library or be NULL.
 */
void ls_image_free(LsImage *img);

/**
 * # Safety
 * `img` must be a live image; `bucket` and `hue_gap` writable.
 */
LsStatus ls_dominant_color(const LsImage *img, LsColorBucket *bucket, bool *hue_gap);

/**
 * # Safety
 * `img` must be a live image; `bucket` writable.
 */
LsStatus ls_classify_shape(const LsImage *img, LsShapeBucket *bucket);

/**
 * Apply one standard perturbation with an explicit seed.
 *
 * # Safety
 * `img` must be a live image; `out` writable.
 */
LsStatus ls_perturb(const LsImage *img,
                    LsPerturbation kind,
                    LsRotation rotation,
                    uint64_t seed,
                    LsImage **out);

/**
 * # Safety
 * `file` must be a NUL-terminated path; `out` writable.
 */
LsStatus ls_embedding_read(const char *file, LsEmbedding **out);

/**
 * Build an embedding from `n * d` row-major values.
 *
 * # Safety
 * `logo_id` must be NUL-terminated, `values` must hold `n * d` floats.
 */
LsStatus ls_embedding_new(const char *logo_id,
                          size_t n,
                          size_t d,
                          const float *values,
                          LsEmbedding **out);

/**
 * # Safety
 * `emb` must be live; `file` NUL-terminated.
 */
LsStatus ls_embedding_write(const LsEmbedding *emb, const char *file);

/**
 * # Safety
 * `emb` must be live; `n`, `d` writable.
 */
LsStatus ls_embedding_dims(const LsEmbedding *emb, size_t *n, size_t *d);

/**
 * Mean over tokens into `pooled`, which must hold `d` doubles.
 *
 * # Safety
 * `emb` must be live; `pooled` must have room for `d` values.
 */
LsStatus ls_pool(const LsEmbedding *emb, double *pooled, size_t d);

/**
 * Copy of `emb` with the masked coordinates zeroed in every token.
 *
 * # Safety
 * `emb` and `mask` must be live; `out` writable.
 */
LsStatus ls_ablate(const LsEmbedding *emb, const LsMask *mask, LsEmbedding **out);

/**
 * # Safety
 * `emb` must come from this library or be NULL.
 */
void ls_embedding_free(LsEmbedding *emb);

/**
 * Mask of the `k` largest-|w| coordinates of a `d`-vector.
 *
 * # Safety
 * `w` must hold `d` doubles; `out` writable.
 */
LsStatus ls_mask_top_k(const double *w, size_t d, size_t k, LsMask **out);

/**
 * # Safety
 * `out` must be writable.
 */
LsStatus ls_mask_placebo(size_t d, size_t k, uint64_t seed, LsMask **out);

/**
 * # Safety
 * `file` NUL-terminated; `out` writable.
 */
LsStatus ls_mask_load(const char *file, LsMask **out);

/**
 * Borrow the sorted indices. The pointer lives as long as the mask.
 *
 * # Safety
 * `mask` must be live; `indices` and `len` writable.
 */
LsStatus ls_mask_indices(const LsMask *mask, const size_t **indices, size_t *len);

/**
 * # Safety
 * `mask` must come from this library or be NULL.
 */
void ls_mask_free(LsMask *mask);

/**
 * Fit the L1 probe on `m` pooled rows of width `d` (row-major) with 0/1 labels.
 *
 * # Safety
 * `x` must hold `m * d` doubles, `labels` `m` bytes; `out` writable.
 */
LsStatus ls_probe_fit(const double *x,
                      const uint8_t *labels,
                      size_t m,
                      size_t d,
                      double c,
                      LsProbe **out);

/**
 * Copy the `d` raw-space weights and the intercept.
 *
 * # Safety
 * `probe` live; `w` room for `d` doubles; `b` and `nnz` writable.
 */
LsStatus ls_probe_weights(const LsProbe *probe, double *w, size_t d, double *b, size_t *nnz);

/**
 * # Safety
 * `probe` live; `z` holds `d` doubles; `prob` writable.
 */
LsStatus ls_probe_predict(const LsProbe *probe, const double *z, size_t d, double *prob);

/**
 * # Safety
 * `probe` must come from this library or be NULL.
 */
void ls_probe_free(LsProbe *probe);

/**
 * Expected calibration error over `bins` equal-width bins.
 *
 * # Safety
 * `probs` and `labels` hold `n` entries; `out` writable.
 */
LsStatus ls_ece(const double *probs, const uint8_t *labels, size_t n, size_t bins, double *out);

/**
 * # Safety
 * `probs` and `labels` hold `n` entries; `out` writable.
 */
LsStatus ls_brier(const double *probs, const uint8_t *labels, size_t n, double *out);

#endif  /* LOGOSCOPE_H */
