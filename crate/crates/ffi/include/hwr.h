#ifndef HWR_H
#define HWR_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result codes. Zero is success.
 */
typedef enum HwrStatus {
  HWR_STATUS_OK = 0,
  HWR_STATUS_NULL_POINTER = 1,
  HWR_STATUS_INVALID_UTF8 = 2,
  HWR_STATUS_IO = 3,
  HWR_STATUS_IMAGE = 4,
  HWR_STATUS_INVALID_ARGUMENT = 5,
  HWR_STATUS_CHECKPOINT = 6,
  HWR_STATUS_LABEL = 7,
  HWR_STATUS_NON_FINITE = 8,
  HWR_STATUS_INTERNAL = 99,
} HwrStatus;

/**
 * A loaded model. Opaque to C.
 */
typedef struct HwrModel HwrModel;

/**
 * Edit operations turning a reference into a hypothesis.
 */
typedef struct HwrEdits {
  size_t substitutions;
  size_t insertions;
  size_t deletions;
} HwrEdits;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread; empty after success.
 * The pointer stays valid until the next library call on this thread.
 */
const char *hwr_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hwr_version(void);

/**
 * Loads a checkpoint file into a new model handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum HwrStatus hwr_model_load(const char *path, struct HwrModel **out);

/**
 * Releases a model handle. Null is ignored.
 *
 * # Safety
 * `model` must come from [`hwr_model_load`] and not be used afterwards.
 */
void hwr_model_free(struct HwrModel *model);

/**
 * Output classes per frame, blank included.
 *
 * # Safety
 * `model` must be a live handle or null (returns 0).
 */
size_t hwr_model_num_classes(const struct HwrModel *model);

/**
 * Frames emitted per image.
 */
size_t hwr_model_num_frames(void);

/**
 * Recognizes a row-major 8-bit grayscale crop. `beam_width` 0 selects greedy
 * decoding. The result is written to `*out` and must be freed with
 * [`hwr_string_free`].
 *
 * # Safety
 * `pixels` must point to `height * width` bytes; `out` must be writable.
 */
enum HwrStatus hwr_model_predict_pixels(const struct HwrModel *model,
                                        const uint8_t *pixels,
                                        size_t height,
                                        size_t width,
                                        size_t beam_width,
                                        char **out);

/**
 * Recognizes an image file. See [`hwr_model_predict_pixels`].
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum HwrStatus hwr_model_predict_file(const struct HwrModel *model,
                                      const char *path,
                                      size_t beam_width,
                                      char **out);

/**
 * Writes the `frames × classes` probability matrix of a crop into `probs`,
 * which must hold `capacity` doubles.
 *
 * # Safety
 * `pixels` must point to `height * width` bytes and `probs` to `capacity`
 * writable doubles.
 */
enum HwrStatus hwr_model_frame_probs(const struct HwrModel *model,
                                     const uint8_t *pixels,
                                     size_t height,
                                     size_t width,
                                     double *probs,
                                     size_t capacity);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void hwr_string_free(char *s);

/**
 * CTC negative log-likelihood of `labels` under a row-stochastic
 * `frames × classes` matrix whose last class is the blank.
 *
 * # Safety
 * `probs` must point to `frames * classes` doubles and `labels` to
 * `num_labels` values (may be null when `num_labels` is 0).
 */
enum HwrStatus hwr_ctc_loss(const double *probs,
                            size_t frames,
                            size_t classes,
                            const uint32_t *labels,
                            size_t num_labels,
                            double *out_loss);

/**
 * Minimum edit breakdown between two UTF-8 strings, counted in code points.
 *
 * # Safety
 * Both strings must be NUL-terminated; `out` must be writable.
 */
enum HwrStatus hwr_edit_distance(const char *reference,
                                 const char *hypothesis,
                                 struct HwrEdits *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HWR_H */
