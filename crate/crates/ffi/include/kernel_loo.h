#ifndef KERNEL_LOO_H
#define KERNEL_LOO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum KlStatus {
  KL_STATUS_OK = 0,
  KL_STATUS_NULL_POINTER = 1,
  KL_STATUS_INVALID_ARGUMENT = 2,
  KL_STATUS_SINGULAR = 3,
  KL_STATUS_IO = 4,
  KL_STATUS_PARSE = 5,
  KL_STATUS_PANIC = 6,
} KlStatus;

/**
 * Kernel families accepted by `kl_kernel_compute`.
 */
typedef enum KlKernelFamily {
  KL_KERNEL_FAMILY_LINEAR = 0,
  KL_KERNEL_FAMILY_NNGP = 1,
  KL_KERNEL_FAMILY_NTK = 2,
  KL_KERNEL_FAMILY_RANDOM_FEATURE = 3,
} KlKernelFamily;

/**
 * Inputs plus one-hot targets.
 */
typedef struct KlDataset KlDataset;

/**
 * Symmetric training Gram matrix.
 */
typedef struct KlKernel KlKernel;

/**
 * Leave-one-out residuals, loss and accuracy.
 */
typedef struct KlLooReport KlLooReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *kl_last_error_message(void);

/**
 * Synthetic Gaussian blobs.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum KlStatus kl_dataset_synth_blobs(size_t n,
                                     size_t d,
                                     size_t classes,
                                     double separation,
                                     uint64_t seed,
                                     struct KlDataset **out);

/**
 * Dataset from row-major inputs (`n x d`) and integer labels.
 *
 * # Safety
 * `inputs` must hold `n * d` doubles, `labels` `n` entries, `out` a handle slot.
 */
enum KlStatus kl_dataset_from_labels(const double *inputs,
                                     size_t n,
                                     size_t d,
                                     const size_t *labels,
                                     size_t classes,
                                     struct KlDataset **out);

/**
 * Labelled CSV; `label_first` selects the label column position.
 *
 * # Safety
 * `path` must be NUL-terminated, `out` a handle slot.
 */
enum KlStatus kl_dataset_load_csv(const char *path,
                                  size_t classes,
                                  bool label_first,
                                  bool header,
                                  struct KlDataset **out);

/**
 * # Safety
 * `ds` must be a dataset handle, `n`, `d` and `classes` writable.
 */
enum KlStatus kl_dataset_shape(const struct KlDataset *ds, size_t *n, size_t *d, size_t *classes);

/**
 * # Safety
 * `ds` must be null or a handle not freed before.
 */
void kl_dataset_free(struct KlDataset *ds);

/**
 * Gram matrix of the dataset inputs. `widths` is only read for
 * random-feature kernels, whose depth is `n_widths + 1`.
 *
 * # Safety
 * `ds` must be a dataset handle, `widths` hold `n_widths` entries, `out` a handle slot.
 */
enum KlStatus kl_kernel_compute(const struct KlDataset *ds,
                                enum KlKernelFamily family,
                                size_t depth,
                                const size_t *widths,
                                size_t n_widths,
                                uint64_t seed,
                                struct KlKernel **out);

/**
 * Kernel from a row-major symmetric `n x n` buffer.
 *
 * # Safety
 * `values` must hold `n * n` doubles, `out` a handle slot.
 */
enum KlStatus kl_kernel_from_matrix(const double *values, size_t n, struct KlKernel **out);

/**
 * # Safety
 * `k` must be a kernel handle and `n` writable.
 */
enum KlStatus kl_kernel_size(const struct KlKernel *k, size_t *n);

/**
 * Copies the `n x n` Gram matrix row-major into `buf` of length `len`.
 *
 * # Safety
 * `k` must be a kernel handle, `buf` writable for `len` doubles.
 */
enum KlStatus kl_kernel_copy_values(const struct KlKernel *k, double *buf, size_t len);

/**
 * # Safety
 * `k` must be null or a handle not freed before.
 */
void kl_kernel_free(struct KlKernel *k);

/**
 * Regularized leave-one-out (`lambda > 0`) on the dataset targets.
 *
 * # Safety
 * Handles must be valid, `out` a handle slot.
 */
enum KlStatus kl_loo_regularized(const struct KlKernel *k,
                                 const struct KlDataset *ds,
                                 double lambda,
                                 struct KlLooReport **out);

/**
 * Zero-regularization leave-one-out on the dataset targets.
 *
 * # Safety
 * Handles must be valid, `out` a handle slot.
 */
enum KlStatus kl_loo_zero_reg(const struct KlKernel *k,
                              const struct KlDataset *ds,
                              struct KlLooReport **out);

/**
 * Zero-regularization leave-one-out of a model trained on `noisy` targets,
 * scored against `clean` targets. Requires a full-rank kernel.
 *
 * # Safety
 * Handles must be valid, `out` a handle slot.
 */
enum KlStatus kl_loo_noisy(const struct KlKernel *k,
                           const struct KlDataset *noisy,
                           const struct KlDataset *clean,
                           struct KlLooReport **out);

/**
 * Binary leave-one-out with `y` in `{-1, +1}`; `lambda >= 0`.
 *
 * # Safety
 * `k` must be a kernel handle, `y` hold `n` doubles, `out` a handle slot.
 */
enum KlStatus kl_loo_binary(const struct KlKernel *k,
                            const double *y,
                            size_t n,
                            double lambda,
                            struct KlLooReport **out);

/**
 * # Safety
 * `r` must be a report handle and `value` writable.
 */
enum KlStatus kl_loo_report_loss(const struct KlLooReport *r, double *value);

/**
 * # Safety
 * `r` must be a report handle and `value` writable.
 */
enum KlStatus kl_loo_report_accuracy(const struct KlLooReport *r, double *value);

/**
 * Shape of the residual matrix.
 *
 * # Safety
 * `r` must be a report handle, `rows` and `cols` writable.
 */
enum KlStatus kl_loo_report_shape(const struct KlLooReport *r, size_t *rows, size_t *cols);

/**
 * Copies the residual matrix row-major into `buf` of length `len`.
 *
 * # Safety
 * `r` must be a report handle, `buf` writable for `len` doubles.
 */
enum KlStatus kl_loo_report_copy_residuals(const struct KlLooReport *r, double *buf, size_t len);

/**
 * Number of flagged points, written to `count`; their indices are copied
 * into `buf` when it holds at least `count` entries.
 *
 * # Safety
 * `r` must be a report handle, `count` writable, `buf` null or writable for `len` entries.
 */
enum KlStatus kl_loo_report_flagged(const struct KlLooReport *r,
                                    size_t *buf,
                                    size_t len,
                                    size_t *count);

/**
 * JSON summary as a newly allocated string; release with `kl_string_free`.
 *
 * # Safety
 * `r` must be a report handle and `json` writable.
 */
enum KlStatus kl_loo_report_to_json(const struct KlLooReport *r, char **json);

/**
 * # Safety
 * `s` must be null or a string from `kl_loo_report_to_json`.
 */
void kl_string_free(char *s);

/**
 * # Safety
 * `r` must be null or a handle not freed before.
 */
void kl_loo_report_free(struct KlLooReport *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KERNEL_LOO_H */
