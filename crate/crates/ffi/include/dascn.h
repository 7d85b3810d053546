#ifndef DASCN_H
#define DASCN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every function.
 */
typedef enum DascnStatus {
  DascnStatus_Ok = 0,
  DascnStatus_NullPointer = 1,
  DascnStatus_InvalidArgument = 2,
  DascnStatus_Io = 3,
  DascnStatus_Format = 4,
  DascnStatus_Json = 5,
  DascnStatus_Divergence = 6,
  DascnStatus_BufferTooSmall = 7,
  DascnStatus_Panic = 8,
} DascnStatus;

/**
 * Opaque dataset handle.
 */
typedef struct DascnDataset DascnDataset;

/**
 * Opaque trained-model handle: parameters plus the config that produced them.
 */
typedef struct DascnModel DascnModel;

/**
 * Dataset shape.
 */
typedef struct DascnDims {
  size_t feature_dim;
  size_t attribute_dim;
  size_t n_seen_classes;
  size_t n_unseen_classes;
  size_t n_train;
  size_t n_test_seen;
  size_t n_test_unseen;
} DascnDims;

/**
 * Generalized zero-shot accuracies.
 */
typedef struct DascnScores {
  double ts;
  double tr;
  double h;
} DascnScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL after a success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *dascn_last_error(void);

/**
 * Load `<root>/<split>/` in the on-disk dataset layout.
 *
 * # Safety
 * `root` and `split` must be NUL-terminated strings. `out` must be a valid
 * pointer; on success it receives a handle to free with
 * [`dascn_dataset_free`].
 */
enum DascnStatus dascn_dataset_load(const char *root, const char *split, struct DascnDataset **out);

/**
 * Build the Gaussian-cluster dataset. `seed` drives both the class layout
 * and the sample noise.
 *
 * # Safety
 * `out` must be a valid pointer; on success it receives a handle to free
 * with [`dascn_dataset_free`].
 */
enum DascnStatus dascn_dataset_synthetic(size_t n_seen_classes,
                                         size_t n_unseen_classes,
                                         size_t feature_dim,
                                         size_t attribute_dim,
                                         size_t samples_per_class,
                                         double cluster_std,
                                         uint64_t seed,
                                         struct DascnDataset **out);

/**
 * # Safety
 * `dataset` must be NULL or a handle from this library not yet freed.
 */
void dascn_dataset_free(struct DascnDataset *dataset);

/**
 * # Safety
 * `dataset` must be a live handle and `out` a valid pointer.
 */
enum DascnStatus dascn_dataset_dims(const struct DascnDataset *dataset, struct DascnDims *out);

/**
 * Train a model. `config_json` is a JSON training config; missing fields
 * take their defaults and NULL means all defaults.
 *
 * # Safety
 * `dataset` must be a live handle, `config_json` NULL or a NUL-terminated
 * string, and `out` a valid pointer. On success `*out` receives a handle to
 * free with [`dascn_model_free`].
 */
enum DascnStatus dascn_train(const struct DascnDataset *dataset,
                             const char *config_json,
                             struct DascnModel **out);

/**
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum DascnStatus dascn_model_save(const struct DascnModel *model, const char *path);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer. On
 * success `*out` receives a handle to free with [`dascn_model_free`].
 */
enum DascnStatus dascn_model_load(const char *path, struct DascnModel **out);

/**
 * # Safety
 * `model` must be NULL or a handle from this library not yet freed.
 */
void dascn_model_free(struct DascnModel *model);

/**
 * Synthesize features for every class, fit the final classifier and score
 * the unseen and seen test splits. `eval_json` follows the evaluation
 * config schema; NULL means defaults.
 *
 * # Safety
 * `model` and `dataset` must be live handles, `eval_json` NULL or a
 * NUL-terminated string, and `out` a valid pointer.
 */
enum DascnStatus dascn_evaluate(const struct DascnModel *model,
                                const struct DascnDataset *dataset,
                                const char *eval_json,
                                struct DascnScores *out);

/**
 * `2·ts·tr / (ts + tr)`, zero when both are zero.
 */
double dascn_harmonic_mean(double ts, double tr);

/**
 * Write `n` synthesized rows for `class_id`, row-major, into `buf`.
 * `buf_len` counts doubles and must be at least `n * feature_dim`.
 *
 * # Safety
 * `model` and `dataset` must be live handles and `buf` must point to
 * `buf_len` writable doubles.
 */
enum DascnStatus dascn_synthesize(const struct DascnModel *model,
                                  const struct DascnDataset *dataset,
                                  size_t class_id,
                                  size_t n,
                                  uint64_t seed,
                                  double *buf,
                                  size_t buf_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DASCN_H */
