#ifndef JFSCE_H
#define JFSCE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum JfsceStatus {
  JFSCE_STATUS_OK = 0,
  JFSCE_STATUS_NULL_POINTER = 1,
  JFSCE_STATUS_INVALID_ARGUMENT = 2,
  JFSCE_STATUS_CONFIG = 3,
  JFSCE_STATUS_IO = 4,
  JFSCE_STATUS_MODEL_FORMAT = 5,
  JFSCE_STATUS_CONFIG_MISMATCH = 6,
  JFSCE_STATUS_NUMERICAL = 7,
  JFSCE_STATUS_BUFFER_TOO_SMALL = 8,
  JFSCE_STATUS_PANIC = 9,
} JfsceStatus;

typedef enum JfsceEstimator {
  JFSCE_ESTIMATOR_ML = 0,
  JFSCE_ESTIMATOR_OMP = 1,
  JFSCE_ESTIMATOR_ELM_CASCADE = 2,
  JFSCE_ESTIMATOR_ELM_RAW = 3,
} JfsceEstimator;

/**
 * Simulation configuration.
 */
typedef struct JfsceConfig JfsceConfig;

/**
 * Trained FS-NET/CE-NET pair.
 */
typedef struct JfsceModel JfsceModel;

/**
 * Finished sweep.
 */
typedef struct JfsceSweep JfsceSweep;

/**
 * One (estimator, sweep value, SNR) result.
 */
typedef struct JfsceCell {
  enum JfsceEstimator estimator;
  double sweep_value;
  double snr_db;
  double e_error;
  double nmse;
  uint64_t n_trials;
} JfsceCell;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread, NUL-terminated, into `buf`
 * and returns the buffer size needed for the whole message. A null `buf`
 * only queries the size.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t jfsce_last_error_message(char *buf, size_t len);

/**
 * Static NUL-terminated version string.
 */
const char *jfsce_version(void);

/**
 * New configuration with the default link; `desk` selects reduced training sizes.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum JfsceStatus jfsce_config_new(bool desk, struct JfsceConfig **out);

/**
 * Sets one configuration key from its text form, as in config files.
 *
 * # Safety
 * `cfg` must come from [`jfsce_config_new`]; `key` and `value` must be
 * NUL-terminated strings.
 */
enum JfsceStatus jfsce_config_set(struct JfsceConfig *cfg, const char *key, const char *value);

/**
 * Writes the configuration fingerprint (NUL-terminated hex) into `buf`.
 *
 * # Safety
 * `cfg` must be a live handle; `buf` must be valid for `len` bytes.
 */
enum JfsceStatus jfsce_config_fingerprint(const struct JfsceConfig *cfg, char *buf, size_t len);

/**
 * # Safety
 * `cfg` must be null or a handle not freed before.
 */
void jfsce_config_free(struct JfsceConfig *cfg);

/**
 * Calibrates the link and trains the networks of `estimator`.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be valid for a write.
 */
enum JfsceStatus jfsce_model_train(const struct JfsceConfig *cfg,
                                   enum JfsceEstimator estimator,
                                   struct JfsceModel **out);

/**
 * Writes the model into directory `dir`.
 *
 * # Safety
 * `model` must be a live handle; `dir` a NUL-terminated path.
 */
enum JfsceStatus jfsce_model_save(const struct JfsceModel *model, const char *dir);

/**
 * Loads a model saved for `estimator` under `cfg`; a model trained under
 * other settings gives `JFSCE_STATUS_CONFIG_MISMATCH`.
 *
 * # Safety
 * `cfg` must be a live handle, `dir` a NUL-terminated path, `out` valid for a write.
 */
enum JfsceStatus jfsce_model_load(const struct JfsceConfig *cfg,
                                  enum JfsceEstimator estimator,
                                  const char *dir,
                                  struct JfsceModel **out);

/**
 * Window length `M` and tap count `L` the model expects.
 *
 * # Safety
 * `model` must be a live handle; `m` and `l` valid for writes.
 */
enum JfsceStatus jfsce_model_shape(const struct JfsceModel *model, size_t *m, size_t *l);

/**
 * Runs the model on one window of `m` complex samples. `frame` (also `m`
 * samples) is read only by models trained with the genie-frame OMP matrix
 * and may be null otherwise. Writes the offset to `tau` and `l` taps to `h`.
 *
 * # Safety
 * `samples` and non-null `frame` must hold `2*m` doubles, `h` room for
 * `2*l` doubles, `tau` valid for a write.
 */
enum JfsceStatus jfsce_model_deploy(const struct JfsceModel *model,
                                    const double *samples,
                                    size_t m,
                                    const double *frame,
                                    size_t *tau,
                                    double *h,
                                    size_t l);

/**
 * # Safety
 * `model` must be null or a handle not freed before.
 */
void jfsce_model_free(struct JfsceModel *model);

/**
 * Zadoff-Chu sequence of length `ns` with root `root` into `out` (`2*ns` doubles).
 *
 * # Safety
 * `out` must be valid for `2*ns` doubles.
 */
enum JfsceStatus jfsce_zadoff_chu(size_t ns, uint64_t root, double *out);

/**
 * Cyclic cross-correlation synchronizer: `tau` gets the first peak of
 * `|u|²`, and `u` (`2*m` doubles, may be null) the correlations.
 *
 * # Safety
 * `samples` must hold `2*m` doubles, `training` `2*ns` doubles.
 */
enum JfsceStatus jfsce_crosscorr(const double *samples,
                                 size_t m,
                                 const double *training,
                                 size_t ns,
                                 size_t *tau,
                                 double *u);

/**
 * Runs the configured sweep on `workers` threads (0: all cores).
 *
 * # Safety
 * `cfg` must be a live handle; `out` valid for a write.
 */
enum JfsceStatus jfsce_sweep_run(const struct JfsceConfig *cfg,
                                 size_t workers,
                                 struct JfsceSweep **out);

/**
 * # Safety
 * `sweep` must be a live handle; `count` valid for a write.
 */
enum JfsceStatus jfsce_sweep_cell_count(const struct JfsceSweep *sweep, size_t *count);

/**
 * # Safety
 * `sweep` must be a live handle; `cell` valid for a write.
 */
enum JfsceStatus jfsce_sweep_cell(const struct JfsceSweep *sweep,
                                  size_t index,
                                  struct JfsceCell *cell);

/**
 * Writes the results CSV to `path` and its JSON companion next to it.
 *
 * # Safety
 * `sweep` must be a live handle; `path` a NUL-terminated path.
 */
enum JfsceStatus jfsce_sweep_write(const struct JfsceSweep *sweep, const char *path);

/**
 * # Safety
 * `sweep` must be null or a handle not freed before.
 */
void jfsce_sweep_free(struct JfsceSweep *sweep);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JFSCE_H */
