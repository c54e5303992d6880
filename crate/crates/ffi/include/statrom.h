#ifndef STATROM_H
#define STATROM_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of every call.
 */
typedef enum StatromStatus {
  STATROM_STATUS_OK = 0,
  STATROM_STATUS_NULL_POINTER = 1,
  STATROM_STATUS_INVALID_UTF8 = 2,
  STATROM_STATUS_CONFIG = 3,
  STATROM_STATUS_INVALID_INPUT = 4,
  STATROM_STATUS_NUMERICAL = 5,
  STATROM_STATUS_IO = 6,
  STATROM_STATUS_BUFFER_TOO_SMALL = 7,
  STATROM_STATUS_PANIC = 8,
} StatromStatus;

typedef enum StatromChannel {
  STATROM_CHANNEL_REAL = 0,
  STATROM_CHANNEL_IMAG = 1,
} StatromChannel;

typedef enum StatromMethod {
  STATROM_METHOD_FULL_ORDER = 0,
  STATROM_METHOD_CLASSICAL = 1,
  STATROM_METHOD_STAT_ROM = 2,
} StatromMethod;

/**
 * Offline reduced bases for one configuration.
 */
typedef struct StatromArtifacts StatromArtifacts;

/**
 * Experiment settings, editable key by key.
 */
typedef struct StatromConfig StatromConfig;

/**
 * Sensor readings and the reference field they were drawn from.
 */
typedef struct StatromDataset StatromDataset;

/**
 * Posterior of every method at the dataset frequency.
 */
typedef struct StatromResult StatromResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *statrom_last_error(void);

/**
 * Parses configuration text (`key = value` lines with optional
 * `[section]` headers).
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum StatromStatus statrom_config_parse(const char *text, struct StatromConfig **out);

/**
 * Sets one key, validating the result; on failure the config is unchanged.
 *
 * # Safety
 * `cfg` must come from [`statrom_config_parse`]; strings NUL-terminated.
 */
enum StatromStatus statrom_config_set(struct StatromConfig *cfg,
                                      const char *key,
                                      const char *value);

/**
 * # Safety
 * `cfg` must come from [`statrom_config_parse`] or be null.
 */
void statrom_config_free(struct StatromConfig *cfg);

/**
 * Runs a harness command (`converge-rom`, `sweep`, ...) writing into the
 * configured output directory, or `out_dir` when non-null.
 *
 * # Safety
 * `cfg` must be a live handle; strings NUL-terminated.
 */
enum StatromStatus statrom_run_command(const struct StatromConfig *cfg,
                                       const char *command,
                                       const char *out_dir);

/**
 * Builds reduced bases for every QMC sample.
 *
 * # Safety
 * `cfg` must be a live handle; `out` writable.
 */
enum StatromStatus statrom_offline(const struct StatromConfig *cfg, struct StatromArtifacts **out);

/**
 * Number of nodes of the prior mesh.
 *
 * # Safety
 * `art` must be a live handle; `n_nodes` writable.
 */
enum StatromStatus statrom_artifacts_nodes(const struct StatromArtifacts *art, size_t *n_nodes);

/**
 * # Safety
 * `art` must come from [`statrom_offline`] or be null.
 */
void statrom_artifacts_free(struct StatromArtifacts *art);

/**
 * Synthesizes sensor readings at `frequency_hz`.
 *
 * # Safety
 * `cfg` must be a live handle; `out` writable.
 */
enum StatromStatus statrom_generate_data(const struct StatromConfig *cfg,
                                         double frequency_hz,
                                         struct StatromDataset **out);

/**
 * Reading matrix dimensions.
 *
 * # Safety
 * `ds` must be a live handle; outputs writable.
 */
enum StatromStatus statrom_dataset_shape(const struct StatromDataset *ds,
                                         size_t *n_sensors,
                                         size_t *n_obs);

/**
 * One channel of the readings, row-major (sensor by observation).
 *
 * # Safety
 * `ds` must be a live handle; `out` must hold `len` doubles.
 */
enum StatromStatus statrom_dataset_readings(const struct StatromDataset *ds,
                                            enum StatromChannel ch,
                                            double *out,
                                            size_t len,
                                            size_t *written);

/**
 * # Safety
 * `ds` must come from [`statrom_generate_data`] or be null.
 */
void statrom_dataset_free(struct StatromDataset *ds);

/**
 * Conditions every method on the dataset at its own frequency.
 *
 * # Safety
 * Handles must be live; `out` writable.
 */
enum StatromStatus statrom_online(const struct StatromArtifacts *art,
                                  const struct StatromDataset *ds,
                                  bool full_order,
                                  struct StatromResult **out);

/**
 * Relative H¹ posterior error and learned model-mismatch scale.
 *
 * # Safety
 * `res` must be a live handle; outputs writable or null.
 */
enum StatromStatus statrom_result_error(const struct StatromResult *res,
                                        enum StatromMethod m,
                                        enum StatromChannel ch,
                                        double *relative_error,
                                        double *sigma_d);

/**
 * Predictive nodal field on the prior mesh.
 *
 * # Safety
 * `res` must be a live handle; `out` must hold `len` doubles.
 */
enum StatromStatus statrom_result_field(const struct StatromResult *res,
                                        enum StatromMethod m,
                                        enum StatromChannel ch,
                                        double *out,
                                        size_t len,
                                        size_t *written);

/**
 * # Safety
 * `res` must come from [`statrom_online`] or be null.
 */
void statrom_result_free(struct StatromResult *res);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STATROM_H */
