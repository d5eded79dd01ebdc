#ifndef FLOODCAST_H
#define FLOODCAST_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of 5-minute intensity bins in a hyetograph.
 */
#define FC_RAIN_BINS 12

typedef enum FcStatus {
  FC_STATUS_OK = 0,
  FC_STATUS_NULL_POINTER = 1,
  FC_STATUS_INVALID_ARGUMENT = 2,
  FC_STATUS_PARSE = 3,
  FC_STATUS_GEOMETRY = 4,
  FC_STATUS_SHAPE = 5,
  FC_STATUS_CHECKPOINT = 6,
  FC_STATUS_IO = 7,
  FC_STATUS_PANIC = 8,
} FcStatus;

typedef enum FcAggregation {
  FC_AGGREGATION_NONE = 0,
  FC_AGGREGATION_MEAN = 1,
  FC_AGGREGATION_MEDIAN = 2,
  FC_AGGREGATION_MAX = 3,
} FcAggregation;

/**
 * Opaque raster.
 */
typedef struct FcGrid FcGrid;

/**
 * Opaque trained surrogate.
 */
typedef struct FcModel FcModel;

/**
 * Simulator settings; start from [`fc_sim_config_default`].
 */
typedef struct FcSimConfig {
  double dt;
  double drain_time;
  double alpha;
  double min_depth;
} FcSimConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *fc_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fc_version(void);

struct FcSimConfig fc_sim_config_default(void);

/**
 * Copies `rows * cols` values into a new grid.
 *
 * # Safety
 * `values` must point to `rows * cols` readable doubles; `out` must be writable.
 */
enum FcStatus fc_grid_new(size_t rows,
                          size_t cols,
                          double cellsize,
                          double nodata,
                          const double *values,
                          struct FcGrid **out);

/**
 * Reads an ESRI ASCII grid.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FcStatus fc_grid_load(const char *path, struct FcGrid **out);

/**
 * Writes an ESRI ASCII grid.
 *
 * # Safety
 * `grid` must be a live handle and `path` a NUL-terminated string.
 */
enum FcStatus fc_grid_save(const struct FcGrid *grid, const char *path);

/**
 * Writes rows, columns, cell size and nodata; any output pointer may be null.
 *
 * # Safety
 * `grid` must be a live handle; non-null outputs must be writable.
 */
enum FcStatus fc_grid_shape(const struct FcGrid *grid,
                            size_t *rows,
                            size_t *cols,
                            double *cellsize,
                            double *nodata);

/**
 * Copies the values into `buf`, which must hold exactly `rows * cols`.
 *
 * # Safety
 * `grid` must be a live handle; `buf` must point to `len` writable doubles.
 */
enum FcStatus fc_grid_values(const struct FcGrid *grid, double *buf, size_t len);

/**
 * # Safety
 * `grid` must be null or a handle not yet freed.
 */
void fc_grid_free(struct FcGrid *grid);

/**
 * Runs the flood simulation and returns the maximum-depth grid.
 * `mass_error` (optional) receives the relative volume discrepancy.
 *
 * # Safety
 * `dem` must be a live handle, `intensities` must point to
 * [`FC_RAIN_BINS`] doubles (mm/h), `out` must be writable.
 */
enum FcStatus fc_simulate(const struct FcGrid *dem,
                          const double *intensities,
                          struct FcSimConfig config,
                          struct FcGrid **out,
                          double *mass_error);

/**
 * Loads a checkpoint written by `floodcast train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FcStatus fc_model_load(const char *path, struct FcModel **out);

/**
 * Patch size the model was trained on (0 for a null handle).
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t fc_model_patch_size(const struct FcModel *model);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void fc_model_free(struct FcModel *model);

/**
 * Predicts the maximum-depth grid for `dem` under one storm. `grid` is the
 * window spacing in cells; 0 selects half the patch size.
 *
 * # Safety
 * `model` and `dem` must be live handles, `intensities` must point to
 * [`FC_RAIN_BINS`] doubles (mm/h), `out` must be writable.
 */
enum FcStatus fc_predict(const struct FcModel *model,
                         const struct FcGrid *dem,
                         const double *intensities,
                         size_t grid,
                         enum FcAggregation method,
                         struct FcGrid **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOODCAST_H */
