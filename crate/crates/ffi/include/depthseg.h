#ifndef DEPTHSEG_H
#define DEPTHSEG_H

#include <stddef.h>
#include <stdint.h>

// Result codes.
typedef enum DsStatus {
  DS_STATUS_OK = 0,
  DS_STATUS_NULL_POINTER = 1,
  DS_STATUS_INVALID_ARGUMENT = 2,
  DS_STATUS_IO = 3,
  DS_STATUS_FORMAT = 4,
  DS_STATUS_DIMENSION_MISMATCH = 5,
  DS_STATUS_NUMERICAL = 6,
  DS_STATUS_PANIC = 7,
} DsStatus;

// Criterion codes accepted by [`ds_infer`].
typedef enum DsCriterion {
  DS_CRITERION_OVERLAP = 0,
  DS_CRITERION_OVERLAP_CONFIDENCE = 1,
  DS_CRITERION_CONFIDENCE = 2,
} DsCriterion;

// A per-pixel boundary strength map.
typedef struct DsBoundaries DsBoundaries;

// Pipeline configuration.
typedef struct DsConfig DsConfig;

// An RGB-D frame with camera intrinsics.
typedef struct DsFrame DsFrame;

// A ranked proposal pool.
typedef struct DsPool DsPool;

// Labeled segments awaiting inference.
typedef struct DsSegments DsSegments;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread. Valid until the next
// failing call on the same thread.
const char *ds_last_error(void);

// Loads a frame from a color PPM, a 16-bit millimeter depth PGM and an
// `fx fy cx cy` intrinsics file.
//
// # Safety
// Paths must be NUL-terminated strings; `out` must be writable.
int32_t ds_frame_load(const char *color_path,
                      const char *depth_path,
                      const char *intrinsics_path,
                      struct DsFrame **out);

// Builds a frame from interleaved 8-bit RGB and depth in meters
// (0 = invalid), both `width * height` pixels, row-major.
//
// # Safety
// `rgb` must hold `3 * width * height` bytes and `depth` `width * height`
// values; `out` must be writable.
int32_t ds_frame_new(size_t width,
                     size_t height,
                     const uint8_t *rgb,
                     const double *depth,
                     double fx,
                     double fy,
                     double cx,
                     double cy,
                     struct DsFrame **out);

// # Safety
// `frame` must come from a `ds_frame_*` constructor or be null.
void ds_frame_free(struct DsFrame *frame);

// Default configuration.
//
// # Safety
// `out` must be writable.
int32_t ds_config_new(struct DsConfig **out);

// Sets one `key = value` configuration entry. Constraints spanning
// several keys are checked when the configuration is used.
//
// # Safety
// `config` must be a live handle; strings must be NUL-terminated.
int32_t ds_config_set(struct DsConfig *config, const char *key, const char *value);

// # Safety
// `config` must come from [`ds_config_new`] or be null.
void ds_config_free(struct DsConfig *config);

// Boundary map of a frame (color and, when the config enables it, depth).
//
// # Safety
// Handles must be live; `out` must be writable.
int32_t ds_boundaries_compute(const struct DsFrame *frame,
                              const struct DsConfig *config,
                              struct DsBoundaries **out);

// Copies the `width * height` boundary values into `values`.
//
// # Safety
// `values` must hold `len` doubles.
int32_t ds_boundaries_values(const struct DsBoundaries *map, double *values, size_t len);

// # Safety
// `map` must come from [`ds_boundaries_compute`] or be null.
void ds_boundaries_free(struct DsBoundaries *map);

// Ranked, diversified proposals from a boundary map with the built-in
// objectness weights (or the config's ranker file).
//
// # Safety
// Handles must be live; `out` must be writable.
int32_t ds_propose(const struct DsBoundaries *map,
                   const struct DsConfig *config,
                   struct DsPool **out);

// Number of proposals, 0 for a null handle.
//
// # Safety
// `pool` must be live or null.
size_t ds_pool_len(const struct DsPool *pool);

// Writes proposal `index` as `width * height` bytes (1 = foreground) and
// its objectness score.
//
// # Safety
// `mask` must hold `len` bytes; `score` must be writable or null.
int32_t ds_pool_mask(const struct DsPool *pool,
                     size_t index,
                     uint8_t *mask,
                     size_t len,
                     double *score);

// # Safety
// `pool` must come from [`ds_propose`] or be null.
void ds_pool_free(struct DsPool *pool);

// Empty segment list for `width × height` masks.
//
// # Safety
// `out` must be writable.
int32_t ds_segments_new(size_t width, size_t height, struct DsSegments **out);

// Appends a labeled segment given as `width * height` bytes (nonzero =
// inside).
//
// # Safety
// `mask` must hold `len` bytes.
int32_t ds_segments_add(struct DsSegments *segments,
                        const uint8_t *mask,
                        size_t len,
                        uint32_t class_id,
                        double confidence);

// Paints the `max_segments` most confident segments and writes the class
// of every pixel (0 = unlabeled) into `class_map`.
//
// # Safety
// `class_map` must hold `len` values.
int32_t ds_infer(const struct DsSegments *segments,
                 size_t max_segments,
                 int32_t criterion,
                 uint32_t *class_map,
                 size_t len);

// # Safety
// `segments` must come from [`ds_segments_new`] or be null.
void ds_segments_free(struct DsSegments *segments);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEPTHSEG_H */
