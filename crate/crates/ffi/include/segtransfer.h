#ifndef SEGTRANSFER_H
#define SEGTRANSFER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Chart kinds accepted by [`st_render_svg`].
typedef enum st_plot_kind {
  ST_PLOT_KIND_RADAR = 0,
  ST_PLOT_KIND_BOXPLOT = 1,
  ST_PLOT_KIND_SCATTER = 2,
} st_plot_kind;

// Result of every fallible call. Values from 10 upwards equal the numeric
// error codes the command-line tool prints.
typedef enum st_status {
  ST_STATUS_OK = 0,
  ST_STATUS_NULL_POINTER = 1,
  ST_STATUS_INVALID_UTF8 = 2,
  ST_STATUS_PANIC = 3,
  ST_STATUS_CONGRUENCE = 10,
  ST_STATUS_DOMAIN = 11,
  ST_STATUS_UNDEFINED_SCORE = 12,
  ST_STATUS_EMPTY_DATASET = 13,
  ST_STATUS_UNDEFINED_CORRELATION = 14,
  ST_STATUS_INSUFFICIENT_DATA = 15,
  ST_STATUS_UNAVAILABLE_FEATURES = 16,
  ST_STATUS_DEGENERATE_DATA = 17,
  ST_STATUS_NO_RULE = 18,
  ST_STATUS_REGISTRY = 19,
  ST_STATUS_MISSING_FILE = 30,
  ST_STATUS_DIMENSION_MISMATCH = 31,
  ST_STATUS_INVALID_CLASS = 32,
  ST_STATUS_PRB1_CORRUPT = 33,
  ST_STATUS_INVALID_PROBABILITIES = 34,
  ST_STATUS_ARGMAX_MISMATCH = 35,
  ST_STATUS_IMAGE_FORMAT = 36,
  ST_STATUS_MANIFEST = 37,
  ST_STATUS_INVALID_CONFIG = 40,
  ST_STATUS_USAGE = 41,
  ST_STATUS_JSON = 50,
  ST_STATUS_IO = 51,
} st_status;

// Run configuration.
typedef struct st_config st_config;

// Loaded, validated dataset.
typedef struct st_dataset st_dataset;

// Result of [`st_analyze`].
typedef struct st_report st_report;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *st_version(void);

// Message of the calling thread's most recent failure ("" if none).
const char *st_last_error_message(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void st_string_free(char *s);

// New configuration holding every default.
struct st_config *st_config_default(void);

// Reads an INI configuration file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum st_status st_config_load(const char *path, struct st_config **out);

// Sets the master seed of a configuration.
//
// # Safety
// `cfg` must be a live handle.
enum st_status st_config_set_seed(struct st_config *cfg, uint64_t seed);

// # Safety
// `cfg` must be NULL or a live handle; it is invalid afterwards.
void st_config_free(struct st_config *cfg);

// Generates `n` paired samples under `out_dir` and writes a manifest
// there. `cfg` may be NULL for defaults; `delta` and `shared` override it.
//
// # Safety
// `cfg` must be NULL or a live handle; `out_dir` a NUL-terminated string.
enum st_status st_simgen(const struct st_config *cfg,
                         uintptr_t n,
                         double delta,
                         bool shared,
                         const char *out_dir);

// Loads and validates the dataset a manifest describes.
//
// # Safety
// `manifest` must be a NUL-terminated string; `out` must be writable.
enum st_status st_dataset_load(const char *manifest, struct st_dataset **out);

// Number of samples; 0 for NULL.
//
// # Safety
// `ds` must be NULL or a live handle.
uintptr_t st_dataset_len(const struct st_dataset *ds);

// Number of classes; 0 for NULL.
//
// # Safety
// `ds` must be NULL or a live handle.
uintptr_t st_dataset_num_classes(const struct st_dataset *ds);

// Number of non-fatal load warnings; 0 for NULL.
//
// # Safety
// `ds` must be NULL or a live handle.
uintptr_t st_dataset_warning_count(const struct st_dataset *ds);

// # Safety
// `ds` must be NULL or a live handle; it is invalid afterwards.
void st_dataset_free(struct st_dataset *ds);

// Runs every analysis. `cfg` may be NULL for defaults.
//
// # Safety
// `ds` must be a live handle, `cfg` NULL or a live handle, `out` writable.
enum st_status st_analyze(const struct st_dataset *ds,
                          const struct st_config *cfg,
                          struct st_report **out);

// Report as JSON; release with [`st_string_free`].
//
// # Safety
// `report` must be a live handle; `out` must be writable.
enum st_status st_report_to_json(const struct st_report *report, char **out);

// Writes report.json and the CSV tables into `out_dir`.
//
// # Safety
// `report` must be a live handle; `out_dir` a NUL-terminated string.
enum st_status st_report_write(const struct st_report *report, const char *out_dir);

// Per-image mIoU correlation between domains. Fails with
// `ST_UNDEFINED_CORRELATION` when the report holds no coefficient.
//
// # Safety
// `report` must be a live handle; `out` must be writable.
enum st_status st_report_miou_correlation(const struct st_report *report, double *out);

// Mean discriminator test accuracy over classes for one variant
// (0 = all segments, 1 = errors only).
//
// # Safety
// `report` must be a live handle; `out` must be writable.
enum st_status st_report_mean_accuracy(const struct st_report *report,
                                       bool errors_only,
                                       double *out);

// # Safety
// `report` must be NULL or a live handle; it is invalid afterwards.
void st_report_free(struct st_report *report);

// Renders a chart of the report as SVG. `class` < 0 means "no class"
// (valid for scatter only). Release the result with [`st_string_free`].
//
// # Safety
// `report` must be a live handle; `out` must be writable.
enum st_status st_render_svg(const struct st_report *report,
                             enum st_plot_kind kind,
                             int32_t class_,
                             char **out);

// Fills `counts` (row-major, `num_classes`²) with the confusion matrix of
// two row-major label rasters; 255 marks ignored pixels.
//
// # Safety
// `pred` and `gt` must hold `width * height` bytes; `counts` must hold
// `num_classes * num_classes` values.
enum st_status st_confusion(const uint8_t *pred,
                            const uint8_t *gt,
                            uint32_t width,
                            uint32_t height,
                            uintptr_t num_classes,
                            uint64_t *counts);

// IoU of class `class`. `*defined` is false (and `*out` untouched) when
// the class is absent from both rasters.
//
// # Safety
// `pred` and `gt` must hold `width * height` bytes; `out` and `defined`
// must be writable.
enum st_status st_iou_class(const uint8_t *pred,
                            const uint8_t *gt,
                            uint32_t width,
                            uint32_t height,
                            uintptr_t num_classes,
                            uintptr_t class_,
                            double *out,
                            bool *defined);

// Mean IoU over the classes with defined IoU.
//
// # Safety
// `pred` and `gt` must hold `width * height` bytes; `out` must be writable.
enum st_status st_miou_image(const uint8_t *pred,
                             const uint8_t *gt,
                             uint32_t width,
                             uint32_t height,
                             uintptr_t num_classes,
                             double *out);

// Sample Pearson correlation of two length-`n` arrays.
//
// # Safety
// `xs` and `ys` must hold `n` values; `out` must be writable.
enum st_status st_pearson(const double *xs, const double *ys, uintptr_t n, double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* SEGTRANSFER_H */
