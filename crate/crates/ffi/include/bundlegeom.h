#ifndef BUNDLEGEOM_H
#define BUNDLEGEOM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a library call.
 */
typedef enum BgStatus {
  BG_STATUS_OK = 0,
  /**
   * Invalid input: bad scene, unknown analysis or option.
   */
  BG_STATUS_INPUT = 1,
  /**
   * The analysis ran and its property check failed; the report is still
   * written.
   */
  BG_STATUS_PROPERTY_FAILED = 2,
  BG_STATUS_PARSE = 3,
  BG_STATUS_DOMAIN = 4,
  BG_STATUS_NUMERICAL = 5,
  BG_STATUS_DEGENERATE = 6,
  BG_STATUS_UNSUPPORTED = 7,
  BG_STATUS_NULL_ARGUMENT = 8,
  BG_STATUS_INVALID_UTF8 = 9,
  BG_STATUS_PANIC = 10,
} BgStatus;

/**
 * Opaque scene handle.
 */
typedef struct BgScene BgScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static string.
 */
const char *bg_version(void);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next library call on the same thread.
 */
const char *bg_last_error(void);

/**
 * Parses a scene from TOML text.
 *
 * # Safety
 * `toml` is a NUL-terminated string; `out` is writable.
 */
enum BgStatus bg_scene_from_toml(const char *toml, struct BgScene **out);

/**
 * Builds a builtin scene. `r < 0` selects the builtin's default rank.
 *
 * # Safety
 * `name` is a NUL-terminated string; `params` points to `n_params` doubles
 * (or is null when `n_params == 0`); `out` is writable.
 */
enum BgStatus bg_scene_builtin(const char *name,
                               const double *params,
                               size_t n_params,
                               size_t n,
                               int32_t r,
                               struct BgScene **out);

/**
 * Releases a scene; null is ignored.
 *
 * # Safety
 * `scene` came from this library and is not used afterwards.
 */
void bg_scene_free(struct BgScene *scene);

/**
 * Base dimension and bundle rank of a scene.
 *
 * # Safety
 * `scene` is a live handle; `n` and `rank` are writable.
 */
enum BgStatus bg_scene_dims(const struct BgScene *scene, size_t *n, size_t *rank);

/**
 * Runs a scene analysis and writes its JSON report to `out_json`.
 * `resolution == 0` keeps the default quadrature resolution. On
 * `BG_STATUS_PROPERTY_FAILED` the report is still written.
 *
 * # Safety
 * `scene` is a live handle; `analysis` is a NUL-terminated string;
 * `out_json` is writable. Release the report with `bg_string_free`.
 */
enum BgStatus bg_run_analysis(const struct BgScene *scene,
                              const char *analysis,
                              size_t resolution,
                              char **out_json);

/**
 * Releases a string returned by the library; null is ignored.
 *
 * # Safety
 * `s` came from this library and is not used afterwards.
 */
void bg_string_free(char *s);

/**
 * Rank of `S^{r+1}` of a rank `r+1` bundle.
 *
 * # Safety
 * `out` is writable.
 */
enum BgStatus bg_symmetric_rank(size_t r, uint64_t *out);

/**
 * Lelong threshold `2R / ((r+2)(r+3))`.
 *
 * # Safety
 * `out` is writable.
 */
enum BgStatus bg_vanishing_threshold(size_t r, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BUNDLEGEOM_H */
