#ifndef APKINETIC_H
#define APKINETIC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Collision model selector for [`apk_stepper_new`].
 */
typedef enum ApkBackend {
  APK_BACKEND_BOLTZMANN = 0,
  APK_BACKEND_BGK = 1,
  APK_BACKEND_DISABLED = 2,
} ApkBackend;

/**
 * Result code of every fallible call.
 */
typedef enum ApkStatus {
  APK_STATUS_OK = 0,
  APK_STATUS_NULL_POINTER = 1,
  APK_STATUS_INVALID_ARGUMENT = 2,
  APK_STATUS_UNKNOWN_SCHEME = 3,
  APK_STATUS_BLOW_UP = 4,
  APK_STATUS_NUMERICAL = 5,
  APK_STATUS_IO = 6,
  APK_STATUS_PANIC = 7,
} ApkStatus;

/**
 * Opaque distribution on a 2D velocity grid.
 */
typedef struct ApkGridFunction ApkGridFunction;

/**
 * Opaque IMEX pair.
 */
typedef struct ApkPair ApkPair;

/**
 * Opaque homogeneous stepper.
 */
typedef struct ApkStepper ApkStepper;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *apk_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *apk_version(void);

/**
 * Resolves a builtin scheme name or a tableau file path.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` a valid pointer.
 */
enum ApkStatus apk_pair_resolve(const char *name, struct ApkPair **out);

/**
 * # Safety
 * `pair` must be a handle from this library or null.
 */
void apk_pair_free(struct ApkPair *pair);

/**
 * Number of stages, or 0 for a null handle.
 *
 * # Safety
 * `pair` must be a live handle or null.
 */
size_t apk_pair_stages(const struct ApkPair *pair);

/**
 * 1 when the pair is globally stiffly accurate, 0 otherwise.
 *
 * # Safety
 * `pair` must be a live handle or null.
 */
int32_t apk_pair_is_gsa(const struct ApkPair *pair);

/**
 * BKW solution at time `t` on the `n × n` grid over `[-v_max, v_max)²`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum ApkStatus apk_grid_function_bkw(size_t n,
                                     double v_max,
                                     double t,
                                     double sigma,
                                     struct ApkGridFunction **out);

/**
 * Copies `len = n*n` row-major values (x index outer) into a new handle.
 *
 * # Safety
 * `values` must point to `len` doubles; `out` must be a valid pointer.
 */
enum ApkStatus apk_grid_function_from_values(size_t n,
                                             double v_max,
                                             const double *values,
                                             size_t len,
                                             struct ApkGridFunction **out);

/**
 * # Safety
 * `f` must be a handle from this library or null.
 */
void apk_grid_function_free(struct ApkGridFunction *f);

/**
 * Number of nodes, or 0 for a null handle.
 *
 * # Safety
 * `f` must be a live handle or null.
 */
size_t apk_grid_function_len(const struct ApkGridFunction *f);

/**
 * Copies the node values into `buf`, which must hold exactly
 * `apk_grid_function_len(f)` doubles.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum ApkStatus apk_grid_function_values(const struct ApkGridFunction *f, double *buf, size_t len);

/**
 * Writes `(ρ, w_x, w_y, T)` into `out[0..4]`.
 *
 * # Safety
 * `out` must point to 4 writable doubles.
 */
enum ApkStatus apk_grid_function_moments(const struct ApkGridFunction *f, double *out);

/**
 * L1 distance between two functions on the same grid.
 *
 * # Safety
 * Handles must be live; `out` must be a valid pointer.
 */
enum ApkStatus apk_l1_distance(const struct ApkGridFunction *f,
                               const struct ApkGridFunction *g,
                               double *out);

/**
 * Homogeneous stepper. The Boltzmann backend builds (or loads from
 * `APKINETIC_CACHE_DIR`) the kernel table for the `n × n` grid with the
 * calibrated kernel constant; `n` and `v_max` are ignored otherwise.
 *
 * # Safety
 * `pair` must be a live handle; `out` a valid pointer. The pair is copied.
 */
enum ApkStatus apk_stepper_new(const struct ApkPair *pair,
                               double dt,
                               double eps,
                               enum ApkBackend backend,
                               double kappa,
                               size_t n,
                               double v_max,
                               struct ApkStepper **out);

/**
 * # Safety
 * `stepper` must be a handle from this library or null.
 */
void apk_stepper_free(struct ApkStepper *stepper);

/**
 * One step from `f`; the result is a new handle in `out`.
 *
 * # Safety
 * Handles must be live; `out` a valid pointer.
 */
enum ApkStatus apk_stepper_step(const struct ApkStepper *stepper,
                                const struct ApkGridFunction *f,
                                struct ApkGridFunction **out);

/**
 * Writes a grid function as CSV (`vx,vy,f`).
 *
 * # Safety
 * `f` must be live; `path` NUL-terminated.
 */
enum ApkStatus apk_grid_function_write(const struct ApkGridFunction *f, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* APKINETIC_H */
