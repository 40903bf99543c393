#ifndef EIKONAL_LAB_H
#define EIKONAL_LAB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EikStatus {
  EIK_OK = 0,
  EIK_NULL_ARGUMENT = 1,
  /**
   * Bad parameters, unresolved scales or malformed input.
   */
  EIK_INVALID_ARGUMENT = 2,
  EIK_PRECONDITION = 3,
  EIK_NUMERICAL = 4,
  EIK_IO = 5,
  EIK_PANIC = 6,
} EikStatus;

/**
 * A unit vector field on a uniform grid.
 */
typedef struct EikField EikField;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Constant field with the given direction on `[-w, w]²` with `n × n` nodes.
 */
enum EikStatus eik_field_constant(size_t n,
                                  double half_width,
                                  double dx,
                                  double dy,
                                  struct EikField **out);

/**
 * Vortex `i(x − c)/|x − c|`, masked out at the center.
 */
enum EikStatus eik_field_vortex(size_t n,
                                double half_width,
                                double cx,
                                double cy,
                                struct EikField **out);

/**
 * Two-state jump across `{x = 0}`, or across `{y = 0}` when `horizontal` is nonzero.
 */
enum EikStatus eik_field_jump(size_t n, double half_width, int horizontal, struct EikField **out);

/**
 * Reads an EIKF1 vector field; every masked-in value must have unit length.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum EikStatus eik_field_read(const char *path, struct EikField **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `field` must come from this library and not be used afterwards.
 */
void eik_field_free(struct EikField *field);

/**
 * Node counts along x and y.
 *
 * # Safety
 * `field` must be a live handle; `nx` and `ny` writable pointers.
 */
enum EikStatus eik_field_shape(const struct EikField *field, size_t *nx, size_t *ny);

/**
 * Copies the field row by row (x fastest): `xy` receives `2·len` numbers,
 * `mask` (optional) receives `len` flags. `len` must equal `nx·ny`.
 *
 * # Safety
 * `xy` must hold `2·len` doubles and `mask`, when non-null, `len` bytes.
 */
enum EikStatus eik_field_values(const struct EikField *field,
                                double *xy,
                                uint8_t *mask,
                                size_t len);

/**
 * `‖m(· + h) − m‖_{L^p}` over the nodes where both values exist.
 *
 * # Safety
 * `field` must be a live handle and `out` writable.
 */
enum EikStatus eik_difference_norm(const struct EikField *field,
                                   double hx,
                                   double hy,
                                   double p,
                                   double *out);

/**
 * `‖ν‖_{L^p}` of the kinetic measure at mollification scale `epsilon`
 * with `n_s` angular nodes.
 *
 * # Safety
 * `field` must be a live handle and `out` writable.
 */
enum EikStatus eik_kinetic_norm(const struct EikField *field,
                                double epsilon,
                                size_t n_s,
                                double p,
                                double *out);

/**
 * Runs a named experiment (`field`, `besov`, `entropy`, `kinetic`, `trace`,
 * `cover`, `bc`) as the command-line tool does. `config_path` may be null
 * for the defaults.
 *
 * # Safety
 * String arguments must be NUL-terminated.
 */
enum EikStatus eik_run(const char *experiment, const char *config_path, const char *out_dir);

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated when `len > 0`) and returns the full message length
 * plus one.
 *
 * # Safety
 * `buf` must hold `len` bytes, or be null with `len == 0`.
 */
size_t eik_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *eik_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EIKONAL_LAB_H */
