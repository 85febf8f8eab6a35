#ifndef JMFLOW_H
#define JMFLOW_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum JmStatus {
  JM_STATUS_OK = 0,
  JM_STATUS_NULL_POINTER = 1,
  JM_STATUS_INVALID_ARGUMENT = 2,
  JM_STATUS_SHAPE_MISMATCH = 3,
  JM_STATUS_COLLISION = 4,
  JM_STATUS_COLLISION_APPROACH = 5,
  JM_STATUS_STEP_FAILURE = 6,
  JM_STATUS_ENERGY_DRIFT = 7,
  JM_STATUS_NON_CONVERGENCE = 8,
  JM_STATUS_PRECONDITION = 9,
  JM_STATUS_SCHEMA = 10,
  JM_STATUS_IO = 11,
  JM_STATUS_PANIC = 12,
} JmStatus;

/**
 * Normalized Busemann function `u(x) = phi_h(0, p) - phi_h(x, p)` for a
 * fixed target `p`.
 */
typedef struct JmBusemann JmBusemann;

/**
 * A set of point masses in `R^d`.
 */
typedef struct JmMassSystem JmMassSystem;

/**
 * A loaded scenario.
 */
typedef struct JmScenario JmScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t jm_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *jm_version(void);

/**
 * Creates a mass system of `n` bodies in dimension `dim`.
 *
 * # Safety
 * `masses` must point to `n` doubles; `out` must be writable.
 */
enum JmStatus jm_mass_system_new(const double *masses,
                                 size_t n,
                                 size_t dim,
                                 struct JmMassSystem **out);

/**
 * # Safety
 * `ms` must be null or a handle from this library, released once.
 */
void jm_mass_system_free(struct JmMassSystem *ms);

/**
 * Number of configuration coordinates `N d`, or 0 for a null handle.
 *
 * # Safety
 * `ms` must be null or a valid handle.
 */
size_t jm_mass_system_ndof(const struct JmMassSystem *ms);

/**
 * Energy `1/2 |v|^2 - U(q)`.
 *
 * # Safety
 * `q` and `v` must point to `len` doubles; `out` must be writable.
 */
enum JmStatus jm_energy(const struct JmMassSystem *ms,
                        const double *q,
                        const double *v,
                        size_t len,
                        double *out);

/**
 * Integrates Newton's equations from `(q, v)` for time `t` (either sign),
 * writing the end state.
 *
 * # Safety
 * All arrays must hold `len` doubles.
 */
enum JmStatus jm_flow_map(const struct JmMassSystem *ms,
                          const double *q,
                          const double *v,
                          size_t len,
                          double t,
                          double *q_out,
                          double *v_out);

/**
 * Free-time action potential `phi_h(x, y)` and the optimal duration.
 *
 * # Safety
 * `x` and `y` must hold `len` doubles; `t_star` may be null.
 */
enum JmStatus jm_phi(const struct JmMassSystem *ms,
                     double h,
                     const double *x,
                     const double *y,
                     size_t len,
                     double *value,
                     double *t_star);

/**
 * Limit shape `a` of the motion from `(q, v)`, estimated at `horizon`.
 * `p` receives the remainder exponent, or NaN when no fit was possible.
 *
 * # Safety
 * Arrays must hold `len` doubles; `p` may be null.
 */
enum JmStatus jm_limit_shape(const struct JmMassSystem *ms,
                             const double *q,
                             const double *v,
                             size_t len,
                             double horizon,
                             double *a_out,
                             double *p);

/**
 * Velocity at `x` whose motion has limit shape `a`, for `x` in the cone of
 * half-opening cosine `alpha` outside radius `r`.
 *
 * # Safety
 * Arrays must hold `len` doubles; `residual` may be null.
 */
enum JmStatus jm_solve_velocity(const struct JmMassSystem *ms,
                                const double *a,
                                double alpha,
                                double r,
                                const double *x,
                                size_t len,
                                double *v_out,
                                double *residual);

/**
 * Prepares the Busemann function for target `p` at energy `h`.
 *
 * # Safety
 * `p` must hold `len` doubles; `out` must be writable.
 */
enum JmStatus jm_busemann_new(const struct JmMassSystem *ms,
                              double h,
                              const double *p,
                              size_t len,
                              struct JmBusemann **out);

/**
 * Evaluates the Busemann function at `x`.
 *
 * # Safety
 * `b` must be a valid handle and `x` must hold `len` doubles.
 */
enum JmStatus jm_busemann_eval(const struct JmBusemann *b,
                               const double *x,
                               size_t len,
                               double *out);

/**
 * # Safety
 * `b` must be null or a handle from this library, released once.
 */
void jm_busemann_free(struct JmBusemann *b);

/**
 * Loads a scenario file or bundled scenario by name.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum JmStatus jm_scenario_load(const char *path, struct JmScenario **out);

/**
 * New mass-system handle for a scenario (release it separately).
 *
 * # Safety
 * `sc` must be a valid handle; `out` must be writable.
 */
enum JmStatus jm_scenario_mass_system(const struct JmScenario *sc, struct JmMassSystem **out);

/**
 * Copies the named state's positions and velocities.
 *
 * # Safety
 * `name` must be NUL-terminated; `q_out` and `v_out` must hold `len` doubles.
 */
enum JmStatus jm_scenario_state(const struct JmScenario *sc,
                                const char *name,
                                double *q_out,
                                double *v_out,
                                size_t len);

/**
 * # Safety
 * `sc` must be null or a handle from this library, released once.
 */
void jm_scenario_free(struct JmScenario *sc);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JMFLOW_H */
