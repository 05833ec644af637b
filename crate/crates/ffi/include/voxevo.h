#ifndef VOXEVO_H
#define VOXEVO_H

/* Generated by cbindgen from voxevo-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Side length of the morphology grid (bodies are `VX_GRID` x `VX_GRID`
 * characters).
 */
#define VX_GRID 5

/**
 * Result of every fallible call in this API.
 */
typedef enum VxStatus {
  VX_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  VX_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  VX_STATUS_UTF8 = 2,
  /**
   * The morphology string does not describe a valid body.
   */
  VX_STATUS_INVALID_GENOME = 3,
  /**
   * An argument was out of range or of the wrong length.
   */
  VX_STATUS_INVALID_ARGUMENT = 4,
  /**
   * A panic was caught at the FFI boundary.
   */
  VX_STATUS_PANIC = 5,
} VxStatus;

/**
 * Opaque simulation handle created by [`vx_sim_new`].
 */
typedef struct VxSim VxSim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the message of the most recent failure on this thread into `buf`
 * as a NUL-terminated string, truncating to `cap` bytes including the
 * terminator. Returns the full message length in bytes; call with a null
 * `buf` or zero `cap` to query the length alone.
 *
 * # Safety
 *
 * A non-null `buf` must point to at least `cap` writable bytes.
 */
size_t vx_last_error(char *buf, size_t cap);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vx_version(void);

/**
 * Length of the controller parameter vector, with or without the goal
 * direction sensor.
 */
size_t vx_controller_param_count(bool direction_sensor);

/**
 * Builds a simulation of the body described by `morph` (a row-major
 * `VX_GRID` x `VX_GRID` string over `R`, `S`, `H`, `V`, `.`) resting on
 * flat ground, and stores the handle in `out`.
 *
 * # Safety
 * `morph` must be a NUL-terminated string and `out` a valid pointer. A
 * returned handle must be released with [`vx_sim_free`].
 */
enum VxStatus vx_sim_new(const char *morph, struct VxSim **out);

/**
 * Releases a handle from [`vx_sim_new`]. A null `sim` is a no-op.
 *
 * # Safety
 * `sim` must be a handle from [`vx_sim_new`] that has not been freed.
 */
void vx_sim_free(struct VxSim *sim);

/**
 * Number of actuated voxels, i.e. the length `vx_sim_step` expects.
 *
 * # Safety
 * `sim` must be a live handle and `out` a valid pointer.
 */
enum VxStatus vx_sim_num_actuators(const struct VxSim *sim, size_t *out);

/**
 * Number of point masses, i.e. the pair count `vx_sim_positions` fills.
 *
 * # Safety
 * `sim` must be a live handle and `out` a valid pointer.
 */
enum VxStatus vx_sim_num_masses(const struct VxSim *sim, size_t *out);

/**
 * Advances one control step under `n` actuation commands, one per
 * actuator in row-major body order, each in [0.6, 1.6].
 *
 * # Safety
 * `sim` must be a live handle and `actions` must point to `n` doubles.
 */
enum VxStatus vx_sim_step(struct VxSim *sim, const double *actions, size_t n);

/**
 * Center-of-mass x coordinate in meters.
 *
 * # Safety
 * `sim` must be a live handle and `out` a valid pointer.
 */
enum VxStatus vx_sim_com_x(const struct VxSim *sim, double *out);

/**
 * Copies point-mass positions as (x, y) pairs into `out_xy`. Requires
 * `cap >= 2 * vx_sim_num_masses`; `written` receives the count stored.
 *
 * # Safety
 * `sim` must be a live handle, `out_xy` must point to `cap` doubles, and
 * `written` must be a valid pointer.
 */
enum VxStatus vx_sim_positions(const struct VxSim *sim,
                               double *out_xy,
                               size_t cap,
                               size_t *written);

/**
 * Copies the per-voxel observation grid into `out`: for each of the
 * `VX_GRID` x `VX_GRID` cells in row-major order, four doubles
 * (vx, vy, volume, touch), zeros at empty cells. Requires
 * `cap >= 4 * VX_GRID * VX_GRID`; `written` receives the count stored.
 *
 * # Safety
 * `sim` must be a live handle, `out` must point to `cap` doubles, and
 * `written` must be a valid pointer.
 */
enum VxStatus vx_sim_observe(const struct VxSim *sim, double *out, size_t cap, size_t *written);

/**
 * Runs one locomotion episode of `steps` control steps on flat ground
 * and stores the fitness (goal-signed center-of-mass displacement) in
 * `out_fitness`. `theta` is the controller parameter vector, of length
 * `vx_controller_param_count(direction_sensor)`; `goal_sign` must be
 * +1.0 or -1.0.
 *
 * # Safety
 * `morph` must be a NUL-terminated string, `theta` must point to
 * `theta_len` doubles, and `out_fitness` must be a valid pointer.
 */
enum VxStatus vx_episode_run(const char *morph,
                             const double *theta,
                             size_t theta_len,
                             bool direction_sensor,
                             double goal_sign,
                             uint32_t steps,
                             double *out_fitness);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOXEVO_H */
