#ifndef PACKING_SIM_H
#define PACKING_SIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum PsStatus {
  PS_STATUS_OK = 0,
  PS_STATUS_NULL_POINTER = 1,
  PS_STATUS_INVALID_UTF8 = 2,
  PS_STATUS_INVALID_JSON = 3,
  /**
   * Bad space, demand, or simulation parameters.
   */
  PS_STATUS_INVALID_INPUT = 4,
  PS_STATUS_INFEASIBLE = 5,
  /**
   * Solver non-convergence or fluid divergence.
   */
  PS_STATUS_NOT_CONVERGED = 6,
  /**
   * Sampling window too short for the requested batches.
   */
  PS_STATUS_SHORT_WINDOW = 7,
  PS_STATUS_IO = 8,
  /**
   * Output buffer too small; the error message gives the required length.
   */
  PS_STATUS_BUFFER_TOO_SMALL = 9,
  PS_STATUS_INDEX_OUT_OF_RANGE = 10,
  PS_STATUS_PANIC = 11,
} PsStatus;

/**
 * Simulation handle: a validated config plus the outcome of the last run.
 */
typedef struct PsSimulation PsSimulation;

/**
 * Configuration space handle.
 */
typedef struct PsSpace PsSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ps_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *ps_last_error(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void ps_string_free(char *s);

/**
 * Builds a configuration space from JSON: `{"B": [...], "b": [[...]]}`
 * and/or `{"configs": [[...]]}`.
 *
 * # Safety
 * `json` must be NUL-terminated; `out` must be writable.
 */
enum PsStatus ps_space_from_json(const char *json, struct PsSpace **out);

/**
 * # Safety
 * `space` must come from [`ps_space_from_json`] and not have been freed.
 */
void ps_space_free(struct PsSpace *space);

/**
 * Number of nonempty configurations.
 *
 * # Safety
 * `space` must be a live handle; `out` must be writable.
 */
enum PsStatus ps_space_len(const struct PsSpace *space, size_t *out);

/**
 * Number of customer types.
 *
 * # Safety
 * `space` must be a live handle; `out` must be writable.
 */
enum PsStatus ps_space_num_types(const struct PsSpace *space, size_t *out);

/**
 * Copies configuration `index` into `out` (`cap` entries available).
 *
 * # Safety
 * `space` must be a live handle; `out` must hold `cap` values.
 */
enum PsStatus ps_space_config(const struct PsSpace *space, size_t index, uint32_t *out, size_t cap);

/**
 * Minimizer `x*` of the objective for arrival rates `lambda` and service
 * rates `mu` (`types` entries each). Writes `ps_space_len` values to
 * `out_x` (capacity `cap`) and the optimal value to `out_f` when non-NULL.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum PsStatus ps_solve_xstar(const struct PsSpace *space,
                             const double *lambda,
                             const double *mu,
                             size_t types,
                             double alpha,
                             double *out_x,
                             size_t cap,
                             double *out_f);

/**
 * Solves a problem given as JSON `{"space": ..., "demand": ..., "alpha": a}`
 * and returns `{"xstar", "f_star", "eta", "kkt_residual", "phi_star",
 * "phi_of_xstar", "nsi_at_phi_optimum"}` as JSON.
 *
 * # Safety
 * `json` must be NUL-terminated; `out` must be writable.
 */
enum PsStatus ps_solve_json(const char *json, char **out);

/**
 * Validates a simulation config given as JSON.
 *
 * # Safety
 * `json` must be NUL-terminated; `out` must be writable.
 */
enum PsStatus ps_sim_from_json(const char *json, struct PsSimulation **out);

/**
 * # Safety
 * `sim` must come from [`ps_sim_from_json`] and not have been freed.
 */
void ps_sim_free(struct PsSimulation *sim);

/**
 * Overrides the seed of the next run.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum PsStatus ps_sim_set_seed(struct PsSimulation *sim, uint64_t seed);

/**
 * Runs the simulation; the summary becomes available through
 * [`ps_sim_summary_json`] and the snapshots through
 * [`ps_sim_snapshot_count`] and [`ps_sim_snapshot_x`].
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum PsStatus ps_sim_run(struct PsSimulation *sim);

/**
 * Summary of the last run as JSON.
 *
 * # Safety
 * `sim` must be a live handle; `out` must be writable.
 */
enum PsStatus ps_sim_summary_json(const struct PsSimulation *sim, char **out);

/**
 * Number of snapshots recorded by the last run.
 *
 * # Safety
 * `sim` must be a live handle; `out` must be writable.
 */
enum PsStatus ps_sim_snapshot_count(const struct PsSimulation *sim, size_t *out);

/**
 * Copies the fluid-scaled state of snapshot `index` (dense, `ps_space_len`
 * entries) into `out_x` and its time into `out_t` when non-NULL.
 *
 * # Safety
 * `sim` must be a live handle; `out_x` must hold `cap` values.
 */
enum PsStatus ps_sim_snapshot_x(const struct PsSimulation *sim,
                                size_t index,
                                double *out_t,
                                double *out_x,
                                size_t cap);

/**
 * Runs an experiment given as JSON and returns the report as JSON.
 *
 * # Safety
 * `json` must be NUL-terminated; `out` must be writable.
 */
enum PsStatus ps_experiment_run_json(const char *json, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PACKING_SIM_H */
