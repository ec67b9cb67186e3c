#ifndef DISSIPATON_PINN_H
#define DISSIPATON_PINN_H

/* Generated from the Rust sources by cbindgen; edit those instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Observable columns of a computed trajectory.
 */
typedef enum DqmeColumn {
  /**
   * Sample times t.
   */
  DQME_COLUMN_TIME = 0,
  /**
   * Re tr ρ(0) — stays 1 on a healthy run.
   */
  DQME_COLUMN_TRACE_RE = 1,
  /**
   * Im tr ρ(0) — stays 0 on a healthy run.
   */
  DQME_COLUMN_TRACE_IM = 2,
  /**
   * Impurity occupation ⟨n̂_↑⟩.
   */
  DQME_COLUMN_OCCUPATION_UP = 3,
  /**
   * Particle current out of the first reservoir.
   */
  DQME_COLUMN_CURRENT_LEFT = 4,
  /**
   * Particle current out of the second reservoir (0 with one reservoir).
   */
  DQME_COLUMN_CURRENT_RIGHT = 5,
} DqmeColumn;

/**
 * Status code of every fallible call.
 *
 * The values 1–4 coincide with the exit classes of the command-line
 * binary, so a code means the same thing whichever surface reported it;
 * the remaining values are interface errors that can only happen here.
 */
typedef enum DqmeStatus {
  /**
   * The call succeeded.
   */
  DQME_STATUS_OK = 0,
  /**
   * A file could not be read or written.
   */
  DQME_STATUS_IO = 1,
  /**
   * The run file is malformed or inconsistent.
   */
  DQME_STATUS_CONFIG = 2,
  /**
   * A physics invariant failed at run time (non-finite state, trace
   * drift, a violated generator arbiter).
   */
  DQME_STATUS_PHYSICS = 3,
  /**
   * The optimizer gave up before reaching its stage targets.
   */
  DQME_STATUS_OPTIMIZATION = 4,
  /**
   * A required pointer argument was NULL.
   */
  DQME_STATUS_NULL_ARGUMENT = 5,
  /**
   * A string argument was not valid UTF-8.
   */
  DQME_STATUS_INVALID_UTF8 = 6,
  /**
   * The caller's buffer is shorter than the data; nothing was copied.
   */
  DQME_STATUS_BUFFER_TOO_SMALL = 7,
  /**
   * An internal panic was caught at the boundary; the handle is left in
   * an unspecified but freeable state.
   */
  DQME_STATUS_PANIC = 8,
} DqmeStatus;

/**
 * A configured simulation: parsed run file, expanded bath, enumerated
 * hierarchy, assembled generator, equilibrium initial tensor, and the most
 * recently computed trajectory, if any.  Opaque to C.
 */
typedef struct DqmeSimulation DqmeSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version of the library, as a static NUL-terminated string.
 */
const char *dqme_version(void);

/**
 * Copy the explanation of the most recent failure on this thread into
 * `buf` (NUL-terminated, truncated to `cap` bytes including the NUL) and
 * return the full message length in bytes, excluding the NUL.  `buf` may
 * be NULL to query the length alone; the message is retained either way.
 *
 * # Safety
 * `buf`, when non-NULL, must point to at least `cap` writable bytes.
 */
uintptr_t dqme_last_error(char *buf, uintptr_t cap);

/**
 * Build a simulation from the text of a TOML run file.  On success `*out`
 * receives an owned handle; on failure it is set to NULL.
 *
 * # Safety
 * `text` must point to a NUL-terminated string and `out` to a writable
 * pointer slot.
 */
enum DqmeStatus dqme_simulation_from_toml(const char *text, struct DqmeSimulation **out);

/**
 * Build a simulation from a run file on disk: TOML, or the JSON manifest
 * of an earlier run (the manifest embeds its effective configuration).
 *
 * # Safety
 * `path` must point to a NUL-terminated string and `out` to a writable
 * pointer slot.
 */
enum DqmeStatus dqme_simulation_from_file(const char *path, struct DqmeSimulation **out);

/**
 * Release a handle.  NULL is a harmless no-op; freeing twice is not.
 *
 * # Safety
 * `sim`, when non-NULL, must be a pointer obtained from a
 * `dqme_simulation_*` constructor that has not been freed yet.
 */
void dqme_simulation_free(struct DqmeSimulation *sim);

/**
 * Number of retained hierarchy states (the dimension of the generator).
 * Returns 0 for a NULL handle.
 *
 * # Safety
 * `sim`, when non-NULL, must be a live handle.
 */
uintptr_t dqme_hierarchy_dim(const struct DqmeSimulation *sim);

/**
 * Number of exponential modes in the bath expansion (both σ, all
 * reservoirs and orbitals).  Returns 0 for a NULL handle.
 *
 * # Safety
 * `sim`, when non-NULL, must be a live handle.
 */
uintptr_t dqme_mode_count(const struct DqmeSimulation *sim);

/**
 * Number of stored entries in the sparse generator.  Returns 0 for a NULL
 * handle.
 *
 * # Safety
 * `sim`, when non-NULL, must be a live handle.
 */
uintptr_t dqme_generator_nnz(const struct DqmeSimulation *sim);

/**
 * Evaluate the bath correlation function C^σ(t) of one (reservoir,
 * orbital) pair from the exponential expansion.  `sigma` is the sign σ:
 * −1 for C⁻ (hole side), +1 for C⁺ (particle side).
 *
 * # Safety
 * `sim` must be a live handle; `re_out` and `im_out` must be writable.
 */
enum DqmeStatus dqme_correlation(const struct DqmeSimulation *sim,
                                 uintptr_t reservoir,
                                 uintptr_t orbital,
                                 int sigma,
                                 double t,
                                 double *re_out,
                                 double *im_out);

/**
 * Integrate the master equation with the fixed-step reference solver over
 * the configured horizon and store the observable trajectory on the
 * handle, replacing any earlier one.  Fails with `DQME_STATUS_PHYSICS`
 * if the vacuum trace drifts past its guard.
 *
 * # Safety
 * `sim` must be a live handle, not aliased by concurrent calls.
 */
enum DqmeStatus dqme_run_reference(struct DqmeSimulation *sim);

/**
 * Train the per-subdomain networks over the configured schedule and store
 * the stitched observable trajectory on the handle, replacing any earlier
 * one.  When a subdomain misses its stage targets the call returns
 * `DQME_STATUS_OPTIMIZATION`; pass a nonzero
 * `override_subdomain_failure` to keep training the remaining subdomains
 * anyway, exactly like the command-line flag of the same name.  On that
 * failure the stored trajectory still covers the trained prefix.
 *
 * # Safety
 * `sim` must be a live handle, not aliased by concurrent calls.
 */
enum DqmeStatus dqme_run_training(struct DqmeSimulation *sim, int override_subdomain_failure);

/**
 * Number of samples in the stored trajectory; 0 when nothing has been
 * computed yet or the handle is NULL.
 *
 * # Safety
 * `sim`, when non-NULL, must be a live handle.
 */
uintptr_t dqme_trajectory_len(const struct DqmeSimulation *sim);

/**
 * Copy one observable column of the stored trajectory into `buf`, which
 * must hold at least [`dqme_trajectory_len`] doubles (`len` says how many
 * it actually holds).
 *
 * # Safety
 * `sim` must be a live handle; `buf` must point to `len` writable doubles;
 * `column` must be a valid `DqmeColumn` value.
 */
enum DqmeStatus dqme_trajectory_column(const struct DqmeSimulation *sim,
                                       enum DqmeColumn column,
                                       double *buf,
                                       uintptr_t len);

/**
 * Largest deviation of the vacuum trace from 1 along the stored
 * trajectory — a cheap quality gauge after either run.
 *
 * # Safety
 * `sim` must be a live handle; `drift_out` must be writable.
 */
enum DqmeStatus dqme_trace_drift(const struct DqmeSimulation *sim, double *drift_out);

/**
 * Finite-difference audit of the training gradient on a fixed closed
 * twelve-entry hierarchy: `draws` independent network draws, worst
 * relative deviation written to `worst_out`.  Healthy builds land near
 * 1e−9; anything past 1e−6 means the adjoint sweep disagrees with the
 * loss.
 *
 * # Safety
 * `worst_out` must be writable.
 */
enum DqmeStatus dqme_gradient_audit(uint64_t draws, double *worst_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DISSIPATON_PINN_H */
