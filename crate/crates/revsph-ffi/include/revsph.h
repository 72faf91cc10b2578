#ifndef REVSPH_H
#define REVSPH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Arithmetic mode for the state vectors.
 */
typedef enum RevsphArithmetic {
  /**
   * Q31.32 fixed point: bit-exactly reversible.
   */
  RevsphArithmetic_FixedPoint = 0,
  /**
   * IEEE double precision.
   */
  RevsphArithmetic_FloatingPoint = 1,
} RevsphArithmetic;

/**
 * Particle arrangement for the Gresho scenario.
 */
typedef enum RevsphArrangement {
  RevsphArrangement_Square = 0,
  RevsphArrangement_Hexagonal = 1,
  RevsphArrangement_Vogel = 2,
} RevsphArrangement;

/**
 * Status code returned by every fallible call.
 */
typedef enum RevsphStatus {
  /**
   * Success.
   */
  RevsphStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  RevsphStatus_NullPointer = 1,
  /**
   * An argument was out of its documented domain.
   */
  RevsphStatus_InvalidArgument = 2,
  /**
   * The solver reported an error; see `revsph_last_error_message`.
   */
  RevsphStatus_RuntimeError = 3,
  /**
   * The caller-provided buffer is too small.
   */
  RevsphStatus_BufferTooSmall = 4,
} RevsphStatus;

/**
 * Opaque simulation handle.
 */
typedef struct RevsphSim RevsphSim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Create a dam-break simulation at spacing `dr` (meters).
 *
 * On success writes a handle to `*out`; free it with `revsph_sim_destroy`.
 */
enum RevsphStatus revsph_sim_create_dam_break(double dr,
                                              enum RevsphArithmetic arithmetic,
                                              struct RevsphSim **out);

/**
 * Create a Gresho vortex simulation at spacing `dr` (dimensionless).
 */
enum RevsphStatus revsph_sim_create_gresho(double dr,
                                           enum RevsphArrangement arrangement,
                                           enum RevsphArithmetic arithmetic,
                                           struct RevsphSim **out);

/**
 * Advance the simulation by `n_steps` time steps.
 */
enum RevsphStatus revsph_sim_step(struct RevsphSim *sim, uint64_t n_steps);

/**
 * Negate all velocities exactly and reset the step counter.
 */
enum RevsphStatus revsph_sim_reverse(struct RevsphSim *sim);

/**
 * Total number of particles (fluid and wall). Returns 0 for a null handle.
 */
uint64_t revsph_sim_particle_count(const struct RevsphSim *sim);

/**
 * Current simulation time (seconds since the last reversal).
 */
enum RevsphStatus revsph_sim_time(const struct RevsphSim *sim, double *out);

/**
 * Time step in use.
 */
enum RevsphStatus revsph_sim_dt(const struct RevsphSim *sim, double *out);

/**
 * Copy particle positions into `buf` as interleaved x,y pairs.
 * `len` is the buffer capacity in doubles (needs 2 × particle count).
 */
enum RevsphStatus revsph_sim_get_positions(const struct RevsphSim *sim, double *buf, uintptr_t len);

/**
 * Copy particle velocities into `buf` as interleaved x,y pairs.
 */
enum RevsphStatus revsph_sim_get_velocities(const struct RevsphSim *sim,
                                            double *buf,
                                            uintptr_t len);

/**
 * Total energy (kinetic + internal + gravitational + wall) of the state.
 */
enum RevsphStatus revsph_sim_total_energy(struct RevsphSim *sim, double *out);

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len` bytes). Returns the full message length in bytes.
 */
uintptr_t revsph_last_error_message(char *buf, uintptr_t len);

/**
 * Destroy a simulation handle. Null is a no-op.
 */
void revsph_sim_destroy(struct RevsphSim *sim);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* REVSPH_H */
