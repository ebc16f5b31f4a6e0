#ifndef WETTING_H
#define WETTING_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WettingStatus {
  WETTING_STATUS_OK = 0,
  WETTING_STATUS_INVALID_ARGUMENT = 1,
  WETTING_STATUS_INVARIANT = 2,
  WETTING_STATUS_USAGE = 3,
  WETTING_STATUS_NUMERICAL = 4,
  WETTING_STATUS_FIT = 5,
  WETTING_STATUS_TOO_LARGE = 6,
  WETTING_STATUS_NULL_POINTER = 7,
  WETTING_STATUS_PANIC = 8,
} WettingStatus;

typedef enum WettingInteraction {
  WETTING_INTERACTION_SOS = 0,
  WETTING_INTERACTION_GAUSSIAN = 1,
} WettingInteraction;

typedef enum WettingPinning {
  WETTING_PINNING_NONE = 0,
  WETTING_PINNING_SQUARE_WELL = 1,
  WETTING_PINNING_DELTA = 2,
} WettingPinning;

typedef enum WettingKernel {
  WETTING_KERNEL_HEAT_BATH = 0,
  WETTING_KERNEL_METROPOLIS = 1,
} WettingKernel;

typedef struct WettingChain WettingChain;

typedef struct WettingLattice WettingLattice;

/**
 * Model and chain parameters. Fill with [`wetting_params_default`] first.
 */
typedef struct WettingParams {
  uint32_t dim;
  uint32_t side;
  enum WettingInteraction interaction;
  enum WettingPinning pinning;
  /**
   * Square-well width and depth; ignored unless `pinning` is a square well.
   */
  double a;
  double b;
  /**
   * Delta-pinning weight; ignored unless `pinning` is delta.
   */
  double epsilon;
  enum WettingKernel kernel;
  uint64_t sweeps;
  uint64_t burn_in;
  uint64_t thinning;
  uint64_t seed;
  double step_width;
} WettingParams;

/**
 * Estimates from one chain. Standard errors are NaN when the run is too
 * short for batch means; `accept_rate` is NaN for heat bath.
 */
typedef struct WettingSummary {
  double rho;
  double rho_se;
  double nu_mean;
  double mean_height;
  double mean_height_se;
  double center_height;
  double max_height;
  double accept_rate;
  uint64_t snapshots;
} WettingSummary;

typedef struct WettingExact {
  double z;
  double log_z;
  double rho;
  double error_estimate;
} WettingExact;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *wetting_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *wetting_version(void);

/**
 * Defaults: d = 1, N = 1, SOS, no pinning, heat bath, 10000 sweeps with
 * 1000 burn-in, thinning 1, seed 0, step width 1.
 *
 * # Safety
 * `out` must be NULL or point to writable memory for one `WettingParams`.
 */
enum WettingStatus wetting_params_default(struct WettingParams *out);

/**
 * # Safety
 * `out` must be NULL or point to writable storage for one pointer.
 */
enum WettingStatus wetting_lattice_new(uint32_t dim, uint32_t side, struct WettingLattice **out);

/**
 * # Safety
 * `lat` must be NULL or a handle from [`wetting_lattice_new`] not yet freed.
 */
void wetting_lattice_free(struct WettingLattice *lat);

/**
 * Number of sites, or 0 for a NULL handle.
 *
 * # Safety
 * `lat` must be NULL or a live lattice handle.
 */
uint64_t wetting_lattice_sites(const struct WettingLattice *lat);

/**
 * Number of sites with at least one bond leaving the box, or 0 for NULL.
 *
 * # Safety
 * `lat` must be NULL or a live lattice handle.
 */
uint64_t wetting_lattice_boundary_len(const struct WettingLattice *lat);

/**
 * Writes the snake path (a Hamiltonian path through the box starting on the
 * boundary) into `buf`, which must hold `wetting_lattice_sites` entries.
 *
 * # Safety
 * `lat` must be a live handle and `buf` must point to `len` writable `u64`s.
 */
enum WettingStatus wetting_lattice_snake_path(const struct WettingLattice *lat,
                                              uint64_t *buf,
                                              uint64_t len);

/**
 * # Safety
 * `params` must point to a valid `WettingParams`; `out` to storage for one pointer.
 */
enum WettingStatus wetting_chain_new(const struct WettingParams *params, struct WettingChain **out);

/**
 * # Safety
 * `chain` must be NULL or a handle from [`wetting_chain_new`] not yet freed.
 */
void wetting_chain_free(struct WettingChain *chain);

/**
 * Performs `sweeps` full sweeps.
 *
 * # Safety
 * `chain` must be a live chain handle not used concurrently.
 */
enum WettingStatus wetting_chain_sweep(struct WettingChain *chain, uint64_t sweeps);

/**
 * Copies the current heights into `buf` (row-major site order).
 *
 * # Safety
 * `chain` must be a live handle and `buf` must point to `len` writable doubles.
 */
enum WettingStatus wetting_chain_heights(const struct WettingChain *chain,
                                         double *buf,
                                         uint64_t len);

/**
 * Current number of pinned sites, or 0 for NULL.
 *
 * # Safety
 * `chain` must be NULL or a live chain handle.
 */
uint64_t wetting_chain_pinned_count(const struct WettingChain *chain);

/**
 * Runs a full chain (burn-in plus measurement) and summarises it.
 *
 * # Safety
 * `params` must point to a valid `WettingParams`; `out` to a writable `WettingSummary`.
 */
enum WettingStatus wetting_run(const struct WettingParams *params, struct WettingSummary *out);

/**
 * Exact partition function and pinned density on a tiny box. Uses the
 * `dim`, `side`, `interaction` and pinning fields of `params`.
 *
 * # Safety
 * `params` must point to a valid `WettingParams`; `out` to a writable `WettingExact`.
 */
enum WettingStatus wetting_exact(const struct WettingParams *params, struct WettingExact *out);

/**
 * Runs every map-inequality check; writes the total violation count and the
 * smallest slack seen.
 *
 * # Safety
 * `violations` and `min_slack` must be NULL or point to writable storage.
 */
enum WettingStatus wetting_verify(uint64_t random_configs,
                                  uint64_t adversarial_configs,
                                  uint64_t seed,
                                  uint64_t *violations,
                                  double *min_slack);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WETTING_H */
