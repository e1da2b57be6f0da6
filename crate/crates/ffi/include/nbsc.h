#ifndef NBSC_H
#define NBSC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum {
  NBSC_STATUS_OK = 0,
  NBSC_STATUS_INVALID_ARGUMENT = 1,
  NBSC_STATUS_UNSUPPORTED_SCALE = 2,
  NBSC_STATUS_CONTRACT_VIOLATION = 3,
  NBSC_STATUS_CONSTRUCTION_FAILED = 4,
  NBSC_STATUS_UNDEFINED_BOUND = 5,
  NBSC_STATUS_TIMEOUT = 6,
  NBSC_STATUS_NULL_POINTER = 7,
  NBSC_STATUS_BUFFER_TOO_SMALL = 8,
  NBSC_STATUS_INTERNAL = 9,
} NbscStatus;

/**
 * Opaque `(dv, dc, m)` ensemble handle.
 */
typedef struct NbscEnsemble NbscEnsemble;

/**
 * DE tolerances, mirroring the defaults of the Rust API.
 */
typedef struct {
  size_t max_iters;
  double fp_tol;
  double zero_tol;
  double bisect_tol;
} NbscConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Default tolerances.
 */
NbscConfig nbsc_config_default(void);

/**
 * Creates an ensemble handle. `*out` receives the handle on success.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one pointer.
 */
NbscStatus nbsc_ensemble_new(size_t dv, size_t dc, size_t m, NbscEnsemble **out);

/**
 * Releases a handle. Passing null is a no-op.
 *
 * # Safety
 * `ens` must be null or a handle from [`nbsc_ensemble_new`] that has not
 * been freed.
 */
void nbsc_ensemble_free(NbscEnsemble *ens);

/**
 * Field extension degree `m` of the handle, or 0 for null.
 *
 * # Safety
 * `ens` must be null or a live handle.
 */
size_t nbsc_ensemble_m(const NbscEnsemble *ens);

/**
 * Runs uncoupled DE from the channel initialization. `tail` receives the
 * `m` CCDF entries of the final state; `cfg` may be null for defaults.
 *
 * # Safety
 * `ens` must be a live handle, `tail` must point to `tail_len` writable
 * doubles, and `iterations` / `decoded` must be valid or null.
 */
NbscStatus nbsc_de_fixed_point(NbscEnsemble *ens,
                               double eps,
                               const NbscConfig *cfg,
                               double *tail,
                               size_t tail_len,
                               size_t *iterations,
                               bool *decoded);

/**
 * Uncoupled BP threshold.
 *
 * # Safety
 * `ens` must be a live handle; `out` must be writable; `cfg` may be null.
 */
NbscStatus nbsc_bp_threshold(NbscEnsemble *ens, const NbscConfig *cfg, double *out);

/**
 * Coupled BP threshold for chain length `l` and coupling width `w`. A
 * positive `timeout_secs` bounds the run and yields `Timeout` when hit.
 *
 * # Safety
 * `ens` must be a live handle; `out` must be writable; `cfg` may be null.
 */
NbscStatus nbsc_bp_threshold_coupled(NbscEnsemble *ens,
                                     size_t l,
                                     size_t w,
                                     const NbscConfig *cfg,
                                     double timeout_secs,
                                     double *out);

/**
 * Potential threshold and the uncoupled BP threshold it is bracketed by.
 * Builds and caches the matrix `D` on first use.
 *
 * # Safety
 * `ens` must be a live handle; both outputs must be writable; `cfg` may be
 * null.
 */
NbscStatus nbsc_potential_threshold(NbscEnsemble *ens,
                                    const NbscConfig *cfg,
                                    double *eps_star,
                                    double *eps_bp);

/**
 * Potential `U(x; eps)` at a tail vector of length `m`.
 *
 * # Safety
 * `ens` must be a live handle; `x` must point to `len` readable doubles;
 * `out` must be writable.
 */
NbscStatus nbsc_potential(NbscEnsemble *ens, const double *x, size_t len, double eps, double *out);

/**
 * Copies the `m`-by-`m` matrix `D` in row-major order.
 *
 * # Safety
 * `ens` must be a live handle; `out` must point to `len` writable doubles.
 */
NbscStatus nbsc_potential_d(NbscEnsemble *ens, double *out, size_t len);

/**
 * Copies the calling thread's last error message, NUL-terminated and
 * truncated to `len` bytes. Returns the full message length in bytes
 * (excluding the terminator).
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t nbsc_last_error(char *buf, size_t len);

/**
 * Static, NUL-terminated name of a status code.
 */
const char *nbsc_status_name(NbscStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NBSC_H */
