#ifndef DYADIC_H
#define DYADIC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DyadicStatus {
  DYADIC_STATUS_OK = 0,
  DYADIC_STATUS_NULL_POINTER = 1,
  DYADIC_STATUS_INVALID_PARAMETER = 2,
  DYADIC_STATUS_BLOW_UP = 3,
  DYADIC_STATUS_NOT_SUMMABLE = 4,
  DYADIC_STATUS_OUT_OF_RANGE = 5,
  DYADIC_STATUS_INTERNAL = 6,
} DyadicStatus;

typedef enum DyadicBoundary {
  DYADIC_BOUNDARY_ABSORBING = 0,
  DYADIC_BOUNDARY_REFLECTING = 1,
} DyadicBoundary;

typedef enum DyadicScheme {
  DYADIC_SCHEME_ITO = 0,
  DYADIC_SCHEME_STRATONOVICH = 1,
  DYADIC_SCHEME_LINEAR = 2,
} DyadicScheme;

/**
 * Opaque ensemble result.
 */
typedef struct DyadicEnsemble DyadicEnsemble;

/**
 * Opaque model parameters.
 */
typedef struct DyadicParams DyadicParams;

/**
 * Closed forms and series values; `s_divergent` is 1 when `S` diverges.
 */
typedef struct DyadicQuantities {
  double x;
  double r_1;
  double r_inf;
  double explosion_mean;
  double big_r;
  int32_t s_divergent;
  double a;
  double alpha;
} DyadicQuantities;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message of this thread into `buf` as a NUL-terminated
 * string. Returns the full message length without the terminator; the copy is
 * truncated when `len` is too small.
 *
 * # Safety
 * `buf` must be NULL or point to `len` writable bytes.
 */
size_t dyadic_last_error(char *buf, size_t len);

/**
 * Create parameters. `sigma = 0` is accepted for deterministic use only.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum DyadicStatus dyadic_params_new(double lambda,
                                    double theta,
                                    double sigma,
                                    size_t n_shells,
                                    struct DyadicParams **out);

/**
 * # Safety
 * `p` must be NULL or a handle from [`dyadic_params_new`] not yet freed.
 */
void dyadic_params_free(struct DyadicParams *p);

/**
 * # Safety
 * `p` must be a live handle and `out` a valid pointer.
 */
enum DyadicStatus dyadic_quantities(const struct DyadicParams *p, struct DyadicQuantities *out);

/**
 * Probability that the chain started at `k ≥ 1` never visits `k − 1`.
 *
 * # Safety
 * `p` must be a live handle and `out` a valid pointer.
 */
enum DyadicStatus dyadic_escape_probability(const struct DyadicParams *p, size_t k, double *out);

/**
 * Elsässer drift at `(P, M)`, each of length `n_shells`.
 *
 * # Safety
 * All four arrays must hold `n_shells` doubles.
 */
enum DyadicStatus dyadic_drift(const struct DyadicParams *p,
                               const double *pv,
                               const double *mv,
                               double *out_p,
                               double *out_m);

/**
 * Solve the forward energy equation by backward Euler from `e0` up to `t_end`.
 * Writes the final profile to `out_e` and the bottom and top leaks to
 * `out_leaks[0..2]`.
 *
 * # Safety
 * `e0` and `out_e` must hold `n_shells` doubles; `out_leaks` two.
 */
enum DyadicStatus dyadic_forward_solve(const struct DyadicParams *p,
                                       enum DyadicBoundary boundary,
                                       const double *e0,
                                       double dt,
                                       double t_end,
                                       double *out_e,
                                       double *out_leaks);

/**
 * Run an ensemble from the Elsässer state `(P, M)`.
 *
 * # Safety
 * `p` must be a live handle, `pv` and `mv` must hold `n_shells` doubles and
 * `out` must be a valid pointer.
 */
enum DyadicStatus dyadic_ensemble_run(const struct DyadicParams *p,
                                      enum DyadicScheme scheme,
                                      const double *pv,
                                      const double *mv,
                                      double dt,
                                      double t_end,
                                      size_t n_paths,
                                      uint64_t master_seed,
                                      size_t record_stride,
                                      struct DyadicEnsemble **out);

/**
 * # Safety
 * `e` must be NULL or a handle from [`dyadic_ensemble_run`] not yet freed.
 */
void dyadic_ensemble_free(struct DyadicEnsemble *e);

/**
 * Number of recorded times, or 0 for a NULL handle.
 *
 * # Safety
 * `e` must be NULL or a live handle.
 */
size_t dyadic_ensemble_len(const struct DyadicEnsemble *e);

/**
 * Time, mean energy and its standard error at record `k`.
 *
 * # Safety
 * `e` must be a live handle and `out` must hold three doubles.
 */
enum DyadicStatus dyadic_ensemble_energy(const struct DyadicEnsemble *e, size_t k, double *out);

/**
 * Mean of `P_j²` at record `k` (shell `j` is 1-based) and its standard error.
 *
 * # Safety
 * `e` must be a live handle and `out` must hold two doubles.
 */
enum DyadicStatus dyadic_ensemble_mean_p2(const struct DyadicEnsemble *e,
                                          size_t k,
                                          size_t shell,
                                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DYADIC_H */
