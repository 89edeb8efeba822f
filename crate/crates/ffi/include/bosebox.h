#ifndef BOSEBOX_H
#define BOSEBOX_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Zero is success.
 */
typedef enum BbStatus {
  BB_STATUS_OK = 0,
  BB_STATUS_NULL_POINTER = 1,
  BB_STATUS_INVALID_GEOMETRY = 2,
  BB_STATUS_DOMAIN = 3,
  BB_STATUS_CUTOFF_TOO_LARGE = 4,
  BB_STATUS_CUTOFF_INSUFFICIENT = 5,
  BB_STATUS_NO_CONVERGENCE = 6,
  BB_STATUS_POLE_PROXIMITY = 7,
  BB_STATUS_DEGENERATE_MODE = 8,
  BB_STATUS_OUT_OF_RANGE = 9,
  BB_STATUS_PANIC = 10,
} BbStatus;

/**
 * Canonical partition-function table handle.
 */
typedef struct BbCanonical BbCanonical;

/**
 * Box geometry handle.
 */
typedef struct BbGeometry BbGeometry;

/**
 * Sorted one-particle spectrum handle.
 */
typedef struct BbSpectrum BbSpectrum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Length in bytes of the last error message on this thread, without the
 * terminating NUL.
 */
size_t bb_last_error_length(void);

/**
 * Copies the last error message (NUL-terminated, truncated to fit) into
 * `buf`. Returns the number of bytes written, excluding the NUL.
 *
 * # Safety
 * `buf` must point to `len` writable bytes, or be null with `len == 0`.
 */
size_t bb_last_error_message(char *buf, size_t len);

/**
 * # Safety
 * `alphas` points to three doubles; `out` is writable.
 */
enum BbStatus bb_geometry_new(const double *alphas, double volume, struct BbGeometry **out);

/**
 * # Safety
 * `g` is null or a live handle from [`bb_geometry_new`].
 */
void bb_geometry_free(struct BbGeometry *g);

/**
 * # Safety
 * Valid handle and writable `out`.
 */
enum BbStatus bb_geometry_ground_energy(const struct BbGeometry *g, double *out);

/**
 * Energy of mode (n1, n2, n3), all ≥ 1.
 *
 * # Safety
 * Valid handle and writable `out`.
 */
enum BbStatus bb_eigenvalue(const struct BbGeometry *g,
                            uint32_t n1,
                            uint32_t n2,
                            uint32_t n3,
                            double *out);

/**
 * Finite-volume integrated density of states at gap `eta`.
 *
 * # Safety
 * Valid handle and writable `out`.
 */
enum BbStatus bb_ids(const struct BbGeometry *g, double eta, double *out);

/**
 * # Safety
 * `out` is writable.
 */
enum BbStatus bb_ids_limit(double eta, double *out);

/**
 * Spectrum truncated so the neglected Boltzmann weight stays below `tol`.
 *
 * # Safety
 * Valid handle and writable `out`.
 */
enum BbStatus bb_spectrum_for_tolerance(const struct BbGeometry *g,
                                        double beta,
                                        double tol,
                                        struct BbSpectrum **out);

/**
 * Every mode with energy at most `e_max` (possibly none).
 *
 * # Safety
 * Valid handle and writable `out`.
 */
enum BbStatus bb_spectrum_below(const struct BbGeometry *g, double e_max, struct BbSpectrum **out);

/**
 * # Safety
 * `s` is null or a live spectrum handle.
 */
void bb_spectrum_free(struct BbSpectrum *s);

/**
 * # Safety
 * Valid handle and writable `out`.
 */
enum BbStatus bb_spectrum_len(const struct BbSpectrum *s, size_t *out);

/**
 * Energy of the `i`-th mode in ascending order.
 *
 * # Safety
 * Valid handle and writable `out`.
 */
enum BbStatus bb_spectrum_energy(const struct BbSpectrum *s, size_t i, double *out);

/**
 * # Safety
 * `out` is writable.
 */
enum BbStatus bb_critical_density(double beta, double *out);

/**
 * Solves for the shifted chemical potential μ̄ = μ − E₁ at density `rho`.
 *
 * # Safety
 * Valid handle and writable `mu_bar`.
 */
enum BbStatus bb_solve_mu(const struct BbSpectrum *s,
                          double rho,
                          double beta,
                          double tol,
                          size_t max_iter,
                          double *mu_bar);

/**
 * # Safety
 * Valid handle and writable `out`.
 */
enum BbStatus bb_gc_density(const struct BbSpectrum *s, double mu_bar, double beta, double *out);

/**
 * Grand-canonical mean occupation of the `k`-th mode.
 *
 * # Safety
 * Valid handle and writable `out`.
 */
enum BbStatus bb_gc_mean_occupation(const struct BbSpectrum *s,
                                    double mu_bar,
                                    size_t k,
                                    double beta,
                                    double *out);

/**
 * Amplitude A of the borderline regime.
 *
 * # Safety
 * `out` is writable.
 */
enum BbStatus bb_solve_a(double rho, double beta, double *out);

/**
 * Canonical table up to `n_max` particles. The spectrum handle stays
 * owned by the caller.
 *
 * # Safety
 * Valid handle and writable `out`.
 */
enum BbStatus bb_canonical_new(const struct BbSpectrum *s,
                               double beta,
                               size_t n_max,
                               struct BbCanonical **out);

/**
 * # Safety
 * `c` is null or a live canonical handle.
 */
void bb_canonical_free(struct BbCanonical *c);

/**
 * ln Z_n.
 *
 * # Safety
 * Valid handle and writable `out`.
 */
enum BbStatus bb_canonical_log_z(const struct BbCanonical *c, size_t n, double *out);

/**
 * Canonical mean occupation of mode `k` with `n` particles.
 *
 * # Safety
 * Valid handle and writable `out`.
 */
enum BbStatus bb_canonical_mean_occupation(const struct BbCanonical *c,
                                           size_t k,
                                           size_t n,
                                           double *out);

/**
 * E[exp(−λ N_k)] with `n` particles.
 *
 * # Safety
 * Valid handle and writable `out`.
 */
enum BbStatus bb_canonical_laplace(const struct BbCanonical *c,
                                   size_t k,
                                   size_t n,
                                   double lambda,
                                   double *out);

/**
 * Limiting scaled occupation of ladder mode (n,1,1) in the borderline
 * regime, with `m_max` gap coefficients.
 *
 * # Safety
 * `out` is writable; `truncation` may be null.
 */
enum BbStatus bb_typeii_ladder_occupation(size_t n,
                                          double rho,
                                          double beta,
                                          size_t m_max,
                                          double *out,
                                          double *truncation);

/**
 * g_d(λ) for d in 1..=3.
 *
 * # Safety
 * `out` is writable.
 */
enum BbStatus bb_g_function(uint32_t d, double lambda, double beta, double *out);

/**
 * Limiting fluctuation transform. `case`: 0 one longest axis, 1 two equal
 * longest axes, 2 cube.
 *
 * # Safety
 * `out` is writable.
 */
enum BbStatus bb_fluctuation_law(uint32_t case_, double lambda, double beta, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BOSEBOX_H */
