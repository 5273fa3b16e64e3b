#ifndef VOLFORMS_H
#define VOLFORMS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every call.
 */
typedef enum VfStatus {
  VF_STATUS_OK = 0,
  VF_STATUS_NULL_POINTER = 1,
  VF_STATUS_INVALID_ARGUMENT = 2,
  VF_STATUS_PARSE = 3,
  /**
   * Not symmetric, not positive definite, singular, ...
   */
  VF_STATUS_MATRIX = 4,
  /**
   * Quadrature, Newton or sampling failed to produce a finite answer.
   */
  VF_STATUS_NUMERICAL = 5,
  VF_STATUS_GEOMETRY = 6,
  VF_STATUS_UNSUPPORTED = 7,
  VF_STATUS_PANIC = 8,
} VfStatus;

/**
 * The Gaussian parameter `s`.
 */
typedef enum VfParam {
  VF_PARAM_ONE = 0,
  VF_PARAM_I = 1,
} VfParam;

typedef enum VfBackend {
  VF_BACKEND_ANALYTIC = 0,
  VF_BACKEND_FINITE_DIFFERENCE = 1,
} VfBackend;

/**
 * Opaque polynomial in the Gaussian coordinates `xi_1..xi_K`.
 */
typedef struct VfChaosPoly VfChaosPoly;

/**
 * Opaque finite Gaussian `(Q, s)`.
 */
typedef struct VfGaussianSpec VfGaussianSpec;

/**
 * Opaque verification report.
 */
typedef struct VfReport VfReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *vf_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into the library from the same thread.
 */
const char *vf_last_error_message(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, freed once.
 */
void vf_string_free(char *s);

/**
 * Samples Brownian path number `draw` of stream `(seed, stream)` on an
 * `n`-step grid into `out`, which must hold `n + 1` values.
 *
 * # Safety
 * `out` must point to `out_len` writable doubles.
 */
enum VfStatus vf_sample_brownian(size_t n,
                                 uint64_t seed,
                                 uint64_t stream,
                                 uint64_t draw,
                                 double *out,
                                 size_t out_len);

/**
 * Monte Carlo check of the characteristic functional of the dual measure
 * with atoms `(times[i], weights[i])`.
 *
 * # Safety
 * `times` and `weights` must hold `n_atoms` doubles; `out` must be writable.
 */
enum VfStatus vf_verify_characteristic_functional(const double *times,
                                                  const double *weights,
                                                  size_t n_atoms,
                                                  size_t grid_n,
                                                  uint64_t n_samples,
                                                  uint64_t seed,
                                                  struct VfReport **out);

/**
 * Builds the Gaussian `(Q, s)` from a row-major `dim x dim` matrix.
 *
 * # Safety
 * `q` must hold `dim * dim` doubles; `out` must be writable.
 */
enum VfStatus vf_gaussian_spec_new(const double *q,
                                   size_t dim,
                                   enum VfParam s,
                                   struct VfGaussianSpec **out);

/**
 * # Safety
 * `spec` must be NULL or a handle from this library, freed once.
 */
void vf_gaussian_spec_free(struct VfGaussianSpec *spec);

/**
 * The dual Gaussian `(W, s)`, `W = Q^{-1}`, as a new handle.
 *
 * # Safety
 * `spec` must be a live handle; `out` must be writable.
 */
enum VfStatus vf_gaussian_dual(const struct VfGaussianSpec *spec, struct VfGaussianSpec **out);

/**
 * Normalization `nu` of the volume element, as real and imaginary parts.
 *
 * # Safety
 * `spec` must be a live handle; `re` and `im` must be writable.
 */
enum VfStatus vf_gaussian_normalization(const struct VfGaussianSpec *spec, double *re, double *im);

/**
 * Fourier transform of the volume element at `xprime` by the closed form
 * (`quad_tol <= 0`) or by quadrature to `quad_tol`.
 *
 * # Safety
 * `spec` must be a live handle; `xprime` must hold `len` doubles; `re` and
 * `im` must be writable.
 */
enum VfStatus vf_gaussian_fourier(const struct VfGaussianSpec *spec,
                                  const double *xprime,
                                  size_t len,
                                  double quad_tol,
                                  double *re,
                                  double *im);

/**
 * Right-hand side `exp(-pi s x'^T W x')` of the Fourier identity.
 *
 * # Safety
 * As [`vf_gaussian_fourier`].
 */
enum VfStatus vf_gaussian_fourier_rhs(const struct VfGaussianSpec *spec,
                                      const double *xprime,
                                      size_t len,
                                      double *re,
                                      double *im);

/**
 * Parses a polynomial in `xi1..xiK` with `K = n_modes`.
 *
 * # Safety
 * `src` must be a NUL-terminated string; `out` must be writable.
 */
enum VfStatus vf_chaos_poly_parse(const char *src, size_t n_modes, struct VfChaosPoly **out);

/**
 * # Safety
 * `p` must be NULL or a handle from this library, freed once.
 */
void vf_chaos_poly_free(struct VfChaosPoly *p);

/**
 * `a^+(phi) p` as a new handle; `phi` holds the `len` mode coefficients.
 *
 * # Safety
 * `phi` must hold `len` doubles; `p` must be a live handle; `out` writable.
 */
enum VfStatus vf_chaos_creation(const double *phi,
                                size_t len,
                                const struct VfChaosPoly *p,
                                struct VfChaosPoly **out);

/**
 * `a(phi) p` as a new handle.
 *
 * # Safety
 * As [`vf_chaos_creation`].
 */
enum VfStatus vf_chaos_annihilation(const double *phi,
                                    size_t len,
                                    const struct VfChaosPoly *p,
                                    struct VfChaosPoly **out);

/**
 * Exact `E[p(xi)]` for i.i.d. standard normal `xi`.
 *
 * # Safety
 * `p` must be a live handle; `out` must be writable.
 */
enum VfStatus vf_chaos_expectation(const struct VfChaosPoly *p, double *out);

/**
 * Coefficient of the monomial with the given exponents (`len` = K).
 *
 * # Safety
 * `p` must be a live handle; `exponents` must hold `len` values; `out` writable.
 */
enum VfStatus vf_chaos_coeff(const struct VfChaosPoly *p,
                             const uint32_t *exponents,
                             size_t len,
                             double *out);

/**
 * Text form of the polynomial; free with [`vf_string_free`].
 *
 * # Safety
 * `p` must be a live handle; `out` must be writable.
 */
enum VfStatus vf_chaos_poly_to_string(const struct VfChaosPoly *p, char **out);

/**
 * Exact commutator checks on `n_cases` random cases.
 *
 * # Safety
 * `out` must be writable.
 */
enum VfStatus vf_verify_commutators(size_t n_modes,
                                    uint32_t degree_cap,
                                    size_t n_cases,
                                    uint64_t seed,
                                    struct VfReport **out);

/**
 * Pfaffian of a row-major antisymmetric `n x n` matrix (`n` even, `<= 8`).
 *
 * # Safety
 * `a` must hold `n * n` doubles; `out` must be writable.
 */
enum VfStatus vf_pfaffian(const double *a, size_t n, double *out);

/**
 * Divergence identity for a random polynomial field of the given degree on
 * a built-in manifold (`flat2`, `sphere2`, ...).
 *
 * # Safety
 * `manifold` must be a NUL-terminated string; `out` must be writable.
 */
enum VfStatus vf_verify_divergence(const char *manifold,
                                   uint32_t degree,
                                   size_t n_points,
                                   uint64_t seed,
                                   enum VfBackend backend,
                                   struct VfReport **out);

/**
 * # Safety
 * `r` must be NULL or a handle from this library, freed once.
 */
void vf_report_free(struct VfReport *r);

/**
 * Whether every check passed (1) or not (0).
 *
 * # Safety
 * `r` must be a live handle; `out` must be writable.
 */
enum VfStatus vf_report_pass(const struct VfReport *r, int32_t *out);

/**
 * Headline `|lhs - rhs|` of the report.
 *
 * # Safety
 * `r` must be a live handle; `out` must be writable.
 */
enum VfStatus vf_report_discrepancy(const struct VfReport *r, double *out);

/**
 * The report as JSON; free with [`vf_string_free`].
 *
 * # Safety
 * `r` must be a live handle; `out` must be writable.
 */
enum VfStatus vf_report_to_json(const struct VfReport *r, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOLFORMS_H */
