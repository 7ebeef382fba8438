#ifndef COPULA_PROC_H
#define COPULA_PROC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum CpStatus {
  CP_STATUS_OK = 0,
  CP_STATUS_NULL_POINTER = 1,
  /**
   * Lengths or indices do not match the object.
   */
  CP_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Argument outside the mathematical domain.
   */
  CP_STATUS_DOMAIN = 3,
  CP_STATUS_INVALID_PARAMETER = 4,
  /**
   * Any other library error.
   */
  CP_STATUS_FAILURE = 5,
  CP_STATUS_PANIC = 6,
} CpStatus;

/**
 * Copula families; the parameter is ignored for `Independence`.
 */
typedef enum CpFamily {
  CP_FAMILY_INDEPENDENCE = 0,
  CP_FAMILY_CLAYTON = 1,
  CP_FAMILY_GUMBEL = 2,
  CP_FAMILY_FRANK = 3,
  CP_FAMILY_GAUSSIAN = 4,
  CP_FAMILY_FGM = 5,
} CpFamily;

/**
 * Opaque copula handle.
 */
typedef struct CpCopula CpCopula;

/**
 * Opaque lattice function handle.
 */
typedef struct CpGridFunction CpGridFunction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *cp_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cp_version(void);

/**
 * Creates a copula of dimension `d`.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum CpStatus cp_copula_new(enum CpFamily family, double param, size_t d, struct CpCopula **out);

/**
 * # Safety
 * `c` must be null or a handle from [`cp_copula_new`] not yet freed.
 */
void cp_copula_free(struct CpCopula *c);

/**
 * `C(u)` for a point of `len == d` coordinates in `[0,1]`.
 *
 * # Safety
 * `u` valid for `len` reads, `out` for one write.
 */
enum CpStatus cp_copula_cdf(const struct CpCopula *c, const double *u, size_t len, double *out);

/**
 * `∂C/∂u_j` at `u`; `*degenerate` (if non-null) is set when the partial is
 * taken on the boundary where it is not unique.
 *
 * # Safety
 * `u` valid for `len` reads, `out` for one write, `degenerate` null or valid.
 */
enum CpStatus cp_copula_partial(const struct CpCopula *c,
                                size_t j,
                                const double *u,
                                size_t len,
                                double *out,
                                bool *degenerate);

/**
 * Draws `n` points row-major into `out`, which must hold `n * d` values.
 *
 * # Safety
 * `out` valid for `out_len` writes.
 */
enum CpStatus cp_copula_sample(const struct CpCopula *c,
                               size_t n,
                               uint64_t seed,
                               double *out,
                               size_t out_len);

/**
 * `C` at every node of the `m^d` lattice.
 *
 * # Safety
 * `out` valid for one write.
 */
enum CpStatus cp_copula_on_grid(const struct CpCopula *c, size_t m, struct CpGridFunction **out);

/**
 * Empirical copula of an `n x d` row-major sample on the `m^d` lattice.
 *
 * # Safety
 * `data` valid for `n * d` reads, `out` for one write.
 */
enum CpStatus cp_empirical_copula(const double *data,
                                  size_t n,
                                  size_t d,
                                  size_t m,
                                  struct CpGridFunction **out);

/**
 * A lattice function from `m^d` node values in row-major order.
 *
 * # Safety
 * `values` valid for `len` reads, `out` for one write.
 */
enum CpStatus cp_grid_function_from_values(size_t d,
                                           size_t m,
                                           const double *values,
                                           size_t len,
                                           struct CpGridFunction **out);

/**
 * Number of nodes, or 0 for a null handle.
 *
 * # Safety
 * `g` null or a live handle.
 */
size_t cp_grid_function_len(const struct CpGridFunction *g);

/**
 * Copies the node values; `len` must equal [`cp_grid_function_len`].
 *
 * # Safety
 * `out` valid for `len` writes.
 */
enum CpStatus cp_grid_function_values(const struct CpGridFunction *g, double *out, size_t len);

/**
 * Multilinear interpolation at `u`, exact at nodes.
 *
 * # Safety
 * `u` valid for `len` reads, `out` for one write.
 */
enum CpStatus cp_grid_function_eval(const struct CpGridFunction *g,
                                    const double *u,
                                    size_t len,
                                    double *out);

/**
 * # Safety
 * `g` null or a live handle.
 */
void cp_grid_function_free(struct CpGridFunction *g);

/**
 * `Φ'_C(h)(u) = h(u) - Σ_j C^{(j)}(u) h(u^{(j)})` on the lattice of `h`.
 *
 * # Safety
 * Handles live, `out` valid for one write.
 */
enum CpStatus cp_hadamard_derivative(const struct CpCopula *c,
                                     const struct CpGridFunction *h,
                                     struct CpGridFunction **out);

/**
 * `sup |a - b|` over all nodes.
 *
 * # Safety
 * Handles live, `out` valid for one write.
 */
enum CpStatus cp_sup_diff(const struct CpGridFunction *a,
                          const struct CpGridFunction *b,
                          double *out);

/**
 * Skew-normal cdf `Ψ(z; γ)`.
 */
double cp_skew_normal_cdf(double z, double gamma);

/**
 * Skew-normal quantile; [`CpStatus::Domain`] unless `0 < u < 1`.
 *
 * # Safety
 * `out` valid for one write.
 */
enum CpStatus cp_skew_normal_quantile(double u, double gamma, double *out);

/**
 * Least-squares slope of `log value` on `log n`. `*fitted` is false when a
 * value is not positive, and `*out` is then NaN.
 *
 * # Safety
 * `ns` and `values` valid for `len` reads; `out` and `fitted` for one write.
 */
enum CpStatus cp_rate_slope(const double *ns,
                            const double *values,
                            size_t len,
                            double *out,
                            bool *fitted);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COPULA_PROC_H */
