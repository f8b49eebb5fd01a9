#ifndef DIVISIO_H
#define DIVISIO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DivisioStatus {
  DIVISIO_STATUS_OK = 0,
  DIVISIO_STATUS_NULL_POINTER = 1,
  DIVISIO_STATUS_DIMENSION_MISMATCH = 2,
  DIVISIO_STATUS_NOT_HERMITIAN = 3,
  DIVISIO_STATUS_NONSEPARABLE = 4,
  DIVISIO_STATUS_EQUIVALENCE_VIOLATION = 5,
  DIVISIO_STATUS_INVALID_INPUT = 6,
  DIVISIO_STATUS_BUFFER_TOO_SMALL = 7,
  DIVISIO_STATUS_INTERNAL = 8,
  DIVISIO_STATUS_PANIC = 9,
} DivisioStatus;

/**
 * A Hermitian operator on a two-factor space.
 */
typedef struct DivisioOperator DivisioOperator;

/**
 * An operator Schmidt decomposition.
 */
typedef struct DivisioSchmidt DivisioSchmidt;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds an operator of order `dim_a * dim_b` from row-major parts.
 * `im` may be null for a real matrix. Near-Hermitian input is symmetrized.
 *
 * # Safety
 * `re` (and `im` when non-null) must point to `(dim_a*dim_b)^2` doubles;
 * `out` must be a valid pointer.
 */
enum DivisioStatus divisio_operator_new(size_t dim_a,
                                        size_t dim_b,
                                        const double *re,
                                        const double *im,
                                        struct DivisioOperator **out);

/**
 * # Safety
 * `op` must be null or come from [`divisio_operator_new`], freed once.
 */
void divisio_operator_free(struct DivisioOperator *op);

/**
 * Order of the operator, 0 for a null handle.
 *
 * # Safety
 * `op` must be null or a live handle.
 */
size_t divisio_operator_dim(const struct DivisioOperator *op);

/**
 * # Safety
 * `op` must be a live handle and `out` a valid pointer.
 */
enum DivisioStatus divisio_operator_schmidt(const struct DivisioOperator *op,
                                            struct DivisioSchmidt **out);

/**
 * # Safety
 * `s` must be null or a live handle.
 */
size_t divisio_schmidt_rank(const struct DivisioSchmidt *s);

/**
 * Copies the coefficients, in decreasing order, into `out[0..rank]`.
 *
 * # Safety
 * `s` must be a live handle; `out` must hold `len` doubles.
 */
enum DivisioStatus divisio_schmidt_coefficients(const struct DivisioSchmidt *s,
                                                double *out,
                                                size_t len);

/**
 * Copies factor `index` of side `side` (0 for the first factor, 1 for the
 * second) as a row-major matrix. `im` may be null.
 *
 * # Safety
 * `s` must be a live handle; `re` and `im` must hold `len` doubles.
 */
enum DivisioStatus divisio_schmidt_factor(const struct DivisioSchmidt *s,
                                          uint32_t side,
                                          size_t index,
                                          double *re,
                                          double *im,
                                          size_t len);

/**
 * # Safety
 * `s` must be null or come from [`divisio_operator_schmidt`], freed once.
 */
void divisio_schmidt_free(struct DivisioSchmidt *s);

/**
 * Separability verdict. Non-positive tolerances select the defaults.
 * Disagreement between the equivalent criteria returns
 * `EQUIVALENCE_VIOLATION`.
 *
 * # Safety
 * `op` must be a live handle; `separable` and `defect` may be null.
 */
enum DivisioStatus divisio_is_separable(const struct DivisioOperator *op,
                                        uint64_t seed,
                                        double tol_verdict,
                                        double tol_recon,
                                        bool *separable,
                                        double *defect);

/**
 * Looks for a tensor-product structure in which the operator has no
 * interaction. On success `*found` is set and, when the buffers are
 * non-null, the global unitary is written row-major (order^2 entries).
 *
 * # Safety
 * `op` must be a live handle; non-null buffers must hold order^2 doubles.
 */
enum DivisioStatus divisio_find_additive_tps(const struct DivisioOperator *op,
                                             bool *found,
                                             double *residual,
                                             double *unitary_re,
                                             double *unitary_im);

/**
 * Splits `da*db` eigenvalues as `a_i + b_k`. On success writes `da` values
 * to `a` and `db` values to `b`.
 *
 * # Safety
 * `eigenvalues` must hold `da*db` doubles, `a` and `b` `da` and `db`.
 */
enum DivisioStatus divisio_spectrum_sum_decomposition(const double *eigenvalues,
                                                      size_t da,
                                                      size_t db,
                                                      bool *found,
                                                      double *a,
                                                      double *b);

/**
 * Writes the 4x4 centre-of-mass / relative transform on
 * (x1, x2, p1, p2), row-major, to `out`.
 *
 * # Safety
 * `out` must hold 16 doubles.
 */
enum DivisioStatus divisio_cm_relative_transform(double m1, double m2, double *out);

/**
 * Runs a command-line command on a JSON document and returns its exit code.
 * The report is stored in `*out_json` (free with [`divisio_string_free`]);
 * on input errors (exit code 2) it is null and the message is available
 * from [`divisio_last_error`].
 *
 * # Safety
 * `command` and `input_json` must be NUL-terminated; `out_json` valid.
 */
int divisio_run_json(const char *command, const char *input_json, uint64_t seed, char **out_json);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void divisio_string_free(char *s);

/**
 * Message for the last failure on this thread, or null. Valid until the
 * next call into the library from the same thread.
 */
const char *divisio_last_error(void);

/**
 * Library version as a static string.
 */
const char *divisio_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIVISIO_H */
