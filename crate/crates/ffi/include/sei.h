#ifndef SEI_H
#define SEI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SeiStatus {
  SEI_STATUS_OK = 0,
  SEI_STATUS_NULL_POINTER = 1,
  SEI_STATUS_INVALID_ARGUMENT = 2,
  SEI_STATUS_DIMENSION_MISMATCH = 3,
  SEI_STATUS_NON_FINITE = 4,
  SEI_STATUS_SINGULAR = 5,
  SEI_STATUS_NON_CONVERGENCE = 6,
  SEI_STATUS_UNKNOWN_METHOD = 7,
  SEI_STATUS_UNKNOWN_PROBLEM = 8,
  SEI_STATUS_INVALID_TABLEAU = 9,
  SEI_STATUS_PANIC = 10,
} SeiStatus;

/**
 * A Butcher tableau with its certified order.
 */
typedef struct SeiMethodHandle SeiMethodHandle;

/**
 * A semilinear benchmark problem.
 */
typedef struct SeiProblemHandle SeiProblemHandle;

/**
 * A method bound to a problem's linear part and a step size.
 */
typedef struct SeiStepperHandle SeiStepperHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message, NUL-terminated and
 * truncated to `len` bytes. Returns the full message length.
 *
 * # Safety
 * `buf` must be null or valid for `len` writable bytes.
 */
size_t sei_last_error(char *buf, size_t len);

/**
 * `out = exp(a)` for row-major `dim x dim` matrices.
 *
 * # Safety
 * `a` and `out` must each hold `dim * dim` doubles.
 */
enum SeiStatus sei_expm(size_t dim, const double *a, double *out);

/**
 * Looks up a built-in method by name (case-insensitive).
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SeiStatus sei_method_builtin(const char *name, struct SeiMethodHandle **out);

/**
 * Builds an exponential method from an `s`-stage tableau; `a` is row-major.
 * Its order is whatever the order-condition checker certifies.
 *
 * # Safety
 * `c` and `b` must hold `s` doubles, `a` must hold `s * s`, `out` must be valid.
 */
enum SeiStatus sei_method_from_tableau(size_t s,
                                       const double *c,
                                       const double *b,
                                       const double *a,
                                       struct SeiMethodHandle **out);

/**
 * # Safety
 * `method` must come from a `sei_method_*` constructor, or be null.
 */
void sei_method_free(struct SeiMethodHandle *method);

/**
 * # Safety
 * `method` must be a live handle; `stages` and `order` valid pointers.
 */
enum SeiStatus sei_method_info(const struct SeiMethodHandle *method,
                               size_t *stages,
                               uint32_t *order);

/**
 * Largest defect of the RK symmetry conditions.
 *
 * # Safety
 * `method` must be a live handle and `residual` a valid pointer.
 */
enum SeiStatus sei_check_rk_symmetry(const struct SeiMethodHandle *method, double *residual);

/**
 * Largest defect of `b_i a_ij + b_j a_ji - b_i b_j = 0`.
 *
 * # Safety
 * `method` must be a live handle and `residual` a valid pointer.
 */
enum SeiStatus sei_check_rk_symplecticity(const struct SeiMethodHandle *method, double *residual);

/**
 * Largest defect of the order conditions up to `p` (1 to 4).
 *
 * # Safety
 * `method` must be a live handle and `residual` a valid pointer.
 */
enum SeiStatus sei_check_order(const struct SeiMethodHandle *method, uint32_t p, double *residual);

/**
 * Symmetry defect of the exponential coefficients at the row-major matrix `z`.
 *
 * # Safety
 * `z` must hold `dim * dim` doubles; `method` and `residual` must be valid.
 */
enum SeiStatus sei_check_ei_symmetry(const struct SeiMethodHandle *method,
                                     size_t dim,
                                     const double *z,
                                     double *residual);

/**
 * Symplecticity defect at `z` with the canonical structure of size `dim` (even).
 *
 * # Safety
 * `z` must hold `dim * dim` doubles; `method` and `residual` must be valid.
 */
enum SeiStatus sei_check_ei_symplecticity(const struct SeiMethodHandle *method,
                                          size_t dim,
                                          const double *z,
                                          double *residual);

/**
 * The Duffing oscillator with stiffness `omega² + k²`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SeiStatus sei_problem_duffing(double k, double omega, struct SeiProblemHandle **out);

/**
 * The averaged wind-induced oscillation system.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SeiStatus sei_problem_wind(double r, double theta, struct SeiProblemHandle **out);

/**
 * # Safety
 * `problem` must come from a `sei_problem_*` constructor, or be null.
 */
void sei_problem_free(struct SeiProblemHandle *problem);

/**
 * State dimension.
 *
 * # Safety
 * `problem` must be a live handle and `dim` a valid pointer.
 */
enum SeiStatus sei_problem_dim(const struct SeiProblemHandle *problem, size_t *dim);

/**
 * Copies the initial value into `y` (length `dim`).
 *
 * # Safety
 * `y` must hold `dim` doubles.
 */
enum SeiStatus sei_problem_initial_value(const struct SeiProblemHandle *problem,
                                         double *y,
                                         size_t dim);

/**
 * Energy or first integral at `y`.
 *
 * # Safety
 * `y` must hold the problem's dimension of doubles; `value` must be valid.
 */
enum SeiStatus sei_problem_invariant(const struct SeiProblemHandle *problem,
                                     const double *y,
                                     double *value);

/**
 * Closed-form solution at time `t`, where the problem has one.
 *
 * # Safety
 * `y` must hold the problem's dimension of doubles.
 */
enum SeiStatus sei_problem_exact(const struct SeiProblemHandle *problem, double t, double *y);

/**
 * Precomputes the step map of `method` for `problem` at step `h`.
 * `fp_tol <= 0` or `max_iters == 0` selects the defaults.
 *
 * # Safety
 * `method` and `problem` must be live handles; `out` must be valid.
 */
enum SeiStatus sei_stepper_new(const struct SeiMethodHandle *method,
                               const struct SeiProblemHandle *problem,
                               double h,
                               double fp_tol,
                               size_t max_iters,
                               struct SeiStepperHandle **out);

/**
 * # Safety
 * `stepper` must come from [`sei_stepper_new`], or be null.
 */
void sei_stepper_free(struct SeiStepperHandle *stepper);

/**
 * One step from `y0` into `y1`; `iterations` (may be null) receives the
 * stage-iteration count.
 *
 * # Safety
 * `y0` and `y1` must hold the problem's dimension of doubles.
 */
enum SeiStatus sei_stepper_step(const struct SeiStepperHandle *stepper,
                                const struct SeiProblemHandle *problem,
                                const double *y0,
                                double *y1,
                                size_t *iterations);

/**
 * Integrates from the problem's initial value to `t_end` and writes the
 * final state; `t_end / h` must be an integer.
 *
 * # Safety
 * `y_end` must hold the problem's dimension of doubles; `n_steps` may be null.
 */
enum SeiStatus sei_integrate(const struct SeiStepperHandle *stepper,
                             const struct SeiProblemHandle *problem,
                             double t_end,
                             double *y_end,
                             size_t *n_steps);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEI_H */
