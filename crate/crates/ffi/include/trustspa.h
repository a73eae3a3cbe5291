#ifndef TRUSTSPA_H
#define TRUSTSPA_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum TsStatus {
  TS_STATUS_OK = 0,
  TS_STATUS_NULL_POINTER = 1,
  TS_STATUS_DIMENSION_MISMATCH = 2,
  TS_STATUS_INVALID_ARGUMENT = 3,
  TS_STATUS_INVALID_CONFIG = 4,
  TS_STATUS_NUMERICAL = 5,
  TS_STATUS_PANIC = 6,
} TsStatus;

// Why a solver stopped.
typedef enum TsSolveStatus {
  TS_SOLVE_STATUS_CONVERGED_GRADIENT = 0,
  TS_SOLVE_STATUS_CONVERGED_OBJECTIVE = 1,
  TS_SOLVE_STATUS_MAX_ITERS = 2,
  TS_SOLVE_STATUS_STALLED = 3,
  TS_SOLVE_STATUS_NON_FINITE = 4,
} TsSolveStatus;

// Measurement matrix, observations and regularization weight.
typedef struct TsProblem TsProblem;

// Outcome of one solver run.
typedef struct TsResult TsResult;

// Trust-region solver settings. Obtain defaults from
// [`ts_solver_config_default`].
typedef struct TsSolverConfig {
  size_t memory;
  double tau1;
  double grad_tol;
  double rel_obj_tol;
  // Initial radius; zero or negative selects `max(1, ||g0||)`.
  double delta0;
  double delta_max;
  double delta_min;
  double shrink;
  double expand;
  double expand_rho;
  double boundary_frac;
  size_t max_iters;
  bool update_on_reject;
  bool check_certificates;
} TsSolverConfig;

// GPSR-BB settings.
typedef struct TsGpsrConfig {
  double tol;
  size_t max_iters;
} TsGpsrConfig;

// Summary fields of a result.
typedef struct TsResultInfo {
  double objective;
  enum TsSolveStatus status;
  size_t iterations;
  uint64_t a_products;
  double elapsed_s;
  // Entries of the signal with magnitude above `1e-6`.
  size_t nonzeros;
} TsResultInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Static description of a status code.
const char *ts_status_message(enum TsStatus status);

// Message of the most recent failed call on this thread, or an empty
// string. Valid until the next call into this library on the same thread.
const char *ts_last_error(void);

struct TsSolverConfig ts_solver_config_default(void);

struct TsGpsrConfig ts_gpsr_config_default(void);

// Builds a problem from a row-major `m x n` matrix and `m` observations.
//
// # Safety
// `a` must point to `m * n` doubles and `y` to `m` doubles. `out` must be
// a valid pointer; on success it receives a handle owned by the caller.
enum TsStatus ts_problem_new(const double *a,
                             size_t m,
                             size_t n,
                             const double *y,
                             double tau,
                             struct TsProblem **out);

// # Safety
// `problem` must be null or a handle from [`ts_problem_new`] not yet freed.
void ts_problem_free(struct TsProblem *problem);

// Replaces the regularization weight.
//
// # Safety
// `problem` must be a live handle.
enum TsStatus ts_problem_set_tau(struct TsProblem *problem, double tau);

// `||A^T y||_inf`, the weight at and above which zero is optimal.
//
// # Safety
// `problem` must be a live handle and `out` valid for one write.
enum TsStatus ts_problem_tau_max(const struct TsProblem *problem, double *out);

// Objective and, when `grad` is non-null, its gradient at a transformed
// point `x` of length `2n`.
//
// # Safety
// `x` must point to `len` doubles, `value` must be valid for one write and
// `grad`, if non-null, must have room for `len` doubles.
enum TsStatus ts_problem_objective(const struct TsProblem *problem,
                                   const double *x,
                                   size_t len,
                                   double *value,
                                   double *grad);

// Runs the trust-region solver from the origin. `config` may be null for
// defaults.
//
// # Safety
// `problem` must be a live handle, `config` null or valid, and `out` valid
// for one write; on success it receives a result handle.
enum TsStatus ts_solve(const struct TsProblem *problem,
                       const struct TsSolverConfig *config,
                       struct TsResult **out);

// Runs monotone GPSR-BB from the origin. `config` may be null for
// defaults.
//
// # Safety
// Same contract as [`ts_solve`].
enum TsStatus ts_gpsr_solve(const struct TsProblem *problem,
                            const struct TsGpsrConfig *config,
                            struct TsResult **out);

// # Safety
// `result` must be null or a handle from a solve call not yet freed.
void ts_result_free(struct TsResult *result);

// Length of the recovered signal, or 0 for a null handle.
//
// # Safety
// `result` must be null or a live handle.
size_t ts_result_signal_len(const struct TsResult *result);

// Copies the recovered signal into `buf`, which must hold exactly
// [`ts_result_signal_len`] doubles.
//
// # Safety
// `result` must be a live handle and `buf` valid for `len` writes.
enum TsStatus ts_result_copy_signal(const struct TsResult *result, double *buf, size_t len);

// Length of the final iterate: `2n` for both solvers.
//
// # Safety
// `result` must be null or a live handle.
size_t ts_result_point_len(const struct TsResult *result);

// Copies the final iterate: the transformed point for the trust-region
// solver, the nonnegative split `[u; v]` for GPSR.
//
// # Safety
// `result` must be a live handle and `buf` valid for `len` writes.
enum TsStatus ts_result_copy_point(const struct TsResult *result, double *buf, size_t len);

// # Safety
// `result` must be a live handle and `out` valid for one write.
enum TsStatus ts_result_info(const struct TsResult *result, struct TsResultInfo *out);

// Mean squared error `||a - b||^2 / len`.
//
// # Safety
// `a` and `b` must point to `len` doubles; `out` must be valid for one write.
enum TsStatus ts_mse(const double *a, const double *b, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRUSTSPA_H */
