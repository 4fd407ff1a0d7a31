#ifndef PDK_H
#define PDK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of the C interface.
 */
typedef enum PdkStatus {
  PDK_STATUS_OK = 0,
  PDK_STATUS_NULL_POINTER = 1,
  PDK_STATUS_INVALID_MODEL = 2,
  PDK_STATUS_DOMAIN = 3,
  PDK_STATUS_CONFIG = 4,
  PDK_STATUS_NUMERICAL = 5,
  PDK_STATUS_PANIC = 6,
} PdkStatus;

/**
 * Opaque problem handle.
 */
typedef struct PdkProblem PdkProblem;

typedef struct PdkSolution {
  double b_star;
  double b_bar;
  double phi_q;
  double phi_qr;
  double h_at_zero;
  double smooth_fit_residual;
  /**
   * 1 when `h(0+) > 0`, i.e. `b* > 0`.
   */
  int32_t positive_criterion;
} PdkSolution;

typedef struct PdkCheck {
  int32_t pass;
  double max_generator_residual;
  double max_hjb_slack;
  double smoothness_jump;
} PdkCheck;

typedef struct PdkEstimate {
  double mean;
  double std_error;
  double ruin_fraction;
  double truncation_bound;
  uint64_t n_paths;
} PdkEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a problem from the drift `c`, Gaussian coefficient `sigma`,
 * `n_jumps` hyperexponential components and the rates `q`, `r`.
 *
 * # Safety
 * `rates` and `lambdas` must point to `n_jumps` doubles each (or may be
 * null when `n_jumps` is 0); `out` must be writable.
 */
enum PdkStatus pdk_problem_new(double c,
                               double sigma,
                               const double *rates,
                               const double *lambdas,
                               uintptr_t n_jumps,
                               double q,
                               double r,
                               struct PdkProblem **out);

/**
 * Builds a problem from a JSON document
 * `{"sigma", "c", "jumps": [{"rate", "lambda"}], "q", "r"}`.
 *
 * # Safety
 * `json` must be a nul-terminated string; `out` must be writable.
 */
enum PdkStatus pdk_problem_from_json(const char *json, struct PdkProblem **out);

/**
 * Builds one of the named presets (`case1`, `case2`, `case3`, `case1p`,
 * `case2p`, `case3p`).
 *
 * # Safety
 * `name` must be a nul-terminated string; `out` must be writable.
 */
enum PdkStatus pdk_problem_preset(const char *name, struct PdkProblem **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `problem` must come from a `pdk_problem_*` constructor and not be used
 * afterwards.
 */
void pdk_problem_free(struct PdkProblem *problem);

/**
 * Optimal barrier and the quantities around it.
 *
 * # Safety
 * `problem` must be a live handle and `out` writable.
 */
enum PdkStatus pdk_solve(const struct PdkProblem *problem, struct PdkSolution *out);

/**
 * `v_b(x)` at the `n` points `xs`, written to `values`.
 *
 * # Safety
 * `xs` and `values` must hold `n` doubles; `problem` must be a live handle.
 */
enum PdkStatus pdk_value(const struct PdkProblem *problem,
                         double b,
                         const double *xs,
                         uintptr_t n,
                         double *values);

/**
 * `W^{(q)}(x)` when `shifted` is 0, `W^{(q+r)}(x)` otherwise.
 *
 * # Safety
 * `problem` must be a live handle and `out` writable.
 */
enum PdkStatus pdk_scale_w(const struct PdkProblem *problem,
                           int32_t shifted,
                           double x,
                           double *out);

/**
 * Verifies the barrier `b` (NaN selects `b*`) on the default grid.
 *
 * # Safety
 * `problem` must be a live handle and `out` writable.
 */
enum PdkStatus pdk_check(const struct PdkProblem *problem, double b, struct PdkCheck *out);

/**
 * Monte Carlo estimate of `v_b(x0)` with `n_paths` paths.
 *
 * # Safety
 * `problem` must be a live handle and `out` writable.
 */
enum PdkStatus pdk_simulate(const struct PdkProblem *problem,
                            double b,
                            double x0,
                            uint64_t n_paths,
                            uint64_t seed,
                            double dt,
                            struct PdkEstimate *out);

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *pdk_last_error_message(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *pdk_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PDK_H */
