#ifndef TDMECH_H
#define TDMECH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. `1` to `4` match the exit codes of the command-line tool.
typedef enum TdmStatus {
  TDM_STATUS_OK = 0,
  // The run completed but at least one audit exceeded its tolerance.
  TDM_STATUS_LAW_FAILED = 1,
  // Malformed configuration or expression text.
  TDM_STATUS_PARSE = 2,
  // Well-formed input that is inconsistent or out of range.
  TDM_STATUS_VALIDATION = 3,
  // Numerical failure while evaluating or integrating.
  TDM_STATUS_RUNTIME = 4,
  TDM_STATUS_NULL_POINTER = 5,
  TDM_STATUS_INVALID_UTF8 = 6,
  // A Rust panic was caught at the boundary.
  TDM_STATUS_PANIC = 7,
} TdmStatus;

// A time-dependent Lagrangian `L(t, x, y)` given by an expression.
typedef struct TdmLagrangian TdmLagrangian;

// An integrated trajectory.
typedef struct TdmTrajectory TdmTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *tdm_version(void);

// Message of the most recent failure on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *tdm_last_error_message(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must be NULL or a pointer returned by this library and not yet freed.
void tdm_string_free(char *s);

// Parses `expr` as `L(t, x0..x{dim-1}, y0..y{dim-1})`.
//
// # Safety
// `expr` must be a NUL-terminated string and `out` a valid pointer.
enum TdmStatus tdm_lagrangian_new(const char *expr, uintptr_t dim, struct TdmLagrangian **out);

// # Safety
// `l` must be NULL or a handle from [`tdm_lagrangian_new`] not yet freed.
void tdm_lagrangian_free(struct TdmLagrangian *l);

// Configuration dimension, or 0 for a NULL handle.
//
// # Safety
// `l` must be NULL or a live handle.
uintptr_t tdm_lagrangian_dim(const struct TdmLagrangian *l);

// Evaluates `L(t, x, y)`; `x` and `y` hold `dim` values each.
//
// # Safety
// `l` must be a live handle, `x` and `y` must point to `dim` doubles and
// `out` must be valid for writes.
enum TdmStatus tdm_lagrangian_eval(const struct TdmLagrangian *l,
                                   double t,
                                   const double *x,
                                   const double *y,
                                   double *out);

// Energy `E = ∂L/∂y·y − L` at `(t, x, y)`.
//
// # Safety
// As for [`tdm_lagrangian_eval`].
enum TdmStatus tdm_lagrangian_energy(const struct TdmLagrangian *l,
                                     double t,
                                     const double *x,
                                     const double *y,
                                     double *out);

// Writes the acceleration `x″` of the Euler–Lagrange equations at
// `(t, x, y)` into `out` (`dim` doubles).
//
// # Safety
// As for [`tdm_lagrangian_eval`], with `out` valid for `dim` writes.
enum TdmStatus tdm_lagrangian_acceleration(const struct TdmLagrangian *l,
                                           double t,
                                           const double *x,
                                           const double *y,
                                           double *out);

// Integrates the Euler–Lagrange equations with fixed-step RK4 from
// `(t0, x0, y0)` over `[s0, s1]`.
//
// # Safety
// `l` must be a live handle, `x0` and `y0` must point to `dim` doubles and
// `out` must be valid for writes.
enum TdmStatus tdm_lagrangian_integrate(const struct TdmLagrangian *l,
                                        double t0,
                                        const double *x0,
                                        const double *y0,
                                        double h,
                                        double s0,
                                        double s1,
                                        struct TdmTrajectory **out);

// Runs a scenario given as JSON configuration text. On success or
// [`TdmStatus::LawFailed`] the trajectory is stored in `out` and, when
// `report_json` is not NULL, the invariant report is stored there as a
// string to be released with [`tdm_string_free`]. Nothing is written to
// disk.
//
// # Safety
// `config_json` must be a NUL-terminated string, `out` valid for writes and
// `report_json` NULL or valid for writes.
enum TdmStatus tdm_run_config(const char *config_json,
                              struct TdmTrajectory **out,
                              char **report_json);

// # Safety
// `tr` must be NULL or a trajectory handle not yet freed.
void tdm_trajectory_free(struct TdmTrajectory *tr);

// Number of samples, or 0 for a NULL handle.
//
// # Safety
// `tr` must be NULL or a live handle.
uintptr_t tdm_trajectory_len(const struct TdmTrajectory *tr);

// Configuration dimension, or 0 for a NULL handle.
//
// # Safety
// `tr` must be NULL or a live handle.
uintptr_t tdm_trajectory_dim(const struct TdmTrajectory *tr);

// Copies sample `index`: curve parameter, time, position and velocity.
// Any output pointer may be NULL to skip it; `x` and `y` take `dim` doubles.
//
// # Safety
// `tr` must be a live handle and non-NULL outputs valid for writes.
enum TdmStatus tdm_trajectory_sample(const struct TdmTrajectory *tr,
                                     uintptr_t index,
                                     double *s,
                                     double *t,
                                     double *x,
                                     double *y);

// The trajectory as CSV text (`s,t,x0..,y0..`), released with
// [`tdm_string_free`].
//
// # Safety
// `tr` must be a live handle and `out` valid for writes.
enum TdmStatus tdm_trajectory_to_csv(const struct TdmTrajectory *tr, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TDMECH_H */
