#ifndef SMM_H
#define SMM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SmmStatus {
  SMM_STATUS_OK = 0,
  SMM_STATUS_IO = 1,
  SMM_STATUS_CONFIG = 2,
  SMM_STATUS_BLOWUP = 3,
  SMM_STATUS_NULL_POINTER = 10,
  SMM_STATUS_UTF8 = 11,
  SMM_STATUS_NUMERICAL = 12,
  SMM_STATUS_PANIC = 13,
  SMM_STATUS_BUFFER = 14,
} SmmStatus;

// Parsed run configuration.
typedef struct SmmConfig SmmConfig;

// Statistics of a finished ensemble of `scheme.kind`.
typedef struct SmmEnsemble SmmEnsemble;

// A single path of `scheme.kind` started from `ρ⁰ = 1 − cos(2πx/L)`.
typedef struct SmmStepper SmmStepper;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty if none. The
// pointer stays valid until the next failing call on the same thread.
const char *smm_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *smm_version(void);

// Parses a TOML configuration. Unset keys take their defaults, so an
// empty string gives the default configuration.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
enum SmmStatus smm_config_from_toml(const char *toml, struct SmmConfig **out);

// Applies one `section.key=value` override.
//
// # Safety
// `config` must come from [`smm_config_from_toml`]; `assignment` must be a
// NUL-terminated string.
enum SmmStatus smm_config_set(struct SmmConfig *config, const char *assignment);

// # Safety
// `config` must come from [`smm_config_from_toml`] or be null.
void smm_config_free(struct SmmConfig *config);

// Creates a stepper for `scheme.kind` driven by noise stream
// `realization` of `noise.master_seed`.
//
// # Safety
// `config` must be a live config handle and `out` a valid pointer.
enum SmmStatus smm_stepper_new(const struct SmmConfig *config,
                               uint64_t realization,
                               struct SmmStepper **out);

// Advances `steps` time steps. On blow-up the stepper keeps the state of
// the failing step and should be discarded.
//
// # Safety
// `stepper` must be a live stepper handle.
enum SmmStatus smm_stepper_advance(struct SmmStepper *stepper, uint64_t steps);

// Number of grid cells, the length of the density.
//
// # Safety
// `stepper` must be a live stepper handle; `out` a valid pointer.
enum SmmStatus smm_stepper_num_cells(const struct SmmStepper *stepper, size_t *out);

// Copies `ρ` into `buf`, which must hold at least the cell count.
//
// # Safety
// `stepper` must be a live stepper handle; `buf` must point to `len`
// writable doubles.
enum SmmStatus smm_stepper_density(const struct SmmStepper *stepper, double *buf, size_t len);

// # Safety
// `stepper` must be a live stepper handle; `out` a valid pointer.
enum SmmStatus smm_stepper_time(const struct SmmStepper *stepper, double *out);

// # Safety
// `stepper` must be a live stepper handle; `out` a valid pointer.
enum SmmStatus smm_stepper_dt(const struct SmmStepper *stepper, double *out);

// # Safety
// `stepper` must come from [`smm_stepper_new`] or be null.
void smm_stepper_free(struct SmmStepper *stepper);

// Runs the ensemble of `scheme.kind` described by `config`.
//
// # Safety
// `config` must be a live config handle and `out` a valid pointer.
enum SmmStatus smm_ensemble_run(const struct SmmConfig *config, struct SmmEnsemble **out);

// # Safety
// `ensemble` must be a live ensemble handle; `out` a valid pointer.
enum SmmStatus smm_ensemble_num_times(const struct SmmEnsemble *ensemble, size_t *out);

// # Safety
// `ensemble` must be a live ensemble handle; `out` a valid pointer.
enum SmmStatus smm_ensemble_num_cells(const struct SmmEnsemble *ensemble, size_t *out);

// Number of realizations that survived to the last output time.
//
// # Safety
// `ensemble` must be a live ensemble handle; `out` a valid pointer.
enum SmmStatus smm_ensemble_survivors(const struct SmmEnsemble *ensemble, size_t *out);

// Copies the pointwise mean of `ρ` at output `time_index`.
//
// # Safety
// `ensemble` must be a live ensemble handle; `buf` must point to `len`
// writable doubles.
enum SmmStatus smm_ensemble_mean(const struct SmmEnsemble *ensemble,
                                 size_t time_index,
                                 double *buf,
                                 size_t len);

// Copies the pointwise sample variance of `ρ` at output `time_index`.
//
// # Safety
// As for [`smm_ensemble_mean`].
enum SmmStatus smm_ensemble_variance(const struct SmmEnsemble *ensemble,
                                     size_t time_index,
                                     double *buf,
                                     size_t len);

// # Safety
// `ensemble` must come from [`smm_ensemble_run`] or be null.
void smm_ensemble_free(struct SmmEnsemble *ensemble);

// `max_θ ‖Ã‖₂²` of the telegraph scheme over `samples` phase angles.
//
// # Safety
// `out` must be a valid pointer.
enum SmmStatus smm_stability_norm_sq(double dt,
                                     double dx,
                                     double epsilon,
                                     size_t samples,
                                     double *out);

// Largest stable step: `general = 0` for the telegraph condition, nonzero
// for the general one with kernel bound `s_m` and scattering bound
// `sigma_m`.
//
// # Safety
// `out` must be a valid pointer.
enum SmmStatus smm_cfl_dt(double dx,
                          double epsilon,
                          double s_m,
                          double sigma_m,
                          int32_t general,
                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMM_H */
