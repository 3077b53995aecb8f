#ifndef PHYSGP_H
#define PHYSGP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum PhysgpStatus {
  PHYSGP_STATUS_OK = 0,
  PHYSGP_STATUS_NULL_POINTER = 1,
  PHYSGP_STATUS_INVALID_ARGUMENT = 2,
  PHYSGP_STATUS_DOMAIN = 3,
  PHYSGP_STATUS_CHOLESKY = 4,
  PHYSGP_STATUS_INSUFFICIENT_DATA = 5,
  PHYSGP_STATUS_OPTIMIZATION = 6,
  PHYSGP_STATUS_PARSE = 7,
  PHYSGP_STATUS_PANIC = 8,
} PhysgpStatus;

/**
 * Beam geometry, prior and annealing settings.
 */
typedef struct PhysgpConfig PhysgpConfig;

/**
 * A fitted joint model.
 */
typedef struct PhysgpModel PhysgpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *physgp_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *physgp_version(void);

/**
 * Default configuration. Never returns NULL.
 */
struct PhysgpConfig *physgp_config_new(void);

/**
 * Parses a TOML configuration into a new handle.
 *
 * # Safety
 * `toml` must be NULL or a NUL-terminated string; `out` must be NULL or
 * writable.
 */
enum PhysgpStatus physgp_config_from_toml(const char *toml, struct PhysgpConfig **out);

/**
 * # Safety
 * `cfg` must be NULL or a handle from this library not yet freed.
 */
void physgp_config_free(struct PhysgpConfig *cfg);

/**
 * Sets the annealing seed used by later fits.
 *
 * # Safety
 * `cfg` must be NULL or a live handle.
 */
enum PhysgpStatus physgp_config_set_seed(struct PhysgpConfig *cfg, uint64_t seed);

/**
 * Deflection `y(x)` (mm) of the beam under load `p` (N).
 *
 * # Safety
 * `cfg` must be a live handle and `out` writable.
 */
enum PhysgpStatus physgp_deflection(const struct PhysgpConfig *cfg,
                                    double p,
                                    double k,
                                    double ei,
                                    double x,
                                    double *out);

/**
 * Analytic curvature (mm⁻¹) at `x`.
 *
 * # Safety
 * `cfg` must be a live handle and `out` writable.
 */
enum PhysgpStatus physgp_curvature(const struct PhysgpConfig *cfg,
                                   double p,
                                   double k,
                                   double ei,
                                   double x,
                                   double *out);

/**
 * MAP fit on a row-major `n_rows × n_cols` curvature matrix whose columns
 * follow the configured sensors.
 *
 * # Safety
 * `cfg` must be a live handle, `data` must point to `n_rows * n_cols`
 * doubles and `out` must be writable.
 */
enum PhysgpStatus physgp_fit(const struct PhysgpConfig *cfg,
                             const double *data,
                             size_t n_rows,
                             size_t n_cols,
                             size_t n_u,
                             double p,
                             struct PhysgpModel **out);

/**
 * # Safety
 * `model` must be NULL or a handle from [`physgp_fit`] not yet freed.
 */
void physgp_model_free(struct PhysgpModel *model);

/**
 * Fitted parameters. Any output pointer may be NULL to skip it.
 *
 * # Safety
 * `model` must be a live handle; non-NULL outputs must be writable.
 */
enum PhysgpStatus physgp_model_theta(const struct PhysgpModel *model,
                                     double *k,
                                     double *ei,
                                     double *sigma2,
                                     double *lambda,
                                     double *objective);

/**
 * Posterior mean and variance of curvature at `x`.
 *
 * # Safety
 * `model` must be a live handle; `mean` and `variance` writable.
 */
enum PhysgpStatus physgp_model_posterior_f(const struct PhysgpModel *model,
                                           double x,
                                           double *mean,
                                           double *variance);

/**
 * Posterior mean and variance of the deflection shape at `x`.
 *
 * # Safety
 * `model` must be a live handle; `mean` and `variance` writable.
 */
enum PhysgpStatus physgp_model_posterior_u(const struct PhysgpModel *model,
                                           double x,
                                           double *mean,
                                           double *variance);

/**
 * Log marginal likelihood of a batch (its column means) under the fitted
 * model.
 *
 * # Safety
 * `model` must be a live handle, `data` must point to `n_rows * n_cols`
 * doubles and `out` must be writable.
 */
enum PhysgpStatus physgp_model_batch_log_ml(const struct PhysgpModel *model,
                                            const double *data,
                                            size_t n_rows,
                                            size_t n_cols,
                                            double *out);

/**
 * `Φ((log_ml − mu0) / sigma0)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum PhysgpStatus physgp_signal_stat(double log_ml, double mu0, double sigma0, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PHYSGP_H */
