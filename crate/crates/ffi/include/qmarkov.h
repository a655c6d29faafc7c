#ifndef QMARKOV_H
#define QMARKOV_H

/* Generated by cbindgen from qmarkov-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum QmStatus {
  /**
   * Success.
   */
  QmOk = 0,
  /**
   * A required pointer argument was null.
   */
  QmNullPointer = 1,
  /**
   * Invalid argument or configuration.
   */
  QmInvalid = 2,
  /**
   * Numerical failure inside the library.
   */
  QmNumeric = 3,
} QmStatus;

/**
 * Which superoperator matrix to export.
 */
typedef enum QmMatrixKind {
  /**
   * The dissipative generator K.
   */
  QmMatrixK = 0,
  /**
   * The free part -i[H_S, .].
   */
  QmMatrixLiouvilleS = 1,
  /**
   * The total generator L_S + lambda^2 K.
   */
  QmMatrixTotal = 2,
} QmMatrixKind;

/**
 * Opaque bath handle.
 */
typedef struct QmBath QmBath;

/**
 * Opaque generator handle holding the Davies construction at one coupling.
 */
typedef struct QmGenerator QmGenerator;

/**
 * Opaque N-level system handle.
 */
typedef struct QmSystem QmSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message into `buf` (NUL-terminated, truncated to
 * `len` bytes). Returns the untruncated length.
 */
uintptr_t qm_last_error_message(char *buf, uintptr_t len);

/**
 * Build a system from dense hermitian matrices (row-major, length dim*dim).
 * Returns null on failure.
 */
struct QmSystem *qm_system_new(uintptr_t dim,
                               const double *h_re,
                               const double *h_im,
                               const double *g_re,
                               const double *g_im);

/**
 * Two-level system with splitting `delta`; `coupling`: 0 = sigma_x,
 * 1 = sigma_z.
 */
struct QmSystem *qm_system_new_qubit(double delta, int coupling);

void qm_system_free(struct QmSystem *sys);

int qm_system_dim(const struct QmSystem *sys);

/**
 * Analytic form-factor bath: J(w) = (pi/2) c1 w^{1+2n} e^{-2 w^m}.
 */
struct QmBath *qm_bath_new_analytic(double beta, uint32_t n, uint32_t m, double c1);

/**
 * Tabulated spectral density on an ascending grid starting at (0, 0).
 */
struct QmBath *qm_bath_new_tabulated(double beta,
                                     const double *omegas,
                                     const double *j,
                                     uintptr_t len);

void qm_bath_free(struct QmBath *bath);

/**
 * Spectral density J(omega).
 */
enum QmStatus qm_bath_spectral_density(const struct QmBath *bath, double omega, double *out);

/**
 * Thermally weighted rate function h_hat(u).
 */
enum QmStatus qm_bath_h_hat(const struct QmBath *bath, double u, double *out);

/**
 * Full complex two-point function C(t).
 */
enum QmStatus qm_bath_correlation(const struct QmBath *bath,
                                  double t,
                                  double *out_re,
                                  double *out_im);

/**
 * Build the weak-coupling generator for (system, bath, lambda).
 */
struct QmGenerator *qm_generator_build(const struct QmSystem *sys,
                                       const struct QmBath *bath,
                                       double lambda);

void qm_generator_free(struct QmGenerator *gen);

/**
 * Copy a dim^2 x dim^2 superoperator matrix (row-major) into the buffers.
 */
enum QmStatus qm_generator_matrix(const struct QmGenerator *gen,
                                  enum QmMatrixKind kind,
                                  double *out_re,
                                  double *out_im);

/**
 * Copy the Lamb-shift Hamiltonian (dim x dim).
 */
enum QmStatus qm_generator_lamb_shift(const struct QmGenerator *gen,
                                      double *out_re,
                                      double *out_im);

int qm_generator_jump_count(const struct QmGenerator *gen);

/**
 * Copy jump channel `idx`: its rate and its dim x dim operator.
 */
enum QmStatus qm_generator_jump(const struct QmGenerator *gen,
                                uintptr_t idx,
                                double *out_rate,
                                double *out_re,
                                double *out_im);

/**
 * Numerical CPT diagnostics of exp(t G).
 */
enum QmStatus qm_generator_cpt_report(const struct QmGenerator *gen,
                                      double t,
                                      uint64_t seed,
                                      double *out_min_choi,
                                      double *out_trace_dev,
                                      double *out_herm_dev);

/**
 * Propagate a density matrix on a time grid. `out_re`/`out_im` hold
 * n_times stacked dim x dim matrices (row-major).
 */
enum QmStatus qm_generator_propagate(const struct QmGenerator *gen,
                                     const double *rho_re,
                                     const double *rho_im,
                                     const double *times,
                                     uintptr_t n_times,
                                     double *out_re,
                                     double *out_im);

/**
 * Stationary state of the bare system at the bath temperature.
 */
enum QmStatus qm_generator_gibbs_state(const struct QmGenerator *gen,
                                       double *out_re,
                                       double *out_im);

/**
 * Resonance spectrum: fills up to dim^2 entries of Bohr energies, s labels,
 * and second-order corrections, plus the decay-rate summary.
 */
enum QmStatus qm_resonances(const struct QmSystem *sys,
                            const struct QmBath *bath,
                            double lambda,
                            double *out_e,
                            int *out_s,
                            double *out_a_re,
                            double *out_a_im,
                            double *out_gamma_lambda,
                            double *out_gamma_fgr,
                            int *out_fgr_holds);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QMARKOV_H */
