#ifndef EMINAMG_H
#define EMINAMG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible entry point.
 */
typedef enum EminamgStatus {
  EMINAMG_STATUS_OK = 0,
  EMINAMG_STATUS_NULL_POINTER = 1,
  EMINAMG_STATUS_INVALID_ARGUMENT = 2,
  EMINAMG_STATUS_IO_ERROR = 3,
  EMINAMG_STATUS_NUMERIC_ERROR = 4,
  EMINAMG_STATUS_NOT_CONVERGED = 5,
} EminamgStatus;

/**
 * Prolongation-improvement selector for `EminamgOptions`.
 */
typedef enum EminamgVariant {
  EMINAMG_VARIANT_TENTATIVE = 0,
  EMINAMG_VARIANT_SMOOTHED = 1,
  EMINAMG_VARIANT_EMIN_JACOBI = 2,
  EMINAMG_VARIANT_EMIN_SGS = 3,
} EminamgVariant;

/**
 * Hierarchy construction options; obtain defaults from
 * `eminamg_options_default` and override fields as needed.
 */
typedef struct EminamgOptions {
  enum EminamgVariant variant;
  /**
   * Energy-minimization iterations per level (EminJacobi / EminSgs).
   */
  uintptr_t emin_iterations;
  /**
   * Strength-of-connection threshold in [0, 1).
   */
  double theta;
  /**
   * Relative energy-decrease stopping tolerance in (0, 1].
   */
  double tau;
  /**
   * Strong-neighbor distance for the energy-minimization pattern.
   */
  uintptr_t pattern_distance;
  /**
   * Maximum interpolation distance of the tentative setup.
   */
  uintptr_t lmax;
  /**
   * Seed for the coarsening random weights.
   */
  uint64_t seed;
  /**
   * Direct-solve threshold for the coarsest level.
   */
  uintptr_t coarse_size;
  uintptr_t max_levels;
} EminamgOptions;

/**
 * Opaque sparse-matrix handle.
 */
typedef struct EminamgMatrix {
  uint8_t _private[0];
} EminamgMatrix;

/**
 * Opaque solver handle (hierarchy plus the fine-level operator).
 */
typedef struct EminamgSolver {
  uint8_t _private[0];
} EminamgSolver;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *eminamg_last_error(void);

/**
 * Library version as a static C string.
 */
const char *eminamg_version(void);

/**
 * Default hierarchy options: energy minimization with the Jacobi
 * preconditioner, two iterations, theta 0.25.
 */
struct EminamgOptions eminamg_options_default(void);

/**
 * Read a Matrix Market file into a new matrix handle.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 * On success `*out` owns the matrix and must be released with
 * `eminamg_matrix_free`.
 */
enum EminamgStatus eminamg_matrix_read_mm(const char *path, struct EminamgMatrix **out);

/**
 * Build a matrix handle from CSR arrays (values copied).
 *
 * # Safety
 * `row_offsets` must hold `nrows + 1` entries, `col_indices` and `values`
 * must hold `row_offsets[nrows]` entries each, and `out` must be valid.
 */
enum EminamgStatus eminamg_matrix_from_csr(uintptr_t nrows,
                                           uintptr_t ncols,
                                           const uintptr_t *row_offsets,
                                           const uintptr_t *col_indices,
                                           const double *values,
                                           struct EminamgMatrix **out);

/**
 * Write a matrix handle to a Matrix Market file.
 *
 * # Safety
 * `matrix` must be a live handle from this library and `path` a valid
 * NUL-terminated string.
 */
enum EminamgStatus eminamg_matrix_write_mm(const struct EminamgMatrix *matrix, const char *path);

/**
 * Number of rows, or 0 for a null handle.
 *
 * # Safety
 * `matrix` must be null or a live handle from this library.
 */
uintptr_t eminamg_matrix_nrows(const struct EminamgMatrix *matrix);

/**
 * Number of stored nonzeros, or 0 for a null handle.
 *
 * # Safety
 * `matrix` must be null or a live handle from this library.
 */
uintptr_t eminamg_matrix_nnz(const struct EminamgMatrix *matrix);

/**
 * Release a matrix handle. Null is ignored.
 *
 * # Safety
 * `matrix` must be null or a handle not freed before.
 */
void eminamg_matrix_free(struct EminamgMatrix *matrix);

/**
 * Build the multigrid solver for an SPD matrix.
 *
 * `nullspace` may be null (constant near kernel) or point to an
 * `nrows x modes` column-major block of near-kernel vectors.
 *
 * # Safety
 * `matrix` must be a live handle; `options` null or valid; `nullspace`
 * null or holding `nrows * modes` doubles; `out` valid. On success `*out`
 * must be released with `eminamg_solver_free`.
 */
enum EminamgStatus eminamg_solver_create(const struct EminamgMatrix *matrix,
                                         const struct EminamgOptions *options,
                                         const double *nullspace,
                                         uintptr_t modes,
                                         struct EminamgSolver **out);

/**
 * Number of levels in a solver hierarchy, or 0 for a null handle.
 *
 * # Safety
 * `solver` must be null or a live handle from this library.
 */
uintptr_t eminamg_solver_levels(const struct EminamgSolver *solver);

/**
 * Operator complexity of the hierarchy, or 0 for a null handle.
 *
 * # Safety
 * `solver` must be null or a live handle from this library.
 */
double eminamg_solver_operator_complexity(const struct EminamgSolver *solver);

/**
 * Solve A x = b by V-cycle-preconditioned conjugate gradients.
 *
 * Convergence is reached when the residual 2-norm falls below
 * `tol * ||b||`. Returns `NotConverged` when the iteration cap is hit; `x`
 * then still holds the best iterate, and `*iterations` the count.
 *
 * # Safety
 * `solver` must be a live handle; `b` and `x` must each hold `n` doubles
 * where `n` is the matrix size; `iterations` may be null.
 */
enum EminamgStatus eminamg_solver_solve(const struct EminamgSolver *solver,
                                        const double *b,
                                        double *x,
                                        double tol,
                                        uintptr_t max_iterations,
                                        uintptr_t *iterations);

/**
 * Release a solver handle. Null is ignored.
 *
 * # Safety
 * `solver` must be null or a handle not freed before.
 */
void eminamg_solver_free(struct EminamgSolver *solver);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMINAMG_H */
