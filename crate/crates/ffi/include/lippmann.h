#ifndef LIPPMANN_H
#define LIPPMANN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LmSolver {
  LM_SOLVER_CONJUGATE_GRADIENT = 0,
  LM_SOLVER_FIXED_POINT = 1,
} LmSolver;

/**
 * Result code of every fallible call.
 */
typedef enum LmStatus {
  LM_STATUS_OK = 0,
  LM_STATUS_NULL_POINTER = 1,
  LM_STATUS_INVALID_ARGUMENT = 2,
  LM_STATUS_NUMERICAL = 3,
  LM_STATUS_PACKING = 4,
  /**
   * The solve finished without meeting the tolerance; outputs are written.
   */
  LM_STATUS_UNCONVERGED = 5,
  LM_STATUS_IO = 6,
  LM_STATUS_PANIC = 7,
} LmStatus;

typedef enum LmVariant {
  LM_VARIANT_CONSISTENT = 0,
  LM_VARIANT_TRUNCATED = 1,
  LM_VARIANT_FILTERED = 2,
  LM_VARIANT_FINITE_DIFFERENCE = 3,
} LmVariant;

/**
 * A microstructure with its reference medium, Green variant and solver settings.
 */
typedef struct LmProblem LmProblem;

typedef struct LmSpherePack LmSpherePack;

/**
 * Summary of one solve.
 */
typedef struct LmSolveInfo {
  size_t iterations;
  double residual;
  double wall_time;
  bool converged;
} LmSolveInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *lm_last_error(void);

/**
 * Conduction problem with isotropic phases: `phases` holds `voxel_count`
 * indices into `conductivities` on the `side^dim` reference grid.
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `out` must be writable.
 */
enum LmStatus lm_problem_conduction(size_t dim,
                                    size_t side,
                                    const uint8_t *phases,
                                    size_t voxel_count,
                                    const double *conductivities,
                                    size_t phase_count,
                                    double reference,
                                    enum LmVariant variant,
                                    struct LmProblem **out);

/**
 * Elasticity problem with isotropic phases given by shear moduli and
 * Poisson ratios.
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `out` must be writable.
 */
enum LmStatus lm_problem_elasticity(size_t dim,
                                    size_t side,
                                    const uint8_t *phases,
                                    size_t voxel_count,
                                    const double *shear_moduli,
                                    const double *poisson_ratios,
                                    size_t phase_count,
                                    double reference_mu,
                                    double reference_nu,
                                    enum LmVariant variant,
                                    struct LmProblem **out);

/**
 * # Safety
 * `problem` must be a live handle.
 */
enum LmStatus lm_problem_set_solver(struct LmProblem *problem,
                                    enum LmSolver solver,
                                    double rel_tol,
                                    size_t max_iter);

/**
 * Unknowns per voxel (`dim` for conduction, `dim (dim + 1) / 2` for
 * elasticity); 0 for a null handle.
 *
 * # Safety
 * `problem` must be null or a live handle.
 */
size_t lm_problem_components(const struct LmProblem *problem);

/**
 * Solves on the grid of side `solve_side` (dividing the reference side) for
 * the macroscopic loading `loading` and writes `A*_h p` to `column`.
 * `info` may be null.
 *
 * # Safety
 * `loading` and `column` must hold `components` values; `info` must be null
 * or writable.
 */
enum LmStatus lm_problem_solve(const struct LmProblem *problem,
                               size_t solve_side,
                               const double *loading,
                               double *column,
                               size_t components,
                               struct LmSolveInfo *info);

/**
 * Full symmetrized homogenized matrix, row-major, `components^2` entries.
 *
 * # Safety
 * `matrix` must hold `len` values.
 */
enum LmStatus lm_problem_homogenized(const struct LmProblem *problem,
                                     size_t solve_side,
                                     double *matrix,
                                     size_t len);

/**
 * # Safety
 * `problem` must be null or a handle not freed before.
 */
void lm_problem_free(struct LmProblem *problem);

/**
 * Random hard-sphere pack in the periodic unit cube.
 *
 * # Safety
 * `out` must be writable.
 */
enum LmStatus lm_spheres_generate(size_t count,
                                  double radius,
                                  double gap,
                                  uint64_t seed,
                                  uint64_t max_steps,
                                  struct LmSpherePack **out);

/**
 * # Safety
 * `pack` must be null or a live handle.
 */
size_t lm_spheres_count(const struct LmSpherePack *pack);

/**
 * # Safety
 * `pack` must be null or a live handle.
 */
double lm_spheres_volume_fraction(const struct LmSpherePack *pack);

/**
 * Copies the centers as `x y z` triples; `len` must be `3 * count`.
 *
 * # Safety
 * `centers` must hold `len` values.
 */
enum LmStatus lm_spheres_centers(const struct LmSpherePack *pack, double *centers, size_t len);

/**
 * Phase map of the pack on a `side^3` grid (1 inside a sphere, 0 outside).
 *
 * # Safety
 * `phases` must hold `len = side^3` bytes.
 */
enum LmStatus lm_spheres_voxelize(const struct LmSpherePack *pack,
                                  size_t side,
                                  uint8_t *phases,
                                  size_t len);

/**
 * # Safety
 * `pack` must be null or a handle not freed before.
 */
void lm_spheres_free(struct LmSpherePack *pack);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LIPPMANN_H */
