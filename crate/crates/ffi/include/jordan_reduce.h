#ifndef JORDAN_REDUCE_H
#define JORDAN_REDUCE_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  JR_STATUS_OK = 0,
  JR_STATUS_NULL_POINTER = 1,
  JR_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed problem file, schema violation or bad arguments.
   */
  JR_STATUS_INPUT_ERROR = 3,
  /**
   * The problem is well formed but not solvable as posed.
   */
  JR_STATUS_SOLVE_ERROR = 4,
  /**
   * Output buffer too small; the required size is reported.
   */
  JR_STATUS_BUFFER_TOO_SMALL = 5,
  JR_STATUS_PANIC = 6,
} JrStatus;

/**
 * Opaque problem handle.
 */
typedef struct JrProblem JrProblem;

/**
 * Opaque solution handle.
 */
typedef struct JrSolution JrSolution;

/**
 * Summary of the Jordan structure.
 */
typedef struct {
  size_t n;
  size_t m;
  size_t k;
  int64_t nu;
  /**
   * 1 when every certificate holds.
   */
  int32_t certified;
} JrStructure;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *jr_last_error(void);

/**
 * Loads a JSON problem file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
JrStatus jr_problem_load(const char *path, JrProblem **out);

/**
 * Parses a problem from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
JrStatus jr_problem_parse(const char *json, JrProblem **out);

/**
 * # Safety
 * `problem` must come from `jr_problem_load`/`jr_problem_parse` or be null.
 */
void jr_problem_free(JrProblem *problem);

/**
 * Jordan structure of `(B, A_1)`.
 *
 * # Safety
 * `problem` must be a live handle and `out` a valid pointer.
 */
JrStatus jr_structure(const JrProblem *problem, JrStructure *out);

/**
 * Runs the full pipeline.
 *
 * # Safety
 * `problem` must be a live handle and `out` a valid pointer.
 */
JrStatus jr_solve(const JrProblem *problem, JrSolution **out);

/**
 * # Safety
 * `solution` must come from `jr_solve` or be null.
 */
void jr_solution_free(JrSolution *solution);

/**
 * Shape of the exported field: number of grid samples and components per sample.
 *
 * # Safety
 * `solution` must be a live handle; the output pointers must be valid.
 */
JrStatus jr_solution_shape(const JrSolution *solution, size_t *samples, size_t *components);

/**
 * Copies the field values, sample-major, into `buf`. `len` is the buffer
 * length in doubles; `needed` receives the required length.
 *
 * # Safety
 * `buf` must hold `len` doubles; `solution` and `needed` must be valid.
 */
JrStatus jr_solution_values(const JrSolution *solution, double *buf, size_t len, size_t *needed);

/**
 * The solution as CSV. The string is owned by the handle.
 *
 * # Safety
 * `solution` must be a live handle or null.
 */
const char *jr_solution_csv(const JrSolution *solution);

/**
 * Residual and oracle check. `passed` is 1 when the deviation is within the
 * problem's verification tolerance.
 *
 * # Safety
 * `solution` must be a live handle; the output pointers must be valid.
 */
JrStatus jr_solution_verify(const JrSolution *solution, double *deviation, int32_t *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JORDAN_REDUCE_H */
