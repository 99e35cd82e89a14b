#ifndef EXITCONTRACT_H
#define EXITCONTRACT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * `method` argument of [`ec_solve_principal`].
 */
#define EC_METHOD_DP 0

#define EC_METHOD_MULTISTOP 1

#define EC_METHOD_BRUTE 2

typedef enum EcStatus {
  EC_STATUS_OK = 0,
  EC_STATUS_PARSE = 1,
  EC_STATUS_VALIDATION = 2,
  EC_STATUS_CAP_EXCEEDED = 3,
  EC_STATUS_NULL_POINTER = 4,
  EC_STATUS_INVALID_ARGUMENT = 5,
  EC_STATUS_INTERNAL = 6,
} EcStatus;

typedef struct EcProblem EcProblem;

typedef struct EcSolution EcSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses a problem from NUL-terminated JSON. The problem is not validated;
 * see [`ec_problem_validate`].
 *
 * # Safety
 * `json` must be a valid C string and `out` a valid pointer.
 */
enum EcStatus ec_problem_from_json(const char *json, struct EcProblem **out);

/**
 * # Safety
 * `problem` must come from [`ec_problem_from_json`] and not be used again.
 */
void ec_problem_free(struct EcProblem *problem);

/**
 * `EcStatus::Ok` if the problem satisfies every model invariant; otherwise
 * `EcStatus::Validation` with the violations in the error message.
 *
 * # Safety
 * `problem` must be a live handle.
 */
enum EcStatus ec_problem_validate(const struct EcProblem *problem);

/**
 * # Safety
 * `problem` must be a live handle and `out` a valid pointer.
 */
enum EcStatus ec_problem_agents(const struct EcProblem *problem, size_t *out);

/**
 * Solves the principal's problem with one of the `EC_METHOD_*` methods.
 *
 * # Safety
 * `problem` must be a live handle and `out` a valid pointer.
 */
enum EcStatus ec_solve_principal(const struct EcProblem *problem,
                                 uint32_t method,
                                 struct EcSolution **out);

/**
 * Best state-dependent contract on a lattice problem; `oracle != 0` uses
 * exhaustive enumeration.
 *
 * # Safety
 * `problem` must be a live handle and `out` a valid pointer.
 */
enum EcStatus ec_solve_markovian(const struct EcProblem *problem,
                                 int32_t oracle,
                                 struct EcSolution **out);

/**
 * # Safety
 * `solution` must be a live handle and `out` a valid pointer.
 */
enum EcStatus ec_solution_value(const struct EcSolution *solution, double *out);

/**
 * The solution as a JSON document; release it with [`ec_string_free`].
 *
 * # Safety
 * `solution` must be a live handle and `out` a valid pointer.
 */
enum EcStatus ec_solution_to_json(const struct EcSolution *solution, char **out);

/**
 * # Safety
 * `solution` must come from a solve function and not be used again.
 */
void ec_solution_free(struct EcSolution *solution);

/**
 * # Safety
 * `s` must come from this library and not be used again.
 */
void ec_string_free(char *s);

/**
 * Message for the last failed call on this thread, empty after a success.
 * The pointer stays valid until the next call into the library.
 */
const char *ec_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXITCONTRACT_H */
