#ifndef RIGHTS_MARKET_H
#define RIGHTS_MARKET_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a call. Values match the exit codes of the command-line tool.
 */
typedef enum RmStatus {
  RM_STATUS_OK = 0,
  RM_STATUS_IO = 1,
  /**
   * Null pointer, bad UTF-8 or an index out of range.
   */
  RM_STATUS_BAD_ARGUMENT = 2,
  RM_STATUS_PARSE = 3,
  RM_STATUS_INVALID = 4,
  RM_STATUS_SOLVER = 5,
  RM_STATUS_REPLAY = 7,
  /**
   * A bug inside the library; the call had no effect.
   */
  RM_STATUS_PANIC = 9,
} RmStatus;

/**
 * A parsed and validated scenario.
 */
typedef struct RmScenario RmScenario;

/**
 * A solved single-round market.
 */
typedef struct RmSolution RmSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call into this library from the same thread.
 */
const char *rm_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *rm_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void rm_string_free(char *s);

/**
 * Parses and validates a scenario from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum RmStatus rm_scenario_from_json(const char *json, struct RmScenario **out);

/**
 * Generates a random valid market scenario with default epsilon, mode and
 * mechanism.
 *
 * # Safety
 * `out` must be writable.
 */
enum RmStatus rm_scenario_generate(uint64_t seed,
                                   size_t buyers,
                                   size_t sellers,
                                   uint64_t vmax,
                                   struct RmScenario **out);

/**
 * Scenario as pretty JSON.
 *
 * # Safety
 * `sc` must be a live scenario handle; `out` must be writable.
 */
enum RmStatus rm_scenario_to_json(const struct RmScenario *sc, char **out);

/**
 * # Safety
 * `sc` must be null or a handle from this library, not yet freed.
 */
void rm_scenario_free(struct RmScenario *sc);

/**
 * Solves a market scenario.
 *
 * # Safety
 * `sc` must be a live scenario handle; `out` must be writable.
 */
enum RmStatus rm_solve(const struct RmScenario *sc, struct RmSolution **out);

/**
 * Number of Couples held by buyer `buyer` (0-based).
 *
 * # Safety
 * `sol` must be a live solution handle; `couples` must be writable.
 */
enum RmStatus rm_solution_couples(const struct RmSolution *sol, size_t buyer, uint64_t *couples);

/**
 * Solution as JSON: terminal prices and every basket.
 *
 * # Safety
 * `sol` must be a live solution handle; `out` must be writable.
 */
enum RmStatus rm_solution_json(const struct RmSolution *sol, char **out);

/**
 * Full report: solution, solver counters, verification and frustration.
 *
 * # Safety
 * `sol` must be a live solution handle; `out` must be writable.
 */
enum RmStatus rm_solution_report_json(const struct RmSolution *sol, char **out);

/**
 * Auction trace, one JSON event per line.
 *
 * # Safety
 * `sol` must be a live solution handle; `out` must be writable.
 */
enum RmStatus rm_solution_trace_jsonl(const struct RmSolution *sol, char **out);

/**
 * # Safety
 * `sol` must be null or a handle from this library, not yet freed.
 */
void rm_solution_free(struct RmSolution *sol);

/**
 * Runs a crisis scenario and returns the per-round records and checks as JSON.
 *
 * # Safety
 * `sc` must be a live scenario handle; `out` must be writable.
 */
enum RmStatus rm_crisis_run(const struct RmScenario *sc, char **out);

/**
 * Rebuilds a solution from trace text and returns it as JSON.
 *
 * # Safety
 * `trace_jsonl` must be a NUL-terminated string; `out` must be writable.
 */
enum RmStatus rm_replay(const char *trace_jsonl, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RIGHTS_MARKET_H */
