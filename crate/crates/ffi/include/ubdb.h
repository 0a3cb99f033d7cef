#ifndef UBDB_H
#define UBDB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Non-negative codes mean the call completed.
 */
typedef enum UbdbStatus {
  /**
   * Completed; nothing to report.
   */
  UBDB_STATUS_OK = 0,
  /**
   * Completed with findings: violated obligations or lint errors.
   */
  UBDB_STATUS_FINDINGS = 1,
  /**
   * A required pointer argument was NULL.
   */
  UBDB_STATUS_NULL_ARGUMENT = -1,
  /**
   * A string argument was not valid UTF-8.
   */
  UBDB_STATUS_INVALID_UTF8 = -2,
  /**
   * The model text does not parse.
   */
  UBDB_STATUS_PARSE = -3,
  /**
   * Names do not resolve or the refinement structure is inconsistent.
   */
  UBDB_STATUS_RESOLVE = -4,
  /**
   * The model is ill-typed.
   */
  UBDB_STATUS_TYPE = -5,
  /**
   * The options document is malformed or names unknown sets/machines.
   */
  UBDB_STATUS_OPTIONS = -6,
  /**
   * Checking or SQL generation failed.
   */
  UBDB_STATUS_FAILED = -7,
  /**
   * An internal error was caught at the boundary.
   */
  UBDB_STATUS_INTERNAL = -99,
} UbdbStatus;

/**
 * A loaded, resolved and type-checked model.
 */
typedef struct UbdbChain UbdbChain;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ubdb_version(void);

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *ubdb_last_error(void);

/**
 * Parse, resolve and type-check `source`, storing a new handle in `*out`.
 *
 * # Safety
 * `source` must be a NUL-terminated string and `out` a writable pointer.
 */
enum UbdbStatus ubdb_chain_load(const char *source, struct UbdbChain **out);

/**
 * Release a handle. NULL is ignored.
 *
 * # Safety
 * `chain` must come from `ubdb_chain_load` and not be used afterwards.
 */
void ubdb_chain_free(struct UbdbChain *chain);

/**
 * Number of machines in the chain (0 for NULL).
 *
 * # Safety
 * `chain` must be NULL or a live handle.
 */
size_t ubdb_chain_machine_count(const struct UbdbChain *chain);

/**
 * Discharge proof obligations. `options_json` may be NULL for the defaults.
 * Writes the structured report to `*out_json` and returns `Ok` when every
 * obligation holds, `Findings` otherwise.
 *
 * # Safety
 * `chain` must be a live handle, `options_json` NULL or a NUL-terminated
 * string, and `out_json` a writable pointer.
 */
enum UbdbStatus ubdb_check(const struct UbdbChain *chain,
                           const char *options_json,
                           char **out_json);

/**
 * Methodology lint. Returns `Findings` when an error-severity rule fires.
 *
 * # Safety
 * `chain` must be a live handle and `out_json` a writable pointer.
 */
enum UbdbStatus ubdb_lint(const struct UbdbChain *chain, char **out_json);

/**
 * Generate the SQL script and manifest for `machine` (NULL: the last).
 * No verification is performed; call `ubdb_check` first.
 *
 * # Safety
 * `chain` must be a live handle, `machine` NULL or a NUL-terminated string,
 * and both output pointers writable.
 */
enum UbdbStatus ubdb_generate_sql(const struct UbdbChain *chain,
                                  const char *machine,
                                  char **out_sql,
                                  char **out_manifest);

/**
 * Canonical pretty-printed form of `source` (parsing only).
 *
 * # Safety
 * `source` must be a NUL-terminated string and `out` a writable pointer.
 */
enum UbdbStatus ubdb_format(const char *source, char **out);

/**
 * Release a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void ubdb_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UBDB_H */
