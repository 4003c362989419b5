#ifndef SEAGROUNDED_H
#define SEAGROUNDED_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SgMode {
  SG_MODE_DETERMINISTIC = 0,
  SG_MODE_MODEL_BACKED = 1,
} SgMode;

/**
 * Result codes.
 */
typedef enum SgStatus {
  SG_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  SG_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  SG_STATUS_INVALID_UTF8 = 2,
  /**
   * The engine could not be built from its configuration.
   */
  SG_STATUS_CONFIG = 3,
  /**
   * The question or its arguments were rejected; the output holds a JSON error body.
   */
  SG_STATUS_REJECTED = 4,
  /**
   * A data provider failed; the output holds a JSON error body.
   */
  SG_STATUS_UPSTREAM = 5,
  /**
   * Unexpected failure, including a caught panic.
   */
  SG_STATUS_INTERNAL = 6,
} SgStatus;

/**
 * Opaque engine handle.
 */
typedef struct SgEngine SgEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds an engine from a TOML configuration file.
 *
 * # Safety
 * `config_path` must be a valid C string and `out` a valid pointer.
 */
enum SgStatus sg_engine_open(const char *config_path, struct SgEngine **out);

/**
 * Releases an engine. Null is ignored.
 *
 * # Safety
 * `engine` must come from [`sg_engine_open`] and not be used afterwards.
 */
void sg_engine_free(struct SgEngine *engine);

/**
 * Answers one question. On `SG_STATUS_OK`, `*out_json` holds the answer;
 * on `SG_STATUS_REJECTED` or `SG_STATUS_UPSTREAM` it holds the error body.
 *
 * # Safety
 * Pointers must be valid; `text` must be a C string.
 */
enum SgStatus sg_engine_query(const struct SgEngine *engine,
                              const char *text,
                              enum SgMode mode,
                              char **out_json);

/**
 * Writes the function schemas offered to models as a JSON array.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SgStatus sg_engine_functions(const struct SgEngine *engine, char **out_json);

/**
 * Writes the health summary as a JSON object.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SgStatus sg_engine_health(const struct SgEngine *engine, char **out_json);

/**
 * Message for the last failure on this thread, or null. Valid until the
 * next call into the library from the same thread.
 */
const char *sg_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void sg_string_free(char *s);

/**
 * Library version as a static string.
 */
const char *sg_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEAGROUNDED_H */
