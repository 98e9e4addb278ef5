#ifndef SIXSIM_H
#define SIXSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SixsimStatus {
  SIXSIM_STATUS_OK = 0,
  SIXSIM_STATUS_NULL_POINTER = 1,
  SIXSIM_STATUS_INVALID_UTF8 = 2,
  /**
   * Unknown key, unparsable value or violated invariant.
   */
  SIXSIM_STATUS_CONFIG = 3,
  SIXSIM_STATUS_TOPOLOGY = 4,
  /**
   * The requested metric has no value, e.g. on-time ratio with no deliveries.
   */
  SIXSIM_STATUS_UNDEFINED = 5,
  SIXSIM_STATUS_BUFFER_TOO_SMALL = 6,
  SIXSIM_STATUS_INTERNAL = 7,
} SixsimStatus;

/**
 * Opaque run configuration.
 */
typedef struct SixsimConfig SixsimConfig;

/**
 * Opaque result of one run.
 */
typedef struct SixsimReport SixsimReport;

/**
 * Packet counters of a report.
 */
typedef struct SixsimCounts {
  uint64_t n_tx;
  uint64_t n_rx;
  uint64_t n_delayed;
  uint64_t duplicates;
  uint64_t queue_drops;
  uint64_t retry_drops;
  uint64_t no_parent_drops;
} SixsimCounts;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into the library from the same thread.
 */
const char *sixsim_last_error(void);

/**
 * Library version as a static string.
 */
const char *sixsim_version(void);

/**
 * A configuration holding the benchmark defaults.
 */
struct SixsimConfig *sixsim_config_new(void);

/**
 * Parses a TOML run configuration; missing keys take their defaults.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SixsimStatus sixsim_config_from_toml(const char *text, struct SixsimConfig **out);

/**
 * # Safety
 * `cfg` must come from this library and not be used afterwards. Null is ignored.
 */
void sixsim_config_free(struct SixsimConfig *cfg);

/**
 * Sets one key, e.g. `("flooding", "leafCopy")` or `("pk_period_s", "10")`.
 *
 * # Safety
 * `cfg` must be a live handle; `key` and `value` NUL-terminated strings.
 */
enum SixsimStatus sixsim_config_set(struct SixsimConfig *cfg, const char *key, const char *value);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum SixsimStatus sixsim_config_validate(const struct SixsimConfig *cfg);

/**
 * Runs the configuration on its grouped topology to completion.
 *
 * # Safety
 * `cfg` must be a live handle and `out` a valid pointer.
 */
enum SixsimStatus sixsim_run(const struct SixsimConfig *cfg, struct SixsimReport **out);

/**
 * # Safety
 * `report` must come from this library and not be used afterwards. Null is ignored.
 */
void sixsim_report_free(struct SixsimReport *report);

/**
 * # Safety
 * `report` must be a live handle and `out` a valid pointer.
 */
enum SixsimStatus sixsim_report_counts(const struct SixsimReport *report, struct SixsimCounts *out);

/**
 * Unique root deliveries over unique packets generated.
 *
 * # Safety
 * `report` must be a live handle and `out` a valid pointer.
 */
enum SixsimStatus sixsim_report_pdr(const struct SixsimReport *report, double *out);

/**
 * Fraction of root deliveries within the deadline.
 *
 * # Safety
 * `report` must be a live handle and `out` a valid pointer.
 */
enum SixsimStatus sixsim_report_on_time(const struct SixsimReport *report, double *out);

/**
 * Network lifetime in years (shortest-lived non-root node).
 *
 * # Safety
 * `report` must be a live handle and `out` a valid pointer.
 */
enum SixsimStatus sixsim_report_lifetime_years(const struct SixsimReport *report, double *out);

/**
 * Copies delay samples (ms) into `buf`. `written` always receives the number
 * of samples; `BUFFER_TOO_SMALL` is returned when `len` is short, so a first
 * call with `buf = NULL, len = 0` sizes the buffer.
 *
 * # Safety
 * `report` must be a live handle, `written` a valid pointer and `buf` valid
 * for `len` writes.
 */
enum SixsimStatus sixsim_report_delays(const struct SixsimReport *report,
                                       uint64_t *buf,
                                       size_t len,
                                       size_t *written);

/**
 * Full report as JSON; free with [`sixsim_string_free`]. Null on failure.
 *
 * # Safety
 * `report` must be a live handle.
 */
char *sixsim_report_to_json(const struct SixsimReport *report);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards. Null is ignored.
 */
void sixsim_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIXSIM_H */
