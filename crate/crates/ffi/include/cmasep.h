#ifndef CMASEP_H
#define CMASEP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum CmasepStatus {
  CMASEP_STATUS_OK = 0,
  CMASEP_STATUS_NULL_POINTER = 1,
  CMASEP_STATUS_INVALID_ARGUMENT = 2,
  CMASEP_STATUS_BUFFER_TOO_SMALL = 3,
  CMASEP_STATUS_EMPTY_INPUT = 4,
  CMASEP_STATUS_DOMAIN = 5,
  CMASEP_STATUS_COVERAGE = 6,
  CMASEP_STATUS_CONFIG = 7,
  CMASEP_STATUS_NUMERICAL = 8,
  CMASEP_STATUS_IO = 9,
  CMASEP_STATUS_PANIC = 10,
} CmasepStatus;

/**
 * Objectives of the variational problem.
 */
typedef enum CmasepObjective {
  CMASEP_OBJECTIVE_PHI = 0,
  CMASEP_OBJECTIVE_PHI_PRIME = 1,
  CMASEP_OBJECTIVE_KURTOSIS_ONLY = 2,
  CMASEP_OBJECTIVE_PHI_REAL_CONSTRAINED = 3,
} CmasepObjective;

/**
 * Experiment configuration.
 */
typedef struct CmasepConfig CmasepConfig;

/**
 * Separator filter with taps at lags `-L..=L` on every sensor.
 */
typedef struct CmasepFilter CmasepFilter;

/**
 * Result of a sequential separation.
 */
typedef struct CmasepSeparation CmasepSeparation;

/**
 * Multichannel observation (one row per sensor).
 */
typedef struct CmasepSignal CmasepSignal;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *cmasep_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cmasep_version(void);

/**
 * Builds a signal from `n_sensors * len` interleaved complex samples, sensor
 * after sensor.
 *
 * # Safety
 * `samples` must point to `2 * n_sensors * len` doubles; `out` must be valid.
 */
enum CmasepStatus cmasep_signal_new(const double *samples,
                                    size_t n_sensors,
                                    size_t len,
                                    double sample_period,
                                    struct CmasepSignal **out);

/**
 * # Safety
 * `signal` must come from [`cmasep_signal_new`] or be null.
 */
void cmasep_signal_free(struct CmasepSignal *signal);

/**
 * # Safety
 * `signal` must be a valid handle or null (which yields 0).
 */
size_t cmasep_signal_len(const struct CmasepSignal *signal);

/**
 * # Safety
 * `signal` must be a valid handle or null (which yields 0).
 */
size_t cmasep_signal_n_sensors(const struct CmasepSignal *signal);

/**
 * Center-spike filter on the most powerful sensor.
 *
 * # Safety
 * `signal` and `out` must be valid.
 */
enum CmasepStatus cmasep_filter_default(const struct CmasepSignal *signal,
                                        size_t half_len,
                                        struct CmasepFilter **out);

/**
 * Builds a filter from `n_sensors * (2 * half_len + 1)` interleaved taps,
 * sensor after sensor, lag `-L` first.
 *
 * # Safety
 * `taps` must hold the stated number of doubles; `out` must be valid.
 */
enum CmasepStatus cmasep_filter_new(const double *taps,
                                    size_t n_sensors,
                                    size_t half_len,
                                    struct CmasepFilter **out);

/**
 * # Safety
 * `filter` must come from this library or be null.
 */
void cmasep_filter_free(struct CmasepFilter *filter);

/**
 * Copies the taps (layout of [`cmasep_filter_new`]); `capacity` counts
 * complex values and `n_out` receives the required count.
 *
 * # Safety
 * `out` must hold `2 * capacity` doubles; `n_out` may be null.
 */
enum CmasepStatus cmasep_filter_taps(const struct CmasepFilter *filter,
                                     double *out,
                                     size_t capacity,
                                     size_t *n_out);

/**
 * Filter output `r(i)`, aligned with sample `i + L` of the signal.
 *
 * # Safety
 * Handles must be valid; `out` must hold `2 * capacity` doubles.
 */
enum CmasepStatus cmasep_apply_filter(const struct CmasepFilter *filter,
                                      const struct CmasepSignal *signal,
                                      double *out,
                                      size_t capacity,
                                      size_t *n_out);

/**
 * Godard cost, or the modified cost when `n_freqs > 0`.
 *
 * # Safety
 * Handles must be valid; `freqs` must hold `n_freqs` doubles.
 */
enum CmasepStatus cmasep_cost(const struct CmasepSignal *signal,
                              const struct CmasepFilter *filter,
                              const double *freqs,
                              size_t n_freqs,
                              double *cost);

/**
 * Steepest descent from `start`; the minimizer is returned as a new handle.
 *
 * # Safety
 * Handles must be valid; `freqs` must hold `n_freqs` doubles; `final_cost`
 * may be null.
 */
enum CmasepStatus cmasep_minimize(const struct CmasepSignal *signal,
                                  const struct CmasepFilter *start,
                                  const double *freqs,
                                  size_t n_freqs,
                                  size_t max_iter,
                                  struct CmasepFilter **out,
                                  double *final_cost);

/**
 * Extracts `k` sources by deflation with separator half length `half_len`.
 *
 * # Safety
 * `signal` and `out` must be valid; `freqs` must hold `n_freqs` doubles.
 */
enum CmasepStatus cmasep_separate(const struct CmasepSignal *signal,
                                  size_t k,
                                  size_t half_len,
                                  const double *freqs,
                                  size_t n_freqs,
                                  uint64_t seed,
                                  struct CmasepSeparation **out);

/**
 * # Safety
 * `sep` must come from [`cmasep_separate`] or be null.
 */
void cmasep_separation_free(struct CmasepSeparation *sep);

/**
 * # Safety
 * `sep` must be a valid handle or null (which yields 0).
 */
size_t cmasep_separation_count(const struct CmasepSeparation *sep);

/**
 * Copies output stream `index` and its final cost.
 *
 * # Safety
 * `sep` must be valid; `out` must hold `2 * capacity` doubles; `n_out` and
 * `final_cost` may be null.
 */
enum CmasepStatus cmasep_separation_stream(const struct CmasepSeparation *sep,
                                           size_t index,
                                           double *out,
                                           size_t capacity,
                                           size_t *n_out,
                                           double *final_cost);

/**
 * Filter of stream `index` as a new handle.
 *
 * # Safety
 * `sep` and `out` must be valid.
 */
enum CmasepStatus cmasep_separation_filter(const struct CmasepSeparation *sep,
                                           size_t index,
                                           struct CmasepFilter **out);

/**
 * Infimum of a variational objective at excess bandwidth `gamma`.
 *
 * # Safety
 * `value` must be valid.
 */
enum CmasepStatus cmasep_variational_min(enum CmasepObjective objective,
                                         double gamma,
                                         double kappa,
                                         uint64_t seed,
                                         double *value);

/**
 * Parses a TOML experiment configuration; null text gives the defaults.
 *
 * # Safety
 * `toml` must be a NUL-terminated string or null; `out` must be valid.
 */
enum CmasepStatus cmasep_config_new(const char *toml, struct CmasepConfig **out);

/**
 * # Safety
 * `cfg` must come from [`cmasep_config_new`] or be null.
 */
void cmasep_config_free(struct CmasepConfig *cfg);

/**
 * Overrides the seed and trial count (0 keeps the configured count).
 *
 * # Safety
 * `cfg` must be valid.
 */
enum CmasepStatus cmasep_config_set_run(struct CmasepConfig *cfg, uint64_t seed, size_t trials);

/**
 * Runs the experiment and returns the per-trial and summary CSV tables as
 * strings to be released with [`cmasep_string_free`].
 *
 * # Safety
 * `cfg` must be valid; both output pointers must be valid.
 */
enum CmasepStatus cmasep_run_experiment(const struct CmasepConfig *cfg,
                                        char **trials_out,
                                        char **summary_out);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void cmasep_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CMASEP_H */
