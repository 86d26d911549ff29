#ifndef RELMAP_H
#define RELMAP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RelmapStatus {
  RELMAP_STATUS_OK = 0,
  RELMAP_STATUS_INVALID_ARGUMENT = 1,
  RELMAP_STATUS_MODEL_DOMAIN = 2,
  RELMAP_STATUS_PARSE = 3,
  RELMAP_STATUS_IO = 4,
  RELMAP_STATUS_CONFIG = 5,
  RELMAP_STATUS_NULL_POINTER = 6,
  RELMAP_STATUS_PANIC = 7,
} RelmapStatus;

typedef enum RelmapMapper {
  RELMAP_MAPPER_RL = 0,
  RELMAP_MAPPER_RANDOM = 1,
  RELMAP_MAPPER_TC_GREEDY = 2,
} RelmapMapper;

typedef enum RelmapMechanism {
  RELMAP_MECHANISM_TC = 0,
  RELMAP_MECHANISM_NBTI = 1,
  RELMAP_MECHANISM_HCI = 2,
  RELMAP_MECHANISM_EM = 3,
  RELMAP_MECHANISM_COMBINED = 4,
} RelmapMechanism;

/**
 * Seed-averaged comparison of several mappers.
 */
typedef struct RelmapComparison RelmapComparison;

/**
 * Simulation configuration.
 */
typedef struct RelmapConfig RelmapConfig;

/**
 * Outcome of one evaluated episode.
 */
typedef struct RelmapReport RelmapReport;

/**
 * Coffin-Manson constants.
 */
typedef struct RelmapTcParams {
  double a_tc;
  double b;
  double t_th;
  double ea_tc;
  double k;
} RelmapTcParams;

/**
 * Lifetimes of one core in years. Infinite values are `INFINITY`.
 */
typedef struct RelmapCoreMttf {
  double tc;
  double nbti;
  double hci;
  double em;
  double combined;
  double combined_finite;
  bool infinite_dominated;
} RelmapCoreMttf;

typedef struct RelmapSystemMttf {
  double tc;
  double nbti;
  double hci;
  double em;
  double combined;
  size_t tc_infinite_cores;
} RelmapSystemMttf;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *relmap_last_error_message(void);

const char *relmap_version(void);

struct RelmapTcParams relmap_tc_params_tabulated(void);

/**
 * Cycles to failure for one thermal cycle. A cycle at or below the damage
 * threshold yields `INFINITY` and sets `*damaging` to false.
 *
 * # Safety
 * `params` must point to a valid struct and `out` be writable; `damaging`
 * may be null.
 */
enum RelmapStatus relmap_cycles_to_failure(double amplitude,
                                           double t_max,
                                           const struct RelmapTcParams *params,
                                           double *out,
                                           bool *damaging);

/**
 * Density-based binning of `n` core temperatures. `labels` receives one bin
 * index per core, or -1 for noise cores; `bins` the number of dense bins.
 *
 * # Safety
 * `temps` must hold `n` values and `labels` room for `n`.
 */
enum RelmapStatus relmap_pack_bins(const double *temps,
                                   size_t n,
                                   double epsilon,
                                   size_t min_pts,
                                   int64_t *labels,
                                   size_t *bins);

/**
 * # Safety
 * `out` must be writable.
 */
enum RelmapStatus relmap_config_default(struct RelmapConfig **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum RelmapStatus relmap_config_load(const char *path, struct RelmapConfig **out);

/**
 * Parses TOML text into a configuration.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` writable.
 */
enum RelmapStatus relmap_config_parse(const char *text, struct RelmapConfig **out);

/**
 * Sets one dotted key such as `clustering.epsilon`. The configuration is
 * left unchanged on failure.
 *
 * # Safety
 * `cfg` must come from this library; `key` and `value` must be
 * NUL-terminated strings.
 */
enum RelmapStatus relmap_config_set(struct RelmapConfig *cfg, const char *key, const char *value);

/**
 * Writes the configuration as TOML. See [`relmap_report_decisions_csv`] for
 * the buffer protocol.
 *
 * # Safety
 * `cfg` must come from this library; `buf` must hold `len` bytes.
 */
enum RelmapStatus relmap_config_to_toml(const struct RelmapConfig *cfg,
                                        char *buf,
                                        size_t len,
                                        size_t *needed);

/**
 * # Safety
 * `cfg` must come from this library or be null.
 */
void relmap_config_free(struct RelmapConfig *cfg);

/**
 * Builds the environment for `seed` and runs one episode of `mapper`. The
 * RL mapper trains for `episodes` episodes first and is then evaluated with
 * frozen tables.
 *
 * # Safety
 * `cfg` must come from this library and `out` be writable.
 */
enum RelmapStatus relmap_simulate(const struct RelmapConfig *cfg,
                                  uint64_t seed,
                                  enum RelmapMapper mapper,
                                  size_t episodes,
                                  struct RelmapReport **out);

/**
 * Number of cores, or 0 for a null handle.
 *
 * # Safety
 * `report` must come from this library or be null.
 */
size_t relmap_report_core_count(const struct RelmapReport *report);

/**
 * # Safety
 * `report` must come from this library and `out` be writable.
 */
enum RelmapStatus relmap_report_core_mttf(const struct RelmapReport *report,
                                          size_t core,
                                          struct RelmapCoreMttf *out);

/**
 * # Safety
 * `report` must come from this library and `out` be writable.
 */
enum RelmapStatus relmap_report_system_mttf(const struct RelmapReport *report,
                                            struct RelmapSystemMttf *out);

/**
 * Max minus min core temperature at the end of the episode, kelvin. NaN
 * for a null handle.
 *
 * # Safety
 * `report` must come from this library or be null.
 */
double relmap_report_final_spread(const struct RelmapReport *report);

/**
 * Copies the final core temperatures (kelvin, row-major) into `buf`.
 *
 * # Safety
 * `report` must come from this library; `buf` must hold `len` values.
 */
enum RelmapStatus relmap_report_final_temps(const struct RelmapReport *report,
                                            double *buf,
                                            size_t len);

/**
 * Tasks dispatched and completed during the episode.
 *
 * # Safety
 * `report` must come from this library; the outputs must be writable or null.
 */
enum RelmapStatus relmap_report_task_counts(const struct RelmapReport *report,
                                            size_t *dispatched,
                                            size_t *completed);

/**
 * Writes the mapping decisions as CSV text. When `buf` is null or shorter
 * than the text, returns `InvalidArgument` and stores the required size
 * (including the NUL) in `needed`.
 *
 * # Safety
 * `report` must come from this library; `buf` must hold `len` bytes.
 */
enum RelmapStatus relmap_report_decisions_csv(const struct RelmapReport *report,
                                              char *buf,
                                              size_t len,
                                              size_t *needed);

/**
 * Writes `mttf_report.csv`, `decisions.csv` and `temperatures.csv` into
 * `dir`, creating it if needed.
 *
 * # Safety
 * `report` must come from this library; `dir` must be NUL-terminated.
 */
enum RelmapStatus relmap_report_write(const struct RelmapReport *report, const char *dir);

/**
 * # Safety
 * `report` must come from this library or be null.
 */
void relmap_report_free(struct RelmapReport *report);

/**
 * Runs every mapper on every seed with the configured episode count.
 *
 * # Safety
 * `mappers` must hold `n_mappers` values, `seeds` `n_seeds` values, and
 * `out` be writable.
 */
enum RelmapStatus relmap_compare(const struct RelmapConfig *cfg,
                                 const enum RelmapMapper *mappers,
                                 size_t n_mappers,
                                 const uint64_t *seeds,
                                 size_t n_seeds,
                                 struct RelmapComparison **out);

/**
 * Seed-averaged system MTTF in years of the mapper at `index`, in the order
 * passed to [`relmap_compare`].
 *
 * # Safety
 * `cmp` must come from this library and `out` be writable.
 */
enum RelmapStatus relmap_comparison_mttf(const struct RelmapComparison *cmp,
                                         size_t index,
                                         enum RelmapMechanism mechanism_,
                                         double *out);

/**
 * Seed-averaged final temperature spread of the mapper at `index`, kelvin.
 *
 * # Safety
 * `cmp` must come from this library and `out` be writable.
 */
enum RelmapStatus relmap_comparison_final_spread(const struct RelmapComparison *cmp,
                                                 size_t index,
                                                 double *out);

/**
 * The full comparison as JSON. Same buffer protocol as
 * [`relmap_report_decisions_csv`].
 *
 * # Safety
 * `cmp` must come from this library; `buf` must hold `len` bytes.
 */
enum RelmapStatus relmap_comparison_to_json(const struct RelmapComparison *cmp,
                                            char *buf,
                                            size_t len,
                                            size_t *needed);

/**
 * # Safety
 * `cmp` must come from this library or be null.
 */
void relmap_comparison_free(struct RelmapComparison *cmp);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RELMAP_H */
