#ifndef DISTCACHE_H
#define DISTCACHE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DcStatus {
  DC_STATUS_OK = 0,
  DC_STATUS_NULL_POINTER = 1,
  DC_STATUS_INVALID_ARGUMENT = 2,
  DC_STATUS_INDEX = 3,
  DC_STATUS_IO = 4,
  DC_STATUS_PARSE = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  DC_STATUS_INTERNAL = 6,
} DcStatus;

typedef struct DcCatalog DcCatalog;

/**
 * Per-slot metrics of one simulation run.
 */
typedef struct DcResults DcResults;

typedef struct DcTrace DcTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next `dc_*` call on the same thread.
 */
const char *dc_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dc_version(void);

/**
 * Catalog from `n` file sizes and a cache budget.
 *
 * # Safety
 * `sizes` must point to `n` readable doubles; `out_catalog` must be writable.
 */
enum DcStatus dc_catalog_new(const double *sizes,
                             size_t n,
                             double budget,
                             struct DcCatalog **out_catalog);

/**
 * # Safety
 * `catalog` must be null or a pointer from this library not yet freed.
 */
void dc_catalog_free(struct DcCatalog *catalog);

/**
 * Number of files, or 0 for null.
 *
 * # Safety
 * `catalog` must be null or a live handle.
 */
size_t dc_catalog_n_files(const struct DcCatalog *catalog);

/**
 * Cache budget, or NaN for null.
 *
 * # Safety
 * `catalog` must be null or a live handle.
 */
double dc_catalog_budget(const struct DcCatalog *catalog);

/**
 * Loads a catalog/trace CSV pair. `topology` uses the CLI syntax (`five-ring`,
 * `ring:5`, ...); `n_slots` 0 infers the slot count from the file.
 *
 * # Safety
 * String arguments must be NUL-terminated; out pointers must be writable.
 */
enum DcStatus dc_trace_load(const char *catalog_path,
                            const char *trace_path,
                            const char *topology,
                            size_t n_slots,
                            double cache_fraction,
                            struct DcCatalog **out_catalog,
                            struct DcTrace **out_trace);

/**
 * Synthetic regime-switching Zipf trace over `catalog`.
 *
 * # Safety
 * `catalog` must be a live handle; `topology` NUL-terminated; `out_trace`
 * writable.
 */
enum DcStatus dc_trace_synthetic(const struct DcCatalog *catalog,
                                 const char *topology,
                                 size_t n_slots,
                                 double zipf_exponent,
                                 size_t n_regimes,
                                 size_t regime_length,
                                 double cross_sbs_mixing,
                                 uint64_t requests_per_slot,
                                 uint64_t seed,
                                 struct DcTrace **out_trace);

/**
 * # Safety
 * `trace` must be null or a live handle.
 */
void dc_trace_free(struct DcTrace *trace);

/**
 * # Safety
 * `trace` must be null or a live handle.
 */
size_t dc_trace_n_slots(const struct DcTrace *trace);

/**
 * # Safety
 * `trace` must be null or a live handle.
 */
size_t dc_trace_n_sbs(const struct DcTrace *trace);

/**
 * Copies the demand vector of sBS `sbs` in slot `slot` into `out` (length
 * `n`, which must equal the number of files).
 *
 * # Safety
 * `trace` must be a live handle; `out` must hold `n` doubles.
 */
enum DcStatus dc_trace_demand(const struct DcTrace *trace,
                              size_t slot,
                              size_t sbs,
                              double *out_demand,
                              size_t n);

/**
 * Best single-slot placement for `demand`, written to `out_fractions`.
 *
 * # Safety
 * `demand` and `out_fractions` must each hold `n` doubles.
 */
enum DcStatus dc_per_slot_optimal(const struct DcCatalog *catalog,
                                  const double *demand,
                                  size_t n,
                                  double *out_fractions);

/**
 * Simulates `policy` (a policy name such as `proposed` or `lrfu`) over the
 * whole trace. `config_toml` may be null for defaults or hold simulation
 * settings in the `[sim]` table layout of the CLI config, without the
 * `[sim]` header.
 *
 * # Safety
 * Handles must be live; strings NUL-terminated or null where allowed.
 */
enum DcStatus dc_simulate(const struct DcTrace *trace,
                          const struct DcCatalog *catalog,
                          const char *policy,
                          const char *config_toml,
                          struct DcResults **out_results);

/**
 * # Safety
 * `results` must be null or a live handle.
 */
void dc_results_free(struct DcResults *results);

/**
 * Number of (slot, sBS) rows.
 *
 * # Safety
 * `results` must be null or a live handle.
 */
size_t dc_results_n_rows(const struct DcResults *results);

/**
 * Cumulative hit of sBS `sbs` over all slots.
 *
 * # Safety
 * `results` must be a live handle; `out_hit` writable.
 */
enum DcStatus dc_results_total_hit(const struct DcResults *results, size_t sbs, double *out_hit);

/**
 * Per-row hits in (slot, sBS) order; `n` must equal the row count.
 *
 * # Safety
 * `results` must be a live handle; `out_hits` must hold `n` doubles.
 */
enum DcStatus dc_results_hits(const struct DcResults *results, double *out_hits, size_t n);

/**
 * Writes the metrics CSV to `path`.
 *
 * # Safety
 * `results` must be a live handle; `path` NUL-terminated.
 */
enum DcStatus dc_results_write_csv(const struct DcResults *results, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DISTCACHE_H */
