#ifndef DOUBLETOPT_H
#define DOUBLETOPT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum DtStatus {
  DT_STATUS_OK = 0,
  /**
   * A required pointer was null.
   */
  DT_STATUS_NULL_ARGUMENT = 1,
  /**
   * A value is out of its domain, e.g. a negative thickness.
   */
  DT_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Reading or writing a file failed.
   */
  DT_STATUS_IO = 3,
  /**
   * An input file is malformed.
   */
  DT_STATUS_PARSE = 4,
  /**
   * An input record breaks a value rule.
   */
  DT_STATUS_VALIDATION = 5,
  /**
   * Coordinates look geographic rather than projected.
   */
  DT_STATUS_CRS = 6,
  /**
   * The run itself failed; per-block failures do not count.
   */
  DT_STATUS_RUN = 7,
  /**
   * An index is past the end.
   */
  DT_STATUS_OUT_OF_RANGE = 8,
  /**
   * An internal error; the library state is unchanged.
   */
  DT_STATUS_PANIC = 9,
} DtStatus;

/**
 * Opaque groundwater field.
 */
typedef struct DtField DtField;

/**
 * Opaque set of block geometries.
 */
typedef struct DtGeometry DtGeometry;

/**
 * Opaque result of a run over all blocks and scenarios.
 */
typedef struct DtRun DtRun;

/**
 * Groundwater parameters at one location.
 */
typedef struct DtHydroSample {
  /**
   * Hydraulic conductivity, m/s.
   */
  double conductivity;
  /**
   * Saturated thickness, m.
   */
  double thickness;
  double natural_level;
  double max_level;
  double gradient;
  /**
   * Darcy velocity, m/s; negative or NaN derives it from K and gradient.
   */
  double darcy_velocity;
  /**
   * Flow direction, degrees clockwise from grid north.
   */
  double flow_azimuth_deg;
} DtHydroSample;

/**
 * Threshold rates of one location, m³/s, and breakthrough parameter, m²/s.
 */
typedef struct DtTapLimits {
  double q_d_m3_s;
  double q_f_m3_s;
  double alpha_m2_s;
} DtTapLimits;

/**
 * Preparation and solver settings of a run.
 */
typedef struct DtOptions {
  double buffer_m;
  double initial_spacing_m;
  double spacing_step_m;
  size_t max_wells;
  double min_well_rate_l_s;
  uint64_t max_nodes;
  double max_time_s;
  /**
   * 0 uses every core.
   */
  size_t workers;
} DtOptions;

typedef struct DtScenario {
  double q_min_l_s;
  double r_delta;
  double delta_min_m;
} DtScenario;

/**
 * Aggregate figures of one scenario.
 */
typedef struct DtReport {
  double q_min_l_s;
  double r_delta;
  size_t total_doublets;
  size_t max_doublets_per_block;
  double mean_doublets_per_block;
  double avg_max_doublet_rate_l_s;
  double mean_doublet_rate_l_s;
  size_t blocks_with;
  size_t blocks_without;
  double total_rate_l_s;
  double max_block_rate_l_s;
  double mean_block_rate_l_s;
  /**
   * Blocks that failed and are not part of the figures above.
   */
  size_t blocks_failed;
} DtReport;

/**
 * Outcome of one block under one scenario. Strings are owned by the run.
 */
typedef struct DtBlockResult {
  const char *block_id;
  /**
   * 1 if solved, 0 if the block failed.
   */
  int32_t solved;
  size_t n_doublet;
  double q_block_l_s;
  double max_doublet_l_s;
  /**
   * 1 if optimality was proven within the budget.
   */
  int32_t proven_optimal;
  double gap;
  uint64_t node_count;
  /**
   * Failure reason, empty for solved blocks.
   */
  const char *message;
} DtBlockResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, empty if none. The
 * pointer stays valid until the next failing call on this thread.
 */
const char *dt_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *dt_version(void);

/**
 * Evaluate the analytical pumping limits of a sample.
 *
 * # Safety
 * `sample` and `out` must be valid pointers or null.
 */
enum DtStatus dt_tap_limits(const struct DtHydroSample *sample, struct DtTapLimits *out);

/**
 * Drawdown threshold rate `0.195 K B²`, m³/s.
 *
 * # Safety
 * `out` must be a valid pointer or null.
 */
enum DtStatus dt_drawdown_limit(double conductivity, double thickness, double *out);

/**
 * Upconing threshold rate for `headroom = h_max - h_n`, m³/s.
 *
 * # Safety
 * `out` must be a valid pointer or null.
 */
enum DtStatus dt_upconing_limit(double headroom,
                                double conductivity,
                                double thickness,
                                double gradient,
                                double *out);

/**
 * Breakthrough parameter `(pi / 1.96) v_D B`, m²/s.
 *
 * # Safety
 * `out` must be a valid pointer or null.
 */
enum DtStatus dt_breakthrough_param(double darcy_velocity, double thickness, double *out);

/**
 * Read a field table.
 *
 * # Safety
 * `path` must be a NUL-terminated string or null; `out` a valid pointer or null.
 */
enum DtStatus dt_field_read(const char *path, struct DtField **out);

/**
 * A field with the same sample everywhere.
 *
 * # Safety
 * `sample` and `out` must be valid pointers or null.
 */
enum DtStatus dt_field_uniform(const struct DtHydroSample *sample, struct DtField **out);

/**
 * Number of samples in a field, 0 for null.
 *
 * # Safety
 * `field` must come from this library or be null.
 */
size_t dt_field_len(const struct DtField *field);

/**
 * # Safety
 * `field` must come from this library and not be used afterwards, or be null.
 */
void dt_field_free(struct DtField *field);

/**
 * Read blocks and buildings from a GeoJSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string or null; `out` a valid pointer or null.
 */
enum DtStatus dt_geometry_read(const char *path, struct DtGeometry **out);

/**
 * Number of blocks read, including rejected ones; 0 for null.
 *
 * # Safety
 * `geometry` must come from this library or be null.
 */
size_t dt_geometry_block_count(const struct DtGeometry *geometry);

/**
 * # Safety
 * `geometry` must come from this library and not be used afterwards, or be null.
 */
void dt_geometry_free(struct DtGeometry *geometry);

/**
 * Fill `out` with the default settings.
 *
 * # Safety
 * `out` must be a valid pointer or null.
 */
enum DtStatus dt_options_default(struct DtOptions *out);

/**
 * Prepare, solve and audit every block under each scenario.
 *
 * Blocks that fail are recorded in the result, not reported as an error.
 *
 * # Safety
 * Handles must come from this library; `scenarios` must point to `n`
 * values; `options` may be null for defaults; `out` must be valid or null.
 */
enum DtStatus dt_run(const struct DtGeometry *geometry,
                     const struct DtField *field,
                     const struct DtScenario *scenarios,
                     size_t n_scenarios,
                     const struct DtOptions *options,
                     struct DtRun **out);

/**
 * Number of scenarios in a run, 0 for null.
 *
 * # Safety
 * `run` must come from this library or be null.
 */
size_t dt_run_scenario_count(const struct DtRun *run);

/**
 * Number of blocks in a run, failed ones included; 0 for null.
 *
 * # Safety
 * `run` must come from this library or be null.
 */
size_t dt_run_block_count(const struct DtRun *run);

/**
 * # Safety
 * `run` must come from this library or be null; `out` valid or null.
 */
enum DtStatus dt_run_report(const struct DtRun *run, size_t scenario, struct DtReport *out);

/**
 * # Safety
 * `run` must come from this library or be null; `out` valid or null.
 */
enum DtStatus dt_run_block(const struct DtRun *run,
                           size_t scenario,
                           size_t block,
                           struct DtBlockResult *out);

/**
 * Write all result files of a run into `dir`.
 *
 * # Safety
 * `run` must come from this library or be null; `dir` NUL-terminated or null.
 */
enum DtStatus dt_run_write(const struct DtRun *run, const char *dir, bool timings);

/**
 * # Safety
 * `run` must come from this library and not be used afterwards, or be null.
 */
void dt_run_free(struct DtRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DOUBLETOPT_H */
