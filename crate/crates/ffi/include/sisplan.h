#ifndef SISPLAN_H
#define SISPLAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SisplanStatus {
  SISPLAN_STATUS_OK = 0,
  SISPLAN_STATUS_NULL_POINTER = 1,
  SISPLAN_STATUS_INVALID_UTF8 = 2,
  SISPLAN_STATUS_CONFIG = 3,
  SISPLAN_STATUS_IO = 4,
  SISPLAN_STATUS_RUNTIME = 5,
  SISPLAN_STATUS_PANIC = 6,
} SisplanStatus;

// Opaque planner handle.
typedef struct SisplanPlanner SisplanPlanner;

// Summary of one episode. Unavailable values are NaN.
typedef struct SisplanEpisodeMetrics {
  uint64_t episode;
  double total_return;
  uint64_t steps;
  double mean_step_time_ms;
  double mean_n_gs;
  double mean_n_ials;
  double mean_lhat;
  double train_loss;
  uint64_t buffer_size;
  bool failed;
} SisplanEpisodeMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a planner from an experiment configuration in TOML form.
// `run_id` selects the random stream under the configured seed, exactly as
// run `run_id` of the command-line experiments. The planner uses the first
// configured lambda. On success `*out` receives a handle to be released with
// `sisplan_planner_free`.
//
// # Safety
// `config_toml` must be a NUL-terminated string and `out` a valid pointer.
enum SisplanStatus sisplan_planner_new(const char *config_toml,
                                       uint64_t run_id,
                                       struct SisplanPlanner **out);

// Releases a planner. Passing NULL is a no-op.
//
// # Safety
// `planner` must come from `sisplan_planner_new` and not be used afterwards.
void sisplan_planner_free(struct SisplanPlanner *planner);

// Plays one real episode, training the predictor afterwards when the mode
// allows it.
//
// # Safety
// `planner` must be a live handle and `out` a valid pointer.
enum SisplanStatus sisplan_planner_run_episode(struct SisplanPlanner *planner,
                                               struct SisplanEpisodeMetrics *out);

// Changes the simulator cost weight used from the next decision on.
//
// # Safety
// `planner` must be a live handle.
enum SisplanStatus sisplan_planner_set_lambda(struct SisplanPlanner *planner, double lambda);

// Number of training sequences collected so far.
//
// # Safety
// `planner` must be a live handle and `out` a valid pointer.
enum SisplanStatus sisplan_planner_buffer_len(struct SisplanPlanner *planner, size_t *out);

// Writes the replay buffer to `path` in the line-oriented buffer format.
//
// # Safety
// `planner` must be a live handle and `path` a NUL-terminated string.
enum SisplanStatus sisplan_planner_export_buffer(struct SisplanPlanner *planner, const char *path);

// Writes the current predictor weights to `path` as JSON. Fails with
// `SISPLAN_STATUS_RUNTIME` if the planner uses a fixed predictor.
//
// # Safety
// `planner` must be a live handle and `path` a NUL-terminated string.
enum SisplanStatus sisplan_planner_save_predictor(struct SisplanPlanner *planner, const char *path);

// Message of the last failed call on this thread, or an empty string. The
// pointer stays valid until the next call into this library on this thread.
const char *sisplan_last_error(void);

// Library version as a static NUL-terminated string.
const char *sisplan_version(void);

// Column header of the metrics CSV, comma separated, as a static string.
const char *sisplan_metrics_csv_header(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SISPLAN_H */
