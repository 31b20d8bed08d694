/* SPDX-License-Identifier: Apache-2.0
 *
 * tinyquant public C API.
 *
 * A session owns one model / weights / dataset triple plus compile options.
 * All functions return TQ_OK or an error code; tq_last_error() describes the
 * most recent failure on the calling thread. Strings returned through char**
 * are heap-allocated and must be released with tq_string_free().
 */
#ifndef TINYQUANT_TINYQUANT_H_
#define TINYQUANT_TINYQUANT_H_

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tq_status {
  TQ_OK = 0,
  TQ_ERR_INVALID_ARGUMENT = 1,
  TQ_ERR_IO = 2,
  TQ_ERR_PARSE = 3,
  TQ_ERR_UNSUPPORTED = 4,
  TQ_ERR_BUDGET_EXCEEDED = 5, /* compile finished but the plan misses the RAM budget */
  TQ_ERR_INTERNAL = 6
} tq_status;

typedef struct tq_session tq_session;

const char *tq_version(void);

/* Message for the most recent failing call on this thread; never NULL. */
const char *tq_last_error(void);

tq_status tq_session_new(tq_session **out);
void tq_session_free(tq_session *session);

tq_status tq_load_model_file(tq_session *session, const char *path);
tq_status tq_load_model_text(tq_session *session, const char *text);
tq_status tq_load_weights_file(tq_session *session, const char *path);
tq_status tq_load_weights_text(tq_session *session, const char *json_text);
tq_status tq_load_dataset_file(tq_session *session, const char *path);
tq_status tq_load_dataset_text(tq_session *session, const char *json_text);

/* Options (value is parsed from the string):
 *   rep            fixed | posit | zeroskew | truncfloat
 *   low, high      bitwidths, low < high
 *   es-low, es-high  comma-separated posit es candidates (e.g. "0,2")
 *   mem-limit      RAM budget in bytes
 *   soft-limit     soft limit factor (> 0)
 *   coarsen        planner coarsening constant (>= 1)
 *   timeout-secs   exact-planner timeout
 *   planner        exact | firstfit (usage evaluator during exploration)
 *   auto-pair      0 | 1 (select the bitwidth pair from homogeneous runs)
 *   pair-candidates  comma-separated bitwidths for auto-pair
 */
tq_status tq_set_option(tq_session *session, const char *key, const char *value);

/* Runs the whole pipeline. If out_dir is non-NULL and non-empty, writes
 * report.json, ledger.jsonl, memory_map.json, occupancy.txt, model.c (for
 * fixed point) and timings.json there. */
tq_status tq_compile(tq_session *session, const char *out_dir);

/* JSON report of the last successful tq_compile on this session. */
tq_status tq_report_json(tq_session *session, char **out);

/* One homogeneous evaluation (rep "float" runs the double-precision
 * reference); returns a JSON document with the metric and outputs. */
tq_status tq_eval(tq_session *session, const char *rep, int bits, int es, char **out);

/* Planner-only mode over a live-range trace file
 * {"tensors":[{"name","size_bytes","start","end"},...]}. out_dir may be
 * NULL. Returns a JSON document with first-fit and exact peaks. */
tq_status tq_plan_trace_file(const char *path, int coarsen, double timeout_secs,
                             const char *out_dir, char **out);
tq_status tq_plan_trace_text(const char *json_text, int coarsen, double timeout_secs,
                             const char *out_dir, char **out);

/* The worked-example walkthrough, regenerated live. */
tq_status tq_demo_text(const char *rep, double mem_limit, double soft_limit, char **out);

void tq_string_free(char *s);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* TINYQUANT_TINYQUANT_H_ */
