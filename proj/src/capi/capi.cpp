// SPDX-License-Identifier: Apache-2.0
//
// extern "C" shim over the C++ core. Exceptions stop here and turn into
// status codes plus a thread-local error message.
#include "tinyquant/tinyquant.h"

#include <cstdlib>
#include <cstring>
#include <sstream>
#include <string>

#include "core/common.hpp"
#include "core/pipeline.hpp"

using tinyquant::Error;
namespace pipeline = tinyquant::pipeline;

struct tq_session {
  std::string model_text;
  std::string weights_text;
  std::string dataset_text;
  pipeline::Options options;
  std::string report_json;
  bool compiled = false;
};

namespace {

thread_local std::string g_last_error = "";

tq_status fail(tq_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

tq_status status_for(const Error& e) {
  const std::string& phase = e.phase();
  std::string message = e.what();
  if (!phase.empty()) message = "[" + phase + "] " + message;
  if (phase == "parse" || phase == "shapes") return fail(TQ_ERR_PARSE, message);
  if (phase == "io" || phase == "weights" || phase == "dataset" || phase == "trace")
    return fail(TQ_ERR_IO, message);
  if (phase == "options") return fail(TQ_ERR_INVALID_ARGUMENT, message);
  if (phase == "codegen") return fail(TQ_ERR_UNSUPPORTED, message);
  return fail(TQ_ERR_INTERNAL, message);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoi(item));
  }
  if (out.empty()) throw Error("expected a comma-separated integer list", "options");
  return out;
}

tq_status load_text(tq_session* session, std::string tq_session::* field, const char* text) {
  if (!session || !text) return fail(TQ_ERR_INVALID_ARGUMENT, "null argument");
  session->*field = text;
  session->compiled = false;
  return TQ_OK;
}

tq_status load_file(tq_session* session, std::string tq_session::* field, const char* path) {
  if (!session || !path) return fail(TQ_ERR_INVALID_ARGUMENT, "null argument");
  try {
    session->*field = pipeline::read_file(path);
    session->compiled = false;
    return TQ_OK;
  } catch (const Error& e) {
    return status_for(e);
  }
}

tq_status plan_common(const std::string& trace_text, int coarsen, double timeout_secs,
                      const char* out_dir, char** out) {
  try {
    const auto result =
        pipeline::plan_trace(trace_text, coarsen, timeout_secs, out_dir ? out_dir : "");
    *out = dup_string(result.dump(2) + "\n");
    return TQ_OK;
  } catch (const Error& e) {
    return status_for(e);
  } catch (const std::exception& e) {
    return fail(TQ_ERR_INTERNAL, e.what());
  }
}

}  // namespace

extern "C" {

const char* tq_version(void) { return "1.0.0"; }

const char* tq_last_error(void) { return g_last_error.c_str(); }

tq_status tq_session_new(tq_session** out) {
  if (!out) return fail(TQ_ERR_INVALID_ARGUMENT, "null output pointer");
  *out = new tq_session();
  return TQ_OK;
}

void tq_session_free(tq_session* session) { delete session; }

tq_status tq_load_model_file(tq_session* s, const char* path) {
  return load_file(s, &tq_session::model_text, path);
}
tq_status tq_load_model_text(tq_session* s, const char* text) {
  return load_text(s, &tq_session::model_text, text);
}
tq_status tq_load_weights_file(tq_session* s, const char* path) {
  return load_file(s, &tq_session::weights_text, path);
}
tq_status tq_load_weights_text(tq_session* s, const char* text) {
  return load_text(s, &tq_session::weights_text, text);
}
tq_status tq_load_dataset_file(tq_session* s, const char* path) {
  return load_file(s, &tq_session::dataset_text, path);
}
tq_status tq_load_dataset_text(tq_session* s, const char* text) {
  return load_text(s, &tq_session::dataset_text, text);
}

tq_status tq_set_option(tq_session* session, const char* key, const char* value) {
  if (!session || !key || !value) return fail(TQ_ERR_INVALID_ARGUMENT, "null argument");
  const std::string k = key;
  const std::string v = value;
  try {
    pipeline::Options& o = session->options;
    if (k == "rep") o.rep = v;
    else if (k == "low") o.low_bits = std::stoi(v);
    else if (k == "high") o.high_bits = std::stoi(v);
    else if (k == "es-low") o.es_low = parse_int_list(v);
    else if (k == "es-high") o.es_high = parse_int_list(v);
    else if (k == "mem-limit") o.memory_limit = std::stod(v);
    else if (k == "soft-limit") o.soft_limit = std::stod(v);
    else if (k == "coarsen") o.coarsen = std::stoi(v);
    else if (k == "timeout-secs") o.timeout_secs = std::stod(v);
    else if (k == "planner") {
      if (v != "exact" && v != "firstfit")
        return fail(TQ_ERR_INVALID_ARGUMENT, "planner must be 'exact' or 'firstfit'");
      o.planner = v;
    } else if (k == "auto-pair") o.auto_pair = v == "1" || v == "true";
    else if (k == "pair-candidates") o.pair_candidates = parse_int_list(v);
    else return fail(TQ_ERR_INVALID_ARGUMENT, "unknown option '" + k + "'");
    return TQ_OK;
  } catch (const Error& e) {
    return status_for(e);
  } catch (const std::exception& e) {
    return fail(TQ_ERR_INVALID_ARGUMENT,
                std::string("bad value for option '") + key + "': " + e.what());
  }
}

tq_status tq_compile(tq_session* session, const char* out_dir) {
  if (!session) return fail(TQ_ERR_INVALID_ARGUMENT, "null session");
  try {
    const pipeline::CompileOutcome outcome = pipeline::compile(
        session->model_text, session->weights_text, session->dataset_text, session->options,
        out_dir ? out_dir : "");
    session->report_json = outcome.report.dump(2) + "\n";
    session->compiled = true;
    if (!outcome.budget_satisfied)
      return fail(TQ_ERR_BUDGET_EXCEEDED,
                  "planned RAM exceeds the memory limit; artifacts were still written");
    return TQ_OK;
  } catch (const Error& e) {
    return status_for(e);
  } catch (const std::exception& e) {
    return fail(TQ_ERR_INTERNAL, e.what());
  }
}

tq_status tq_report_json(tq_session* session, char** out) {
  if (!session || !out) return fail(TQ_ERR_INVALID_ARGUMENT, "null argument");
  if (!session->compiled)
    return fail(TQ_ERR_INVALID_ARGUMENT, "no compile result; call tq_compile");
  *out = dup_string(session->report_json);
  return TQ_OK;
}

tq_status tq_eval(tq_session* session, const char* rep, int bits, int es, char** out) {
  if (!session || !rep || !out) return fail(TQ_ERR_INVALID_ARGUMENT, "null argument");
  try {
    const auto result = pipeline::eval(session->model_text, session->weights_text,
                                       session->dataset_text, rep, bits, es);
    *out = dup_string(result.dump(2) + "\n");
    return TQ_OK;
  } catch (const Error& e) {
    return status_for(e);
  } catch (const std::exception& e) {
    return fail(TQ_ERR_INTERNAL, e.what());
  }
}

tq_status tq_plan_trace_file(const char* path, int coarsen, double timeout_secs,
                             const char* out_dir, char** out) {
  if (!path || !out) return fail(TQ_ERR_INVALID_ARGUMENT, "null argument");
  try {
    return plan_common(pipeline::read_file(path), coarsen, timeout_secs, out_dir, out);
  } catch (const Error& e) {
    return status_for(e);
  }
}

tq_status tq_plan_trace_text(const char* json_text, int coarsen, double timeout_secs,
                             const char* out_dir, char** out) {
  if (!json_text || !out) return fail(TQ_ERR_INVALID_ARGUMENT, "null argument");
  return plan_common(json_text, coarsen, timeout_secs, out_dir, out);
}

tq_status tq_demo_text(const char* rep, double mem_limit, double soft_limit, char** out) {
  if (!rep || !out) return fail(TQ_ERR_INVALID_ARGUMENT, "null argument");
  try {
    *out = dup_string(pipeline::demo_text(rep, mem_limit, soft_limit));
    return TQ_OK;
  } catch (const Error& e) {
    return status_for(e);
  } catch (const std::exception& e) {
    return fail(TQ_ERR_INTERNAL, e.what());
  }
}

void tq_string_free(char* s) { std::free(s); }

}  // extern "C"
