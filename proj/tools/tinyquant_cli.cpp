// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver. Talks to the shared library exclusively through the
// public C API.
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tinyquant/tinyquant.h"

namespace {

int report_failure(tq_status status) {
  std::fprintf(stderr, "error: %s\n", tq_last_error());
  return status == TQ_ERR_BUDGET_EXCEEDED ? 2 : 1;
}

struct SessionGuard {
  tq_session* handle = nullptr;
  ~SessionGuard() { tq_session_free(handle); }
};

struct StringGuard {
  char* value = nullptr;
  ~StringGuard() { tq_string_free(value); }
};

bool set_all(tq_session* s, const std::vector<std::pair<std::string, std::string>>& options) {
  for (const auto& [key, value] : options)
    if (tq_set_option(s, key.c_str(), value.c_str()) != TQ_OK) return false;
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tinyquant: bitwidth exploration, scratch planning and C emission for tiny tensor programs"};
  app.require_subcommand(1);

  std::string model, weights, data, out_dir;
  std::string rep = "posit", es_low = "0,2", es_high = "1,2", planner = "firstfit";
  std::string pair_candidates = "8,9,10,12,16";
  int low = 8, high = 16, coarsen = 1, bits = 16, es = 2;
  double mem_limit = 0.0, soft_limit = 1.0, timeout_secs = 7200.0;
  bool auto_pair = false;

  auto* compile = app.add_subcommand("compile", "full pipeline: explore, plan, emit");
  compile->add_option("--model", model, "DSL model file")->required();
  compile->add_option("--weights", weights, "weights JSON file")->required();
  compile->add_option("--data", data, "dataset JSON file (optional for input-free models)");
  compile->add_option("--rep", rep, "fixed|posit|zeroskew|truncfloat");
  compile->add_option("--low", low, "low bitwidth");
  compile->add_option("--high", high, "high bitwidth");
  compile->add_option("--es-low", es_low, "posit es candidates for the low bitwidth");
  compile->add_option("--es-high", es_high, "posit es candidates for the high bitwidth");
  compile->add_option("--mem-limit", mem_limit, "RAM budget in bytes")->required();
  compile->add_option("--soft-limit", soft_limit, "soft limit factor");
  compile->add_option("--coarsen", coarsen, "planner coarsening constant");
  compile->add_option("--timeout-secs", timeout_secs, "exact planner timeout");
  compile->add_option("--planner", planner, "exploration usage evaluator: exact|firstfit");
  compile->add_flag("--auto-pair", auto_pair, "pick the bitwidth pair from homogeneous runs");
  compile->add_option("--pair-candidates", pair_candidates, "bitwidths for --auto-pair");
  compile->add_option("--out", out_dir, "artifact directory")->required();

  auto* plan = app.add_subcommand("plan", "plan a standalone live-range trace");
  std::string trace;
  plan->add_option("--trace", trace, "live-range trace JSON file")->required();
  plan->add_option("--coarsen", coarsen, "planner coarsening constant");
  plan->add_option("--timeout-secs", timeout_secs, "exact planner timeout");
  plan->add_option("--out", out_dir, "artifact directory (optional)");

  auto* demo = app.add_subcommand("demo", "print the worked-example walkthrough");
  demo->add_option("--rep", rep, "posit|fixed|zeroskew");
  double demo_limit = 3.0;
  demo->add_option("--mem-limit", demo_limit, "RAM budget in bytes");
  demo->add_option("--soft-limit", soft_limit, "soft limit factor");

  auto* eval = app.add_subcommand("eval", "one homogeneous run, print metric and outputs");
  eval->add_option("--model", model, "DSL model file")->required();
  eval->add_option("--weights", weights, "weights JSON file")->required();
  eval->add_option("--data", data, "dataset JSON file");
  eval->add_option("--rep", rep, "float|fixed|posit|zeroskew|truncfloat");
  eval->add_option("--bits", bits, "bitwidth");
  eval->add_option("--es", es, "posit es");

  CLI11_PARSE(app, argc, argv);

  if (compile->parsed()) {
    SessionGuard session;
    if (tq_session_new(&session.handle) != TQ_OK) return report_failure(TQ_ERR_INTERNAL);
    if (tq_load_model_file(session.handle, model.c_str()) != TQ_OK)
      return report_failure(TQ_ERR_IO);
    if (tq_load_weights_file(session.handle, weights.c_str()) != TQ_OK)
      return report_failure(TQ_ERR_IO);
    if (!data.empty() && tq_load_dataset_file(session.handle, data.c_str()) != TQ_OK)
      return report_failure(TQ_ERR_IO);
    if (!set_all(session.handle,
                 {{"rep", rep},
                  {"low", std::to_string(low)},
                  {"high", std::to_string(high)},
                  {"es-low", es_low},
                  {"es-high", es_high},
                  {"mem-limit", std::to_string(mem_limit)},
                  {"soft-limit", std::to_string(soft_limit)},
                  {"coarsen", std::to_string(coarsen)},
                  {"timeout-secs", std::to_string(timeout_secs)},
                  {"planner", planner},
                  {"auto-pair", auto_pair ? "1" : "0"},
                  {"pair-candidates", pair_candidates}}))
      return report_failure(TQ_ERR_INVALID_ARGUMENT);
    const tq_status status = tq_compile(session.handle, out_dir.c_str());
    if (status != TQ_OK && status != TQ_ERR_BUDGET_EXCEEDED) return report_failure(status);
    StringGuard report;
    if (tq_report_json(session.handle, &report.value) == TQ_OK)
      std::fputs(report.value, stdout);
    if (status == TQ_ERR_BUDGET_EXCEEDED) {
      std::fprintf(stderr, "warning: %s\n", tq_last_error());
      return 2;
    }
    return 0;
  }

  if (plan->parsed()) {
    StringGuard result;
    const tq_status status = tq_plan_trace_file(trace.c_str(), coarsen, timeout_secs,
                                                out_dir.empty() ? nullptr : out_dir.c_str(),
                                                &result.value);
    if (status != TQ_OK) return report_failure(status);
    std::fputs(result.value, stdout);
    return 0;
  }

  if (demo->parsed()) {
    StringGuard text;
    const tq_status status = tq_demo_text(rep.c_str(), demo_limit, soft_limit, &text.value);
    if (status != TQ_OK) return report_failure(status);
    std::fputs(text.value, stdout);
    return 0;
  }

  if (eval->parsed()) {
    SessionGuard session;
    if (tq_session_new(&session.handle) != TQ_OK) return report_failure(TQ_ERR_INTERNAL);
    if (tq_load_model_file(session.handle, model.c_str()) != TQ_OK)
      return report_failure(TQ_ERR_IO);
    if (tq_load_weights_file(session.handle, weights.c_str()) != TQ_OK)
      return report_failure(TQ_ERR_IO);
    if (!data.empty() && tq_load_dataset_file(session.handle, data.c_str()) != TQ_OK)
      return report_failure(TQ_ERR_IO);
    StringGuard result;
    const tq_status status = tq_eval(session.handle, rep.c_str(), bits, es, &result.value);
    if (status != TQ_OK) return report_failure(status);
    std::fputs(result.value, stdout);
    return 0;
  }
  return 1;
}
