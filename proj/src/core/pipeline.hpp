// SPDX-License-Identifier: Apache-2.0
//
// Driver that binds parsing, exploration, planning and emission into the
// compile / plan / demo / eval entry points and writes the run artifacts.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "core/explore.hpp"

namespace tinyquant::pipeline {

struct Options {
  std::string rep = "posit";
  int low_bits = 8;
  int high_bits = 16;
  std::vector<int> es_low{0, 2};
  std::vector<int> es_high{1, 2};
  double memory_limit = 0.0;
  double soft_limit = 1.0;
  int coarsen = 1;
  double timeout_secs = 7200.0;
  std::string planner = "firstfit";  // exploration-time usage evaluator: exact|firstfit
  bool auto_pair = false;
  std::vector<int> pair_candidates{8, 9, 10, 12, 16};
};

struct CompileOutcome {
  nlohmann::json report;
  bool budget_satisfied = true;
  std::string c_source;  // empty unless fixed-point
};

// Full pipeline: preprocess, value maps, heat map, promotion, exact plan,
// and (fixed-point) C emission. When out_dir is non-empty the artifacts are
// written there: report.json, ledger.jsonl, memory_map.json, occupancy.txt,
// model.c and timings.json. report.json is byte-deterministic for identical
// inputs; wall-clock numbers go to timings.json only.
CompileOutcome compile(const std::string& model_text, const std::string& weights_text,
                       const std::string& dataset_text, const Options& options,
                       const std::string& out_dir);

// Planner-only mode over a standalone live-range trace.
nlohmann::json plan_trace(const std::string& trace_text, int coarsen, double timeout_secs,
                          const std::string& out_dir);

// The built-in linear-classifier walkthrough; regenerates every table live.
std::string demo_text(const std::string& rep, double memory_limit, double soft_limit);

// One homogeneous run at the given bitwidth (or the float reference).
nlohmann::json eval(const std::string& model_text, const std::string& weights_text,
                    const std::string& dataset_text, const std::string& rep, int bits, int es);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// The worked-example model and weights used by demo and tests.
const char* demo_model_text();
const char* demo_weights_text();

}  // namespace tinyquant::pipeline
