// SPDX-License-Identifier: Apache-2.0
//
// Three-stage bitwidth exploration: representation preprocessing (posit es
// selection, per-tensor range profiling), heat-map generation from low/high
// value maps, and the cumulative promotion search under a memory budget.
// Also the homogeneous-accuracy bitwidth-pair selector and call counters.
#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "core/executor.hpp"
#include "core/memplan.hpp"

namespace tinyquant::explore {

struct Config {
  int low_bits = 8;
  int high_bits = 16;
  double memory_limit = 0.0;  // bytes
  double soft_limit = 1.0;
  std::vector<int> es_low{0, 2};   // posit es candidates per bitwidth
  std::vector<int> es_high{1, 2};
  bool exact_in_loop = false;  // plan with the exact solver during exploration
  int coarsen = 1;
  double timeout_secs = 7200.0;
};

struct Stats {
  long long codegen_calls = 0;    // memory plans of candidate assignments
  long long execution_calls = 0;  // full-dataset executions, all categories
  long long reference_runs = 0;
  long long es_selection_runs = 0;
  long long pair_selection_runs = 0;
  long long exploration_runs = 0;  // value maps + promotion stages
};

struct LedgerEntry {
  exec::Assignment rho;
  long long planned_ram = 0;
  double metric = 0.0;
};

struct HeatMap {
  std::map<std::string, double> score;  // promotability per tensor
  std::vector<std::string> order;       // scores descending
};

// Promotability of one tensor: deviation at zero-based rank
// floor(0.95 * (n - 1)) of the ascending elementwise |high - low| list,
// divided by the tensor cardinality.
double promotability(const std::vector<double>& low_values,
                     const std::vector<double>& high_values, int cardinality);

HeatMap create_heat_map(const exec::ValueMap& low_map, const exec::ValueMap& high_map,
                        const std::map<std::string, int>& cardinality);

// The cumulative promotion walk. Visits `order`, promotes each tensor and
// keeps it unless the planned usage exceeds limit x soft. A tensor is
// recorded as overshooting when it had to be reverted, or when keeping it
// raised the planned usage exactly to the threshold.
std::vector<std::string> promote_within_memory_limit(
    exec::Assignment& rho, const std::vector<std::string>& order, double memory_limit,
    double soft_limit, int low_bits, int high_bits,
    const std::function<long long(const exec::Assignment&)>& planned_usage);

// Pure pair-selection rule on measured homogeneous accuracies: the two
// bitwidths whose accuracies straddle the float accuracy, ties to the
// lowest bitwidths; if every option beats float, the two smallest.
std::pair<int, int> choose_pair(std::vector<std::pair<int, double>> accuracy_by_bits,
                                double float_accuracy);

// Drives one exploration over a fixed program / weights / dataset.
class Session {
 public:
  Session(const ir::Program& program, const exec::Weights& weights, const exec::Dataset& dataset,
          numrep::Rep rep, Config config);

  // Float reference run: per-tensor range profiles and the metric baseline.
  void ensure_reference();

  // Stage I. Runs the float reference (profiles every tensor, fixes the
  // metric baseline) and selects posit es values by homogeneous accuracy.
  const numrep::ParamSet& preprocess();

  // Replaces the explored bitwidth pair (after select_bitwidth_pair).
  void set_bitwidth_pair(int low_bits, int high_bits);

  // Stage II inputs: one all-high and one all-low logged run; the all-low
  // accuracy and assignment enter the ledger.
  std::pair<exec::ValueMap, exec::ValueMap> create_value_maps();

  HeatMap create_heat_map_from(const exec::ValueMap& low_map, const exec::ValueMap& high_map);

  // Stage III. Returns the ledger entry with the best metric (ties: fewer
  // high-bitwidth bytes, then earliest).
  exec::Assignment promotion_algorithm(const std::vector<std::string>& order);

  // Convenience: preprocess + value maps + heat map + promotion.
  exec::Assignment explore();

  std::pair<int, int> select_bitwidth_pair(const std::vector<int>& candidates);

  exec::Assignment all_at(int bits) const;
  long long plan_usage(const exec::Assignment& rho);  // one codegen call
  double run_metric(const exec::Assignment& rho, long long* stat_category,
                    exec::ValueMap* log = nullptr);
  // Appends one configuration to the ledger (plans its usage).
  void save_entry(const exec::Assignment& rho, double metric);

  const Stats& stats() const { return stats_; }
  const std::vector<LedgerEntry>& ledger() const { return ledger_; }
  const numrep::ParamSet& params() const { return params_; }
  const exec::RunResult& float_reference() const { return float_ref_; }
  const HeatMap& heat_map() const { return heat_; }
  const std::vector<std::string>& overshooting() const { return overshooting_; }
  double float_metric() const { return float_metric_; }
  const Config& config() const { return config_; }

 private:
  void save(const exec::Assignment& rho, double metric);
  double homogeneous_metric(int bits, long long* stat_category);

  const ir::Program& program_;
  std::vector<ir::Instruction> instrs_;
  const exec::Weights& weights_;
  const exec::Dataset& dataset_;
  numrep::Rep rep_;
  Config config_;
  numrep::ParamSet params_;
  exec::RunResult float_ref_;
  double float_metric_ = 0.0;
  bool reference_ready_ = false;
  bool preprocessed_ = false;
  Stats stats_;
  std::vector<LedgerEntry> ledger_;
  HeatMap heat_;
  std::vector<std::string> overshooting_;
};

}  // namespace tinyquant::explore
