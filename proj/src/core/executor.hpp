// SPDX-License-Identifier: Apache-2.0
//
// Reference executor. Runs a program over a dataset under a representation,
// its parameters and a bitwidth assignment, with decode -> double-precision
// compute -> re-encode semantics per destination tensor. A separate integer
// mode mirrors the emitted fixed-point C pipeline bit for bit.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "core/numrep.hpp"
#include "core/program.hpp"

namespace tinyquant::exec {

// Tensor name -> bitwidth. Every tensor of the program appears exactly once.
using Assignment = std::map<std::string, int>;

struct Weights {
  std::map<std::string, std::vector<double>> by_key;  // flat, row-major
};

Weights parse_weights(const std::string& json_text);

struct Dataset {
  std::vector<std::vector<double>> inputs;  // flat, row-major per sample
  std::vector<int> labels;                  // empty when unlabeled
  bool has_labels() const { return !labels.empty(); }

  // Input-free programs run exactly one implicit sample.
  size_t sample_count(const ir::Program& program) const;
};

Dataset parse_dataset(const std::string& json_text);

// Per-tensor values observed at each tensor's definition, concatenated in
// dataset order: entry count = cardinality x samples.
struct ValueMap {
  std::map<std::string, std::vector<double>> values;
};

struct RunResult {
  std::vector<std::vector<double>> outputs;  // per sample
  std::vector<char> valid;                   // false: NaR/NaN reached the output
  bool classifier = false;                   // output tensor is an argmax label
};

struct RunSpec {
  const ir::Program* program = nullptr;
  const std::vector<ir::Instruction>* instrs = nullptr;
  const Weights* weights = nullptr;
  const Dataset* dataset = nullptr;
  numrep::ParamSet params;            // Rep::Float runs the plain reference
  const Assignment* rho = nullptr;    // ignored for the float reference
  bool log_values = false;
};

RunResult run(const RunSpec& spec, ValueMap* log = nullptr);

// Fraction of samples whose predicted label matches; invalid samples count
// as wrong.
double accuracy(const RunResult& result, const std::vector<int>& labels);

// Classifiers: number of label mismatches. Otherwise: mean absolute error
// of the outputs. Invalid samples count as one disagreement (or as the
// worst element error available).
double disagreement(const RunResult& result, const RunResult& reference);

// Exploration metric, higher is better: classification accuracy when the
// dataset is labeled, otherwise negated mean absolute error against the
// float reference outputs.
double metric_against(const RunResult& result, const Dataset& dataset, const RunResult& float_ref);

// ---------------------------------------------------------------------------
// Integer fixed-point mode (differential twin of the emitted C code).

struct IntRunResult {
  std::vector<std::vector<std::int64_t>> outputs;  // int32-valued words
};

IntRunResult run_fixed_integer(const ir::Program& program,
                               const std::vector<ir::Instruction>& instrs,
                               const Weights& weights, const Dataset& dataset,
                               const numrep::ParamSet& params, const Assignment& rho);

// Scale used for one tensor in integer mode and in emitted code.
int fixed_scale_of(const numrep::ParamSet& params, const std::string& tensor, int bits);

// Scale for a scalarmul constant (always a 16-bit encoding).
int scalar_const_scale(double value);

}  // namespace tinyquant::exec
