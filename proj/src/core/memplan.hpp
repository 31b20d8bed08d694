// SPDX-License-Identifier: Apache-2.0
//
// Static scratch-buffer planning. Tensors with known sizes and live ranges
// are packed into one byte array: a first-fit baseline, an exact-cover
// search (Algorithm X with dancing links over the memory/instruction
// canvas), and a small brute-force oracle used to certify optimality.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "core/executor.hpp"
#include "core/program.hpp"

namespace tinyquant::memplan {

struct LiveRange {
  std::string name;
  long long size_bytes = 0;
  int start = 0;  // defining instruction
  int end = 0;    // last use, inclusive; the return counts as a use
};

// RAM-resident bytes of one tensor: bits x cardinality, rounded up to bytes.
long long tensor_size_bytes(int bits, int cardinality);

// Live ranges of all RAM tensors (intermediates and the input; flash-resident
// parameters are excluded). Tensors that are never used get a length-1 range
// at their definition and a warning.
std::vector<LiveRange> live_ranges(const std::vector<ir::Instruction>& instrs,
                                   const ir::Program& program, const exec::Assignment& rho,
                                   std::vector<std::string>* warnings = nullptr);

// Max over instructions of the stacked size of live tensors; no packing can
// do better.
long long lower_bound(const std::vector<LiveRange>& ranges);

struct MemoryMap {
  std::map<std::string, long long> offsets;
  long long peak = 0;
  bool optimal = false;        // true when produced by a completed exact search
  std::string method = "first_fit";
};

// Allocation events in instruction order; each tensor goes to the lowest
// offset free for its whole live range.
MemoryMap solve_first_fit(const std::vector<LiveRange>& ranges);

// Exact-cover search at coarsening granularity k: sizes and the budget are
// rounded to multiples of k and the budget grows from the lower bound in
// steps of k until a cover exists, so the result is minimal at that
// granularity. On timeout the first-fit map is returned flagged non-optimal.
MemoryMap solve_exact(const std::vector<LiveRange>& ranges, int coarsen = 1,
                      double timeout_secs = 7200.0);

// Exhaustive minimum peak for small instances (at most 8 tensors). Searches
// packings up to `cap` bytes and fails if none fits.
long long brute_force_min(const std::vector<LiveRange>& ranges, long long cap = 512);

// No tensor exceeds the peak and no two live-range-conflicting tensors
// overlap in bytes.
bool map_is_valid(const MemoryMap& map, const std::vector<LiveRange>& ranges);

// Standalone trace files for planner-only use:
// {"tensors": [{"name","size_bytes","start","end"}, ...]}
std::vector<LiveRange> trace_from_json(const std::string& json_text);
std::string trace_to_json(const std::vector<LiveRange>& ranges);
std::string map_to_json(const MemoryMap& map);

}  // namespace tinyquant::memplan
