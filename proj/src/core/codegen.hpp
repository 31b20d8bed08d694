// SPDX-License-Identifier: Apache-2.0
//
// Standalone C emission for fixed-point programs. All RAM tensors become
// offset accesses into one statically sized scratch buffer; weights become
// const arrays. The integer pipeline matches exec::run_fixed_integer word
// for word.
#pragma once

#include <map>
#include <string>

#include "core/executor.hpp"
#include "core/memplan.hpp"

namespace tinyquant::codegen {

struct Emitted {
  std::string source;
  long long scratch_bytes = 0;
  std::map<std::string, long long> offsets;
  std::map<std::string, std::pair<int, int>> bits_and_scale;  // per tensor
};

// Requires the fixed-point representation and bitwidths 8 or 16; the memory
// map must cover every RAM tensor of the assignment.
Emitted emit_c(const ir::Program& program, const std::vector<ir::Instruction>& instrs,
               const exec::Assignment& rho, const numrep::ParamSet& params,
               const exec::Weights& weights, const memplan::MemoryMap& map);

// ASCII per-instruction occupancy table of a planned scratch buffer.
std::string occupancy_table(const memplan::MemoryMap& map,
                            const std::vector<memplan::LiveRange>& ranges, int instr_count);

}  // namespace tinyquant::codegen
