// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace tinyquant {

// Error raised by any compiler phase. `phase` tags which stage failed so
// drivers can prefix diagnostics ("parse", "weights", "explore", ...).
class Error : public std::runtime_error {
 public:
  explicit Error(std::string message, std::string phase = {})
      : std::runtime_error(std::move(message)), phase_(std::move(phase)) {}

  const std::string& phase() const { return phase_; }

 private:
  std::string phase_;
};

}  // namespace tinyquant
