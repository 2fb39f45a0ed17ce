// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace xmodal {

// Validation failure: bad shapes, bad configuration, malformed files.
// Mapped to CLI exit code 1.
class ValueError : public std::runtime_error {
 public:
  explicit ValueError(const std::string& what) : std::runtime_error(what) {}
};

// Numeric breakdown at runtime: NaN loss, failed gradient check.
// Mapped to CLI exit code 2.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace xmodal
