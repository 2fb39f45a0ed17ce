// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "xmodal/tensor.hpp"

namespace xmodal {

struct GradCheckResult {
  std::string component;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass() const { return max_rel_err <= tolerance; }
};

// Compares the taped gradient of a scalar-valued function against central
// finite differences, elementwise over every entry of `inputs`.
//
// `f` must be pure: it recomputes the loss from the current contents of the
// input tensors and nothing else. Inputs must require grad and should be F64
// (single precision drowns the h^2 truncation term in roundoff).
//
// The returned error is max_i |a_i - n_i| / max(|a_i|, |n_i|, denom_floor).
// The floor keeps finite-difference noise on zero gradients (padding rows,
// masked entries) from registering as spurious relative error.
double finite_diff_max_rel_err(const std::function<Tensor()>& f,
                               std::span<Tensor> inputs,
                               double h = 1e-5,
                               double denom_floor = 1e-3);

// Runs the finite-difference suite over every layer primitive and both full
// architectures at tiny dimensions, all in F64. `seed` varies the random
// inputs, never the verdict on a correct build.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed);

std::string format_gradcheck_report(std::span<const GradCheckResult> results);

}  // namespace xmodal
