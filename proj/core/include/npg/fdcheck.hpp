// Copyright Contributors to the NPG Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "npg/tensor.hpp"

namespace npg {

struct FdReport {
  bool pass = false;
  real max_rel_error = 0;
  int checked = 0;
  std::vector<int> skipped_kinks;  // coordinates skipped as non-differentiable samples
  bool oracle_failure = false;     // f produced non-finite values
  std::string message;
};

// Central-difference check of the tape gradient of a scalar-valued function.
// f must be pure: it is re-evaluated at perturbed copies of x. Coordinates
// where the one-sided differences disagree strongly (a kink under the
// perturbation) are skipped rather than failed.
FdReport finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           real step, real tolerance);

}  // namespace npg
