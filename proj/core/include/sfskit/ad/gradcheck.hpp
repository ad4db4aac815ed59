// Copyright 2026 The sfskit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Finite-difference verification of backward passes, in double precision.

#ifndef SFSKIT_AD_GRADCHECK_HPP_
#define SFSKIT_AD_GRADCHECK_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sfskit/ad/tensor.hpp"

namespace sfskit::ad {

using DoubleOp = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

struct GradcheckReport {
  bool passed = true;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Worst element: input index and flat position.
  int worst_input = -1;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Projects op's output onto a fixed random direction r and compares the
// analytic gradient of <r, op(inputs)> against central differences with the
// given step. The per-element error is |a - n| / max(1, |a|, |n|).
// Only inputs with requires_grad set are checked.
GradcheckReport gradcheck(const DoubleOp& op, std::vector<Tensor<double>> inputs,
                          double tol = 1e-5, double step = 1e-4, std::uint64_t seed = 0);

std::string describe(const GradcheckReport& r);

struct GradcheckCase {
  std::string name;
  DoubleOp op;
  std::vector<Tensor<double>> inputs;
};

// One case per differentiable op (and per conv kernel/stride variant), with
// shapes and values drawn from `seed`. Inputs to ReLU-like and L1 kinks are
// kept at least 0.05 away from the kink.
std::vector<GradcheckCase> standard_gradcheck_cases(std::uint64_t seed);

}  // namespace sfskit::ad

#endif  // SFSKIT_AD_GRADCHECK_HPP_
