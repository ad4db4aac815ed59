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

#ifndef SFSKIT_AD_OPTIM_HPP_
#define SFSKIT_AD_OPTIM_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "sfskit/ad/tensor.hpp"

namespace sfskit::ad {

// A trainable tensor plus its Adam state.
struct Parameter {
  std::string name;
  Tensor<float> value;
  std::vector<float> m;  // first moment
  std::vector<float> v;  // second moment
  std::int64_t step = 0;

  Parameter() = default;
  Parameter(std::string n, Tensor<float> t);
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update. Parameters without an accumulated
// gradient are treated as having a zero gradient.
void adam_step(const std::vector<Parameter*>& params, const AdamOptions& opts = {});

void zero_grad(const std::vector<Parameter*>& params);

}  // namespace sfskit::ad

#endif  // SFSKIT_AD_OPTIM_HPP_
