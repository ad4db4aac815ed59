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

#include "sfskit/ad/optim.hpp"

#include <cmath>
#include <utility>

namespace sfskit::ad {

Parameter::Parameter(std::string n, Tensor<float> t)
    : name(std::move(n)), value(std::move(t)), m(value.numel(), 0.0f), v(value.numel(), 0.0f) {
  value.set_requires_grad(true);
}

void adam_step(const std::vector<Parameter*>& params, const AdamOptions& opts) {
  for (Parameter* p : params) {
    p->step += 1;
    const double bc1 = 1.0 - std::pow(opts.beta1, static_cast<double>(p->step));
    const double bc2 = 1.0 - std::pow(opts.beta2, static_cast<double>(p->step));
    const bool has_grad = p->value.has_grad();
    const float* g = has_grad ? p->value.grad().data() : nullptr;
    float* w = p->value.ptr();
    const std::size_t n = p->value.numel();
    const float b1 = static_cast<float>(opts.beta1), b2 = static_cast<float>(opts.beta2);
    for (std::size_t i = 0; i < n; ++i) {
      const float gi = has_grad ? g[i] : 0.0f;
      p->m[i] = b1 * p->m[i] + (1.0f - b1) * gi;
      p->v[i] = b2 * p->v[i] + (1.0f - b2) * gi * gi;
      const double mhat = p->m[i] / bc1;
      const double vhat = p->v[i] / bc2;
      w[i] -= static_cast<float>(opts.lr * mhat / (std::sqrt(vhat) + opts.eps));
    }
  }
}

void zero_grad(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->value.zero_grad();
}

}  // namespace sfskit::ad
