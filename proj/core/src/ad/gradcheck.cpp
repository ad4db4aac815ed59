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

#include "sfskit/ad/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "sfskit/ad/ops.hpp"

namespace sfskit::ad {

namespace {

double project(const Tensor<double>& out, const std::vector<double>& r) {
  double acc = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) acc += out.data()[i] * r[i];
  return acc;
}

}  // namespace

GradcheckReport gradcheck(const DoubleOp& op, std::vector<Tensor<double>> inputs, double tol,
                          double step, std::uint64_t seed) {
  std::vector<double> r;
  {
    NoGradScope no_grad;
    const Tensor<double> probe = op(inputs);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    r.resize(probe.numel());
    for (double& v : r) v = u(rng);
  }

  for (auto& t : inputs) t.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor<double> out = op(inputs);
    Tensor<double> loss = dot_const(out, r);
    if (loss.requires_grad()) tape.backward(loss);
  }

  GradcheckReport report;
  NoGradScope no_grad;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Tensor<double>& in = inputs[t];
    if (!in.requires_grad()) continue;
    std::vector<double> analytic(in.numel(), 0.0);
    if (in.has_grad()) std::copy(in.grad().begin(), in.grad().end(), analytic.begin());
    for (std::size_t i = 0; i < in.numel(); ++i) {
      const double orig = in.data()[i];
      in.data()[i] = orig + step;
      const double fp = project(op(inputs), r);
      in.data()[i] = orig - step;
      const double fm = project(op(inputs), r);
      in.data()[i] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[i];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++report.checked;
      if (err > report.max_rel_error || report.worst_input < 0) {
        report.max_rel_error = std::max(report.max_rel_error, err);
        report.worst_input = static_cast<int>(t);
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

std::string describe(const GradcheckReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%s max_rel_err=%.3e over %zu elements (worst: input %d[%zu] analytic=%.9g "
                "numeric=%.9g)",
                r.passed ? "ok" : "FAILED", r.max_rel_error, r.checked, r.worst_input,
                r.worst_index, r.worst_analytic, r.worst_numeric);
  return buf;
}

namespace {

class CaseBuilder {
 public:
  explicit CaseBuilder(std::uint64_t seed) : rng_(seed) {}

  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  Tensor<double> random(Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    std::uniform_real_distribution<double> d(lo, hi);
    for (double& v : t.data()) v = d(rng_);
    t.set_requires_grad(true);
    return t;
  }

  // Values in +-[0.05, 1], away from zero.
  Tensor<double> off_zero(Shape shape) {
    Tensor<double> t = random(std::move(shape), 0.05, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (double& v : t.data()) v = sign(rng_) ? v : -v;
    return t;
  }

  Tensor<double> constant(Tensor<double> t) {
    t.set_requires_grad(false);
    return t;
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

std::vector<GradcheckCase> standard_gradcheck_cases(std::uint64_t seed) {
  CaseBuilder g(seed);
  std::vector<GradcheckCase> cases;
  const int b = g.pick(1, 2);

  struct ConvVariant {
    int k, stride;
  };
  for (const ConvVariant v : {ConvVariant{1, 1}, ConvVariant{3, 1}, ConvVariant{3, 2},
                              ConvVariant{4, 2}, ConvVariant{7, 1}}) {
    const int cin = g.pick(1, 3), cout = g.pick(1, 3);
    const int h = g.pick(2, 5), w = g.pick(2, 5);
    const int stride = v.stride;
    cases.push_back({"conv2d_k" + std::to_string(v.k) + "_s" + std::to_string(v.stride),
                     [stride](const std::vector<Tensor<double>>& in) {
                       return conv2d(in[0], in[1], in[2], stride);
                     },
                     {g.random({b, cin, h, w}), g.random({cout, cin, v.k, v.k}), g.random({cout})}});
  }
  {
    const int cin = g.pick(1, 3), cout = g.pick(1, 3), h = g.pick(1, 4), w = g.pick(1, 4);
    cases.push_back({"conv_transpose2d",
                     [](const std::vector<Tensor<double>>& in) {
                       return conv_transpose2d(in[0], in[1], in[2]);
                     },
                     {g.random({b, cin, h, w}), g.random({cin, cout, 4, 4}), g.random({cout})}});
  }
  {
    const int c = g.pick(1, 3), h = g.pick(2, 4), w = g.pick(2, 4);
    cases.push_back({"batch_norm_train",
                     [c](const std::vector<Tensor<double>>& in) {
                       BatchNormStats<double> stats(c);
                       return batch_norm(in[0], in[1], in[2], stats, NormMode::kTrain);
                     },
                     {g.random({2, c, h, w}), g.random({c}, 0.5, 1.5), g.random({c})}});
    Tensor<double> mean = g.constant(g.random({c}));
    Tensor<double> var = g.constant(g.random({c}, 0.5, 2.0));
    cases.push_back({"batch_norm_eval",
                     [mean, var](const std::vector<Tensor<double>>& in) {
                       BatchNormStats<double> stats;
                       stats.mean = mean;
                       stats.var = var;
                       return batch_norm(in[0], in[1], in[2], stats, NormMode::kEval);
                     },
                     {g.random({b, c, h, w}), g.random({c}, 0.5, 1.5), g.random({c})}});
  }
  const Shape small = {b, g.pick(1, 3), g.pick(1, 4), g.pick(1, 4)};
  cases.push_back({"leaky_relu",
                   [](const std::vector<Tensor<double>>& in) { return leaky_relu(in[0], 0.2); },
                   {g.off_zero(small)}});
  cases.push_back({"relu", [](const std::vector<Tensor<double>>& in) { return relu(in[0]); },
                   {g.off_zero(small)}});
  cases.push_back({"bilinear_upsample2x",
                   [](const std::vector<Tensor<double>>& in) { return bilinear_upsample2x(in[0]); },
                   {g.random(small)}});
  cases.push_back({"global_avg_pool",
                   [](const std::vector<Tensor<double>>& in) { return global_avg_pool(in[0]); },
                   {g.random(small)}});
  {
    const int in_f = g.pick(1, 5), out_f = g.pick(1, 5);
    cases.push_back({"fully_connected",
                     [](const std::vector<Tensor<double>>& in) {
                       return fully_connected(in[0], in[1], in[2]);
                     },
                     {g.random({b, in_f}), g.random({out_f, in_f}), g.random({out_f})}});
  }
  {
    const int h = g.pick(1, 4), w = g.pick(1, 4);
    cases.push_back({"concat_channels",
                     [](const std::vector<Tensor<double>>& in) { return concat_channels(in); },
                     {g.random({b, g.pick(1, 3), h, w}), g.random({b, g.pick(1, 3), h, w})}});
  }
  cases.push_back({"reshape",
                   [](const std::vector<Tensor<double>>& in) {
                     return reshape(in[0], {in[0].dim(0), static_cast<int>(in[0].numel()) / in[0].dim(0)});
                   },
                   {g.random(small)}});
  {
    const int h = g.pick(1, 3), w = g.pick(1, 3);
    cases.push_back({"tile_spatial",
                     [h, w](const std::vector<Tensor<double>>& in) { return tile_spatial(in[0], h, w); },
                     {g.random({b, g.pick(1, 4)})}});
  }
  cases.push_back({"add", [](const std::vector<Tensor<double>>& in) { return add(in[0], in[1]); },
                   {g.random(small), g.random(small)}});
  cases.push_back({"mul", [](const std::vector<Tensor<double>>& in) { return mul(in[0], in[1]); },
                   {g.random(small), g.random(small)}});
  cases.push_back({"scale", [](const std::vector<Tensor<double>>& in) { return scale(in[0], -1.7); },
                   {g.random(small)}});
  cases.push_back({"weighted_sum",
                   [](const std::vector<Tensor<double>>& in) {
                     return weighted_sum(in, {0.5, 0.1, 2.0});
                   },
                   {g.random({1}), g.random({1}), g.random({1})}});
  {
    const Shape vec_shape = {b, 3, g.pick(1, 4), g.pick(1, 4)};
    cases.push_back({"normalize_channels",
                     [](const std::vector<Tensor<double>>& in) { return normalize_channels(in[0]); },
                     {g.off_zero(vec_shape)}});
    cases.push_back({"sh_shading",
                     [](const std::vector<Tensor<double>>& in) { return sh_shading(in[0], in[1]); },
                     {g.random(vec_shape), g.random({b, 27})}});
    Tensor<double> mask({b, 1, vec_shape[2], vec_shape[3]});
    std::bernoulli_distribution on(0.7);
    for (double& v : mask.data()) v = on(g.rng()) ? 1.0 : 0.0;
    mask.data()[0] = 1.0;
    Tensor<double> x = g.random(vec_shape);
    Tensor<double> gap = g.off_zero(vec_shape);
    Tensor<double> y(vec_shape);
    for (std::size_t i = 0; i < y.numel(); ++i) y.data()[i] = x.data()[i] + gap.data()[i];
    y.set_requires_grad(true);
    cases.push_back({"masked_l1",
                     [mask](const std::vector<Tensor<double>>& in) {
                       return masked_l1(in[0], in[1], mask);
                     },
                     {x, y}});
  }
  cases.push_back({"mse", [](const std::vector<Tensor<double>>& in) { return mse(in[0], in[1]); },
                   {g.random({b, 27}), g.random({b, 27})}});
  {
    Tensor<double> w = g.random(small);
    std::vector<double> coeffs(w.data().begin(), w.data().end());
    cases.push_back({"dot_const",
                     [coeffs](const std::vector<Tensor<double>>& in) { return dot_const(in[0], coeffs); },
                     {g.random(small)}});
  }
  return cases;
}

}  // namespace sfskit::ad
