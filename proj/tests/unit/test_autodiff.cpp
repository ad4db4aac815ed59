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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "sfskit/ad/checkpoint.hpp"
#include "sfskit/ad/gradcheck.hpp"
#include "sfskit/ad/ops.hpp"
#include "sfskit/ad/optim.hpp"
#include "sfskit/ad/tensor.hpp"
#include "temp_dir.hpp"

namespace sfskit::ad {
namespace {

using T = Tensor<double>;

T random_tensor(Shape s, std::mt19937_64& rng, bool grad = false) {
  std::normal_distribution<double> g(0.0, 1.0);
  T t(s, 0.0, grad);
  for (double& v : t.data()) v = g(rng);
  return t;
}

double at4(const T& t, int b, int c, int y, int x) {
  return t.data()[((std::size_t(b) * t.dim(1) + c) * t.dim(2) + y) * t.dim(3) + x];
}

// Direct cross-correlation with zero padding.
std::vector<double> conv_oracle(const T& x, const T& w, const T& bias, int stride, int pad) {
  const int b = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int co = w.dim(0), k = w.dim(2);
  const int ho = (h + 2 * pad - k) / stride + 1, wo = (wd + 2 * pad - k) / stride + 1;
  std::vector<double> out(std::size_t(b) * co * ho * wo);
  for (int n = 0; n < b; ++n)
    for (int o = 0; o < co; ++o)
      for (int y = 0; y < ho; ++y)
        for (int xx = 0; xx < wo; ++xx) {
          double acc = bias.defined() ? bias.data()[o] : 0.0;
          for (int i = 0; i < ci; ++i)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int sy = y * stride - pad + ky, sx = xx * stride - pad + kx;
                if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
                acc += at4(w, o, i, ky, kx) * at4(x, n, i, sy, sx);
              }
          out[((std::size_t(n) * co + o) * ho + y) * wo + xx] = acc;
        }
  return out;
}

// Scatter form of the stride-2, k=4, pad-1 transposed convolution.
std::vector<double> deconv_oracle(const T& x, const T& w, const T& bias) {
  const int b = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3), co = w.dim(1);
  const int ho = 2 * h, wo = 2 * wd;
  std::vector<double> out(std::size_t(b) * co * ho * wo, 0.0);
  for (int n = 0; n < b; ++n)
    for (int o = 0; o < co; ++o)
      for (int y = 0; y < ho; ++y)
        for (int xx = 0; xx < wo; ++xx)
          out[((std::size_t(n) * co + o) * ho + y) * wo + xx] = bias.defined() ? bias.data()[o] : 0;
  for (int n = 0; n < b; ++n)
    for (int i = 0; i < ci; ++i)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < wd; ++xx)
          for (int o = 0; o < co; ++o)
            for (int ky = 0; ky < 4; ++ky)
              for (int kx = 0; kx < 4; ++kx) {
                const int ty = 2 * y - 1 + ky, tx = 2 * xx - 1 + kx;
                if (ty < 0 || ty >= ho || tx < 0 || tx >= wo) continue;
                out[((std::size_t(n) * co + o) * ho + ty) * wo + tx] +=
                    at4(x, n, i, y, xx) * at4(w, i, o, ky, kx);
              }
  return out;
}

TEST(Gradcheck, AllOpsOverTwentySeeds) {
  std::set<std::string> names;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (auto& c : standard_gradcheck_cases(seed)) {
      names.insert(c.name);
      const GradcheckReport r = gradcheck(c.op, c.inputs, 1e-5, 1e-4, seed);
      EXPECT_TRUE(r.passed) << c.name << " seed " << seed << ": " << describe(r);
      EXPECT_GT(r.checked, 0u) << c.name;
    }
  }
  for (const char* op : {"conv_transpose2d", "batch_norm_train", "batch_norm_eval", "leaky_relu",
                         "relu", "bilinear_upsample2x", "global_avg_pool", "fully_connected",
                         "concat_channels", "add", "mul", "masked_l1", "mse", "sh_shading",
                         "normalize_channels", "weighted_sum"}) {
    EXPECT_TRUE(names.count(op)) << op;
  }
}

TEST(Gradcheck, DetectsAWrongGradient) {
  // Scale the output in the forward pass without a matching backward.
  // The detached copy contributes to the value but not to the gradient.
  const DoubleOp broken = [](const std::vector<T>& in) { return add(scale(in[0], 2.0), in[0].detach()); };
  std::mt19937_64 rng(1);
  const GradcheckReport r = gradcheck(broken, {random_tensor({2, 3}, rng, true)});
  EXPECT_FALSE(r.passed);
}

TEST(Conv2d, MatchesLoopOracle) {
  std::mt19937_64 rng(2);
  struct Geo { int k, s; };
  for (Geo g : {Geo{1, 1}, Geo{3, 1}, Geo{3, 2}, Geo{7, 1}, Geo{4, 2}}) {
    const int size = g.k == 4 ? 6 : 5;
    const T x = random_tensor({1, 2, size, size}, rng);
    const T w = random_tensor({3, 2, g.k, g.k}, rng);
    const T b = random_tensor({3}, rng);
    const T y = conv2d(x, w, b, g.s);
    const auto want = conv_oracle(x, w, b, g.s, conv_padding(g.k, g.s));
    ASSERT_EQ(y.numel(), want.size()) << g.k << "/" << g.s;
    EXPECT_EQ(y.dim(2), (size + g.s - 1) / g.s);
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(y.data()[i], want[i], 1e-12);
  }
}

TEST(Conv2d, IdentityAndAveragingKernels) {
  std::mt19937_64 rng(3);
  const T x = random_tensor({2, 3, 4, 5}, rng);
  T eye({3, 3, 1, 1}, 0.0);
  for (int i = 0; i < 3; ++i) eye.data()[i * 3 + i] = 1.0;
  const T y = conv2d(x, eye, T(), 1);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);

  const T c({1, 1, 6, 6}, 0.75);
  const T avg({1, 1, 3, 3}, 1.0 / 9.0);
  const T z = conv2d(c, avg, T(), 1);
  // Interior pixels see no padding.
  for (int yy = 1; yy < 5; ++yy)
    for (int xx = 1; xx < 5; ++xx) EXPECT_NEAR(at4(z, 0, 0, yy, xx), 0.75, 1e-15);
}

TEST(Conv2d, RejectsShapeMismatch) {
  const T x({1, 2, 4, 4}), w({3, 5, 3, 3});
  EXPECT_THROW(conv2d(x, w, T(), 1), std::invalid_argument);
}

TEST(ConvTranspose2d, MatchesScatterOracleAndDoubles) {
  std::mt19937_64 rng(4);
  const T x = random_tensor({2, 3, 3, 4}, rng);
  const T w = random_tensor({3, 2, 4, 4}, rng);
  const T b = random_tensor({2}, rng);
  const T y = conv_transpose2d(x, w, b);
  EXPECT_EQ(y.shape(), (Shape{2, 2, 6, 8}));
  const auto want = deconv_oracle(x, w, b);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(y.data()[i], want[i], 1e-12);

  const T zero({1, 3, 2, 2}, 0.0);
  const T yz = conv_transpose2d(zero, w, b);
  for (std::size_t i = 0; i < yz.numel(); ++i) EXPECT_EQ(yz.data()[i], b.data()[i / 16]);
}

TEST(ConvAdjoint, InnerProductIdentity) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    // <conv(x, w), y> = <x, conv_transpose(y, w)> for the k=4 stride-2 pair.
    const T x = random_tensor({2, 3, 8, 6}, rng);
    const T w = random_tensor({4, 3, 4, 4}, rng);
    const T y = random_tensor({2, 4, 4, 3}, rng);
    const T cx = conv2d(x, w, T(), 2);
    const T ty = conv_transpose2d(y, w, T());
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < cx.numel(); ++i) lhs += cx.data()[i] * y.data()[i];
    for (std::size_t i = 0; i < x.numel(); ++i) rhs += x.data()[i] * ty.data()[i];
    EXPECT_NEAR(lhs, rhs, 1e-10);
  }
  // Every conv geometry against its own backward pass.
  struct Geo { int k, s; };
  for (Geo g : {Geo{1, 1}, Geo{3, 1}, Geo{3, 2}, Geo{7, 1}, Geo{4, 2}}) {
    T x = random_tensor({2, 3, 8, 8}, rng, true);
    const T w = random_tensor({4, 3, g.k, g.k}, rng);
    Tape tape;
    double lhs = 0;
    {
      TapeScope scope(tape);
      const T out = conv2d(x, w, T(), g.s);
      const T y = random_tensor(out.shape(), rng);
      for (std::size_t i = 0; i < out.numel(); ++i) lhs += out.data()[i] * y.data()[i];
      std::vector<double> yv(y.data().begin(), y.data().end());
      T proj = dot_const(out, yv);
      tape.backward(proj);
    }
    double rhs = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) rhs += x.data()[i] * x.grad()[i];
    EXPECT_NEAR(lhs, rhs, 1e-10) << g.k << "/" << g.s;
  }
}

TEST(BatchNorm, ConstantChannelGivesBeta) {
  T x({3, 2, 4, 4}, 2.5);
  const T gamma({2}, 1.7), beta({2}, -0.3);
  BatchNormStats<double> stats(2);
  const T y = batch_norm(x, gamma, beta, stats, NormMode::kTrain);
  for (double v : y.data()) EXPECT_NEAR(v, -0.3, 1e-12);
}

TEST(BatchNorm, TrainMatchesOracleAndUpdatesRunningStats) {
  std::mt19937_64 rng(6);
  const T x = random_tensor({4, 2, 3, 3}, rng);
  const T gamma = random_tensor({2}, rng), beta = random_tensor({2}, rng);
  BatchNormStats<double> stats(2);
  const T y = batch_norm(x, gamma, beta, stats, NormMode::kTrain, 0.1, 1e-5);
  for (int c = 0; c < 2; ++c) {
    double mean = 0, var = 0;
    const int n = 4 * 9;
    for (int b = 0; b < 4; ++b)
      for (int p = 0; p < 9; ++p) mean += at4(x, b, c, p / 3, p % 3);
    mean /= n;
    for (int b = 0; b < 4; ++b)
      for (int p = 0; p < 9; ++p) var += std::pow(at4(x, b, c, p / 3, p % 3) - mean, 2);
    var /= n;
    for (int b = 0; b < 4; ++b)
      for (int p = 0; p < 9; ++p) {
        const double want = gamma.data()[c] * (at4(x, b, c, p / 3, p % 3) - mean) /
                                std::sqrt(var + 1e-5) + beta.data()[c];
        EXPECT_NEAR(at4(y, b, c, p / 3, p % 3), want, 1e-12);
      }
    EXPECT_NEAR(stats.mean.data()[c], 0.1 * mean, 1e-12);
    EXPECT_NEAR(stats.var.data()[c], 0.9 + 0.1 * var * n / (n - 1), 1e-12);
  }
  const T ye = batch_norm(x, gamma, beta, stats, NormMode::kEval);
  const double want = gamma.data()[0] * (x.data()[0] - stats.mean.data()[0]) /
                          std::sqrt(stats.var.data()[0] + 1e-5) + beta.data()[0];
  EXPECT_NEAR(ye.data()[0], want, 1e-12);
}

TEST(Elementwise, LeakyReluAndRelu) {
  const T x({1, 4}, std::vector<double>{-2.0, -0.5, 0.0, 3.0});
  const T y = leaky_relu(x, 0.2);
  EXPECT_EQ(y.data()[0], -0.4);
  EXPECT_EQ(y.data()[1], -0.1);
  EXPECT_EQ(y.data()[3], 3.0);
  const T r = relu(x);
  EXPECT_EQ(r.data()[0], 0.0);
  EXPECT_EQ(r.data()[3], 3.0);
}

TEST(Upsample, ConstantRampAndOracle) {
  const T c({1, 2, 3, 3}, 0.4);
  const auto flat = bilinear_upsample2x(c);
  for (double v : flat.data()) EXPECT_NEAR(v, 0.4, 1e-15);

  T ramp({1, 1, 1, 5}, 0.0);
  for (int i = 0; i < 5; ++i) ramp.data()[i] = 2.0 * i + 1.0;
  const T up = bilinear_upsample2x(ramp);
  EXPECT_EQ(up.shape(), (Shape{1, 1, 2, 10}));
  for (int o = 1; o < 9; ++o) EXPECT_NEAR(up.data()[o], 2.0 * (o / 2.0 - 0.25) + 1.0, 1e-12);

  std::mt19937_64 rng(7);
  const T x = random_tensor({1, 1, 4, 3}, rng);
  const T u = bilinear_upsample2x(x);
  for (int oy = 0; oy < 8; ++oy)
    for (int ox = 0; ox < 6; ++ox) {
      const double sy = std::clamp(oy / 2.0 - 0.25, 0.0, 3.0);
      const double sx = std::clamp(ox / 2.0 - 0.25, 0.0, 2.0);
      const int y0 = int(sy), x0 = int(sx);
      const int y1 = std::min(y0 + 1, 3), x1 = std::min(x0 + 1, 2);
      const double fy = sy - y0, fx = sx - x0;
      const double want = (1 - fy) * ((1 - fx) * at4(x, 0, 0, y0, x0) + fx * at4(x, 0, 0, y0, x1)) +
                          fy * ((1 - fx) * at4(x, 0, 0, y1, x0) + fx * at4(x, 0, 0, y1, x1));
      EXPECT_NEAR(at4(u, 0, 0, oy, ox), want, 1e-12);
    }
}

TEST(Pooling, ConstantAndOneHot) {
  const T c({2, 3, 4, 4}, 1.25);
  const auto pooled = global_avg_pool(c);
  for (double v : pooled.data()) EXPECT_DOUBLE_EQ(v, 1.25);
  T h({1, 1, 4, 5}, 0.0);
  h.data()[7] = 1.0;
  EXPECT_DOUBLE_EQ(global_avg_pool(h).data()[0], 1.0 / 20.0);
}

TEST(FullyConnected, IdentityAndZeroWeight) {
  std::mt19937_64 rng(8);
  const T x = random_tensor({3, 4}, rng);
  T eye({4, 4}, 0.0);
  for (int i = 0; i < 4; ++i) eye.data()[i * 5] = 1.0;
  const T b = random_tensor({4}, rng);
  const T y = fully_connected(x, eye, b);
  for (int n = 0; n < 3; ++n)
    for (int j = 0; j < 4; ++j)
      EXPECT_DOUBLE_EQ(y.data()[n * 4 + j], x.data()[n * 4 + j] + b.data()[j]);
  const T z = fully_connected(x, T({4, 4}, 0.0), b);
  for (int n = 0; n < 3; ++n)
    for (int j = 0; j < 4; ++j) EXPECT_EQ(z.data()[n * 4 + j], b.data()[j]);
}

TEST(Concat, SingleInputAndChannelSum) {
  std::mt19937_64 rng(9);
  const T a = random_tensor({2, 3, 2, 2}, rng);
  const T b = random_tensor({2, 5, 2, 2}, rng);
  const T one = concat_channels<double>({a});
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(one.data()[i], a.data()[i]);
  EXPECT_EQ(concat_channels<double>({a, b}).shape(), (Shape{2, 8, 2, 2}));
}

TEST(Tape, DiamondGraphAccumulates) {
  T x({3}, std::vector<double>{1.0, -2.0, 0.5}, true);
  const T a({3}, std::vector<double>{2.0, 3.0, 4.0});
  Tape tape;
  {
    TapeScope scope(tape);
    const T left = mul(x, a);
    const T right = scale(x, 5.0);
    T loss = dot_const(add(left, right), std::vector<double>{1.0, 1.0, 1.0});
    tape.backward(loss);
  }
  EXPECT_EQ(x.grad()[0], 7.0);
  EXPECT_EQ(x.grad()[1], 8.0);
  EXPECT_EQ(x.grad()[2], 9.0);
}

TEST(Tape, SameTensorTwiceInOneOp) {
  T x({2}, std::vector<double>{3.0, -1.0}, true);
  Tape tape;
  {
    TapeScope scope(tape);
    T loss = dot_const(mul(x, x), std::vector<double>{1.0, 1.0});
    tape.backward(loss);
  }
  EXPECT_EQ(x.grad()[0], 6.0);
  EXPECT_EQ(x.grad()[1], -2.0);
}

TEST(Tape, NoGradScopeRecordsNothing) {
  T x({2}, 1.0, true);
  Tape tape;
  TapeScope scope(tape);
  {
    NoGradScope off;
    EXPECT_EQ(active_tape(), nullptr);
    add(x, x);
  }
  EXPECT_EQ(tape.size(), 0u);
  add(x, x);
  EXPECT_EQ(tape.size(), 1u);
}

TEST(Tape, BackwardIsDeterministic) {
  auto run = [] {
    std::mt19937_64 rng(10);
    T x = random_tensor({2, 3, 8, 8}, rng, true);
    const T w = random_tensor({4, 3, 3, 3}, rng);
    const T gamma({4}, 1.0), beta({4}, 0.0);
    BatchNormStats<double> stats(4);
    Tape tape;
    TapeScope scope(tape);
    T y = global_avg_pool(leaky_relu(batch_norm(conv2d(x, w, T(), 1), gamma, beta, stats,
                                                NormMode::kTrain), 0.2));
    T loss = dot_const(y, std::vector<double>(8, 1.0));
    tape.backward(loss);
    return std::vector<double>(x.grad().begin(), x.grad().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ConvergesOnScalarQuadratic) {
  Parameter p("w", Tensor<float>({1}, 5.0f));
  for (int i = 0; i < 3000; ++i) {
    // d/dw (w - 2)^2
    p.value.grad_mut()[0] = 2.0f * (p.value.data()[0] - 2.0f);
    adam_step({&p}, {.lr = 0.01});
    zero_grad({&p});
  }
  EXPECT_NEAR(p.value.data()[0], 2.0f, 1e-3);
}

TEST(Adam, ZeroGradientLeavesValue) {
  Parameter p("w", Tensor<float>({3}, 1.5f));
  adam_step({&p});
  adam_step({&p});
  for (float v : p.value.data()) EXPECT_EQ(v, 1.5f);
  EXPECT_EQ(p.step, 2);
}

TEST(Adam, FirstStepMatchesFormulaAndTwinsStayEqual) {
  Parameter a("a", Tensor<float>({2}, 0.3f)), b("b", Tensor<float>({2}, 0.3f));
  for (int s = 0; s < 5; ++s) {
    for (Parameter* p : {&a, &b}) {
      p->value.grad_mut()[0] = 0.7f;
      p->value.grad_mut()[1] = -0.2f * (s + 1);
    }
    adam_step({&a, &b}, {.lr = 0.05});
    if (s == 0) {
      // m_hat = g, v_hat = g^2, so the first step is lr * g / (|g| + eps).
      EXPECT_NEAR(a.value.data()[0], 0.3f - 0.05f, 1e-6);
      EXPECT_NEAR(a.value.data()[1], 0.3f + 0.05f, 1e-6);
    }
    zero_grad({&a, &b});
  }
  EXPECT_EQ(std::vector<float>(a.value.data().begin(), a.value.data().end()),
            std::vector<float>(b.value.data().begin(), b.value.data().end()));
}

TEST(Checkpoint, RoundTripAndLayout) {
  sfskit::testing::TempDir dir;
  std::vector<NamedTensor> entries = {{"conv.w", {2, 1, 3, 3}, std::vector<float>(18, 0.25f)},
                                      {"fc.b", {4}, {1, 2, 3, 4}},
                                      {"scalar", {}, {7.0f}}};
  write_checkpoint(dir / "m.ckpt", entries);
  EXPECT_EQ(read_checkpoint(dir / "m.ckpt"), entries);
  std::ifstream in(dir / "m.ckpt", std::ios::binary);
  std::string head(15, '\0');
  in.read(head.data(), 15);
  EXPECT_EQ(head.substr(0, 7), "SFSCKPT");
  EXPECT_EQ(head[7], 1);   // version
  EXPECT_EQ(head[11], 3);  // count
  EXPECT_THROW(read_checkpoint(dir / "absent.ckpt"), std::runtime_error);
}

}  // namespace
}  // namespace sfskit::ad
