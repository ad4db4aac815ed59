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

#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "sfskit/io.hpp"
#include "sfskit/nets.hpp"
#include "temp_dir.hpp"

namespace sfskit::nets {
namespace {

using ad::NormMode;

constexpr Architecture kAll[] = {Architecture::kSfsNet, Architecture::kSkipNet,
                                 Architecture::kSkipNetPlus};

Tensor<float> ramp_images(int b, int s) {
  Tensor<float> x({b, 3, s, s});
  for (std::size_t i = 0; i < x.numel(); ++i) x.data()[i] = static_cast<float>((i * 37 % 101) / 100.0);
  return x;
}

TEST(NetConfig, Validation) {
  EXPECT_NO_THROW(validate({64, 0.5, 5, 1}));
  EXPECT_THROW(validate({48, 0.5, 5, 1}), std::invalid_argument);
  EXPECT_THROW(validate({0, 0.5, 5, 1}), std::invalid_argument);
  EXPECT_THROW(validate({64, 0.3, 5, 1}), std::invalid_argument);
  EXPECT_THROW(validate({64, 0.0, 5, 1}), std::invalid_argument);
  EXPECT_THROW(validate({64, 0.5, 0, 1}), std::invalid_argument);
  EXPECT_THROW(build_sfsnet({48, 0.5, 5, 1}), std::invalid_argument);
}

TEST(Architecture, Names) {
  for (Architecture a : kAll) EXPECT_EQ(parse_architecture(to_string(a)), a);
  EXPECT_THROW(parse_architecture("unet"), std::invalid_argument);
}

TEST(ShapeAudit, ExecutedMatchesDeclared) {
  for (const NetConfig cfg : {NetConfig{32, 0.25, 2, 1}, NetConfig{64, 0.25, 1, 1},
                              NetConfig{96, 0.125, 1, 1}}) {
    for (Architecture a : kAll) {
      auto m = build_model(a, cfg);
      ShapeAudit audit;
      const auto out = m->forward(ramp_images(2, cfg.input_size), NormMode::kTrain, &audit);
      EXPECT_EQ(audit, m->declared_shapes(2)) << to_string(a) << " @ " << cfg.input_size;
      const int s = cfg.input_size;
      EXPECT_EQ(out.normal.shape(), (ad::Shape{2, 3, s, s}));
      EXPECT_EQ(out.albedo.shape(), (ad::Shape{2, 3, s, s}));
      EXPECT_EQ(out.light.shape(), (ad::Shape{2, 27}));
    }
  }
}

TEST(ShapeAudit, DeskScaleResidualFeatures) {
  auto m = build_sfsnet({64, 0.5, 5, 1});
  for (const LayerShape& l : m->declared_shapes(1)) {
    if (l.layer.find(".res") != std::string::npos) {
      EXPECT_EQ(l.shape, (ad::Shape{1, 64, 32, 32})) << l.layer;
    }
  }
}

TEST(Forward, ZeroInputIsFinite) {
  for (Architecture a : kAll) {
    auto m = build_model(a, {32, 0.25, 2, 3});
    for (NormMode mode : {NormMode::kTrain, NormMode::kEval}) {
      const auto out = m->forward(Tensor<float>({2, 3, 32, 32}, 0.0f), mode);
      for (const auto* t : {&out.normal, &out.albedo, &out.light}) {
        for (float v : t->data()) ASSERT_TRUE(std::isfinite(v)) << to_string(a);
      }
    }
  }
}

TEST(Parameters, SfsNetCountMatchesLayerArithmetic) {
  const auto conv = [](long cin, long cout, long k) { return cout * cin * k * k + cout; };
  const auto bn = [](long c) { return 2 * c; };
  for (double w : {0.5, 1.0}) {
    const long c64 = std::lround(64 * w), c128 = std::lround(128 * w);
    long n = conv(3, c64, 7) + bn(c64) + conv(c64, c128, 3) + bn(c128) + conv(c128, c128, 3);
    const long block = 2 * (bn(c128) + conv(c128, c128, 3));
    const long head = conv(c128, c128, 1) + bn(c128) + conv(c128, c64, 3) + bn(c64) + conv(c64, 3, 1);
    n += 2 * (5 * block + bn(c128) + head);
    n += conv(3 * c128, c128, 1) + bn(c128) + c128 * 27 + 27;
    EXPECT_EQ(build_sfsnet({64, w, 5, 1})->parameter_count(), static_cast<std::size_t>(n));
  }
}

TEST(Parameters, PinnedCounts) {
  EXPECT_EQ(build_sfsnet({64, 0.5, 5, 1})->parameter_count(), 861793u);
  EXPECT_EQ(build_skipnet({64, 0.5, 5, 1})->parameter_count(), 4450049u);
  EXPECT_EQ(build_skipnet_plus({64, 0.5, 5, 1})->parameter_count(), 4116097u);
}

TEST(Parameters, UniqueNamesAndDisjointResidualStacks) {
  for (Architecture a : kAll) {
    auto m = build_model(a, {32, 0.25, 2, 1});
    std::set<std::string> names;
    for (const auto* p : std::as_const(*m).parameters()) {
      EXPECT_TRUE(names.insert(p->name).second) << p->name;
    }
  }
  auto m = build_sfsnet({32, 0.25, 2, 1});
  std::vector<const ad::Parameter*> normal, albedo;
  for (const auto* p : std::as_const(*m).parameters()) {
    if (p->name.rfind("normal.res", 0) == 0) normal.push_back(p);
    if (p->name.rfind("albedo.res", 0) == 0) albedo.push_back(p);
  }
  ASSERT_FALSE(normal.empty());
  ASSERT_EQ(normal.size(), albedo.size());
  for (const auto* p : normal)
    for (const auto* q : albedo) EXPECT_FALSE(p->value.same_storage(q->value));
}

TEST(Init, SeededAndHeScaled) {
  auto a = build_skipnet({32, 0.25, 1, 5});
  auto b = build_skipnet({32, 0.25, 1, 5});
  auto c = build_skipnet({32, 0.25, 1, 6});
  EXPECT_EQ(a->state(false), b->state(false));
  EXPECT_NE(a->state(false), c->state(false));
  const auto sfs = build_sfsnet({64, 1.0, 1, 1});
  for (const auto* p : std::as_const(*sfs).parameters()) {
    if (p->name != "conv.c2.weight") continue;
    double ss = 0;
    for (float v : p->value.data()) ss += double(v) * v;
    const double var = ss / p->value.numel();
    EXPECT_NEAR(var, 2.0 / (64 * 9), 0.05 * 2.0 / (64 * 9));
  }
}

TEST(Checkpoint, SaveLoadReproducesOutputs) {
  sfskit::testing::TempDir dir;
  for (Architecture a : kAll) {
    auto m = build_model(a, {32, 0.25, 2, 9});
    const Tensor<float> x = ramp_images(2, 32);
    m->forward(x, NormMode::kTrain);  // moves the running statistics
    const auto want = m->forward(x, NormMode::kEval);
    const auto path = dir / (to_string(a) + ".model");
    save_model(*m, path);
    EXPECT_TRUE(std::filesystem::exists(path.string() + ".json"));
    auto back = load_model(path);
    EXPECT_EQ(back->architecture(), a);
    EXPECT_EQ(back->config().input_size, 32);
    EXPECT_EQ(back->state(false), m->state(false));
    const auto got = back->forward(x, NormMode::kEval);
    EXPECT_TRUE(std::equal(got.light.data().begin(), got.light.data().end(),
                           want.light.data().begin()));
    EXPECT_TRUE(std::equal(got.normal.data().begin(), got.normal.data().end(),
                           want.normal.data().begin()));
  }
}

TEST(Checkpoint, MissingAndMismatchedState) {
  sfskit::testing::TempDir dir;
  try {
    load_model(dir / "nope.model");
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("nope.model"), std::string::npos);
  }
  auto small = build_sfsnet({32, 0.25, 1, 1});
  auto big = build_sfsnet({32, 0.5, 1, 1});
  EXPECT_THROW(big->load_state(small->state(false)), std::invalid_argument);
}

TEST(Checkpoint, OptimizerStateRoundTrip) {
  auto m = build_skipnet({32, 0.25, 1, 1});
  for (auto* p : m->parameters()) {
    p->m.assign(p->m.size(), 0.5f);
    p->step = 7;
  }
  auto n = build_skipnet({32, 0.25, 1, 2});
  n->load_state(m->state(true));
  for (const auto* p : std::as_const(*n).parameters()) {
    EXPECT_EQ(p->step, 7);
    EXPECT_EQ(p->m.front(), 0.5f);
  }
}

TEST(Decompose, ContractAndDeterminism) {
  auto m = build_skipnet_plus({32, 0.25, 1, 4});
  ColorMap img(32, 32, ColorRole::kImage);
  for (std::size_t i = 0; i < img.values().size(); ++i) img.values()[i] = (i % 7) / 7.0f;
  Mask mask(32, 32);
  for (int y = 8; y < 24; ++y)
    for (int x = 4; x < 28; ++x) mask.set(y, x, true);
  const auto d1 = decompose(*m, {&img, &img}, {&mask, &mask});
  const auto d2 = decompose(*m, {&img}, {&mask});
  ASSERT_EQ(d1.size(), 2u);
  // Batch composition only moves the last bits of the GEMM sums.
  for (std::size_t i = 0; i < d1[0].normal.values().size(); ++i) {
    EXPECT_NEAR(d1[0].normal.values()[i], d2[0].normal.values()[i], 1e-5);
    EXPECT_NEAR(d1[0].albedo.values()[i], d2[0].albedo.values()[i], 1e-5);
  }
  for (int j = 0; j < kLightCoeffs; ++j) {
    EXPECT_NEAR(d1[0].light.coeffs[j], d2[0].light.coeffs[j], 1e-5);
  }
  const auto d3 = decompose(*m, {&img}, {&mask});
  EXPECT_EQ(d2[0].normal, d3[0].normal);
  EXPECT_EQ(d2[0].albedo, d3[0].albedo);
  EXPECT_EQ(d2[0].light, d3[0].light);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const Eigen::Vector3d n = d1[0].normal.vec(i);
    if (mask.at(i)) {
      EXPECT_NEAR(n.norm(), 1.0, 1e-6);
    } else {
      EXPECT_EQ(n, Eigen::Vector3d::UnitZ());
    }
    for (int c = 0; c < 3; ++c) {
      EXPECT_GE(d1[0].albedo.pixel(i)[c], 0.0f);
      EXPECT_LE(d1[0].albedo.pixel(i)[c], 1.0f);
    }
  }
}

TEST(Stacking, RoundTrip) {
  ColorMap a(4, 4), b(4, 4);
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    a.values()[i] = float(i);
    b.values()[i] = -float(i);
  }
  const Tensor<float> t = stack_maps({&a, &b});
  EXPECT_EQ(t.shape(), (ad::Shape{2, 3, 4, 4}));
  ColorMap back(4, 4);
  unstack_map(t, 1, back);
  EXPECT_EQ(back.values(), b.values());
  LightSH l;
  l.at(2, 8) = 3.0f;
  EXPECT_EQ(unstack_light(stack_lights({&l, &l}), 1), l);
}

}  // namespace
}  // namespace sfskit::nets
