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

#include "sfskit/nets.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sfskit/io.hpp"
#include "sfskit/sh.hpp"

namespace sfskit::nets {

namespace {

void record(ShapeAudit* audit, const std::string& name, const Tensor<float>& t) {
  if (audit != nullptr) audit->push_back({name, t.shape()});
}

}  // namespace

std::string to_string(Architecture arch) {
  switch (arch) {
    case Architecture::kSfsNet: return "sfsnet";
    case Architecture::kSkipNet: return "skipnet";
    case Architecture::kSkipNetPlus: return "skipnet-plus";
  }
  return "unknown";
}

Architecture parse_architecture(const std::string& name) {
  if (name == "sfsnet") return Architecture::kSfsNet;
  if (name == "skipnet") return Architecture::kSkipNet;
  if (name == "skipnet-plus") return Architecture::kSkipNetPlus;
  throw std::invalid_argument("unknown architecture: " + name);
}

void validate(const NetConfig& cfg) {
  if (cfg.input_size <= 0 || cfg.input_size % 32 != 0) {
    throw std::invalid_argument("input_size must be a positive multiple of 32, got " +
                                std::to_string(cfg.input_size));
  }
  if (!(cfg.width_scale > 0.0)) throw std::invalid_argument("width_scale must be positive");
  const double c = 64.0 * cfg.width_scale;
  if (std::abs(c - std::round(c)) > 1e-9 || std::round(c) < 1.0) {
    throw std::invalid_argument("width_scale must make 64 * width_scale a positive integer");
  }
  if (cfg.n_resblocks < 1) throw std::invalid_argument("n_resblocks must be >= 1");
}

Model::Model(const NetConfig& cfg) : cfg_(cfg), rng_(cfg.seed) { validate(cfg); }

int Model::ch(int base_channels) const {
  return static_cast<int>(std::lround(base_channels * cfg_.width_scale));
}

ad::Parameter* Model::add_param(const std::string& name, ad::Shape shape, double init_std) {
  for (const auto& p : params_) {
    if (p.name == name) throw std::logic_error("duplicate parameter name " + name);
  }
  Tensor<float> t(shape);
  if (init_std > 0.0) {
    std::normal_distribution<double> dist(0.0, init_std);
    for (float& v : t.data()) v = static_cast<float>(dist(rng_));
  }
  params_.emplace_back(name, t);
  return &params_.back();
}

ad::BatchNormStats<float>* Model::add_bn_stats(const std::string& name, int channels) {
  bn_stats_.emplace_back(name, ad::BatchNormStats<float>(channels));
  return &bn_stats_.back().second;
}

Model::Conv Model::make_conv(const std::string& name, int cin, int cout, int k, int stride) {
  Conv c;
  c.weight = add_param(name + ".weight", {cout, cin, k, k}, std::sqrt(2.0 / (cin * k * k)));
  c.bias = add_param(name + ".bias", {cout}, 0.0);
  c.stride = stride;
  return c;
}

Model::Deconv Model::make_deconv(const std::string& name, int cin, int cout) {
  Deconv d;
  // Each output pixel of a 4x4 stride-2 transposed conv sees cin * 2 * 2 inputs.
  d.weight = add_param(name + ".weight", {cin, cout, 4, 4}, std::sqrt(2.0 / (cin * 4)));
  d.bias = add_param(name + ".bias", {cout}, 0.0);
  return d;
}

Model::Norm Model::make_norm(const std::string& name, int channels) {
  Norm n;
  n.gamma = add_param(name + ".gamma", {channels}, 0.0);
  for (float& v : n.gamma->value.data()) v = 1.0f;
  n.beta = add_param(name + ".beta", {channels}, 0.0);
  n.stats = add_bn_stats(name, channels);
  return n;
}

Model::Linear Model::make_linear(const std::string& name, int in, int out) {
  Linear l;
  l.weight = add_param(name + ".weight", {out, in}, std::sqrt(2.0 / in));
  l.bias = add_param(name + ".bias", {out}, 0.0);
  return l;
}

Tensor<float> Model::Conv::operator()(const Tensor<float>& x) const {
  return ad::conv2d(x, weight->value, bias->value, stride);
}
Tensor<float> Model::Deconv::operator()(const Tensor<float>& x) const {
  return ad::conv_transpose2d(x, weight->value, bias->value);
}
Tensor<float> Model::Norm::operator()(const Tensor<float>& x, ad::NormMode mode) const {
  return ad::batch_norm(x, gamma->value, beta->value, *stats, mode);
}
Tensor<float> Model::Linear::operator()(const Tensor<float>& x) const {
  return ad::fully_connected(x, weight->value, bias->value);
}

std::vector<ad::Parameter*> Model::parameters() {
  std::vector<ad::Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const ad::Parameter*> Model::parameters() const {
  std::vector<const ad::Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

std::vector<ad::NamedTensor> Model::state(bool include_optimizer) const {
  std::vector<ad::NamedTensor> out;
  auto vec = [](std::span<const float> s) { return std::vector<float>(s.begin(), s.end()); };
  for (const auto& p : params_) out.push_back({p.name, p.value.shape(), vec(p.value.data())});
  for (const auto& [name, st] : bn_stats_) {
    out.push_back({name + ".running_mean", st.mean.shape(), vec(st.mean.data())});
    out.push_back({name + ".running_var", st.var.shape(), vec(st.var.data())});
  }
  if (include_optimizer) {
    for (const auto& p : params_) {
      const std::vector<float> zeros(p.value.numel(), 0.0f);
      out.push_back({"adam.m/" + p.name, p.value.shape(), p.m.empty() ? zeros : p.m});
      out.push_back({"adam.v/" + p.name, p.value.shape(), p.v.empty() ? zeros : p.v});
      out.push_back({"adam.step/" + p.name, {1}, {static_cast<float>(p.step)}});
    }
  }
  return out;
}

void Model::load_state(const std::vector<ad::NamedTensor>& entries) {
  std::map<std::string, const ad::NamedTensor*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  auto take = [&](const std::string& name, const ad::Shape& shape) -> const ad::NamedTensor* {
    auto it = by_name.find(name);
    if (it == by_name.end()) return nullptr;
    if (it->second->shape != shape) {
      throw std::invalid_argument("checkpoint entry " + name + " has shape " +
                                  ad::shape_str(it->second->shape) + ", model expects " +
                                  ad::shape_str(shape));
    }
    return it->second;
  };
  for (auto& p : params_) {
    const auto* e = take(p.name, p.value.shape());
    if (e == nullptr) throw std::invalid_argument("checkpoint is missing parameter " + p.name);
    std::copy(e->data.begin(), e->data.end(), p.value.data().begin());
    if (const auto* m = take("adam.m/" + p.name, p.value.shape())) p.m = m->data;
    if (const auto* v = take("adam.v/" + p.name, p.value.shape())) p.v = v->data;
    if (const auto* s = take("adam.step/" + p.name, {1})) {
      p.step = static_cast<std::int64_t>(s->data[0]);
    }
  }
  for (auto& [name, st] : bn_stats_) {
    const auto* m = take(name + ".running_mean", st.mean.shape());
    const auto* v = take(name + ".running_var", st.var.shape());
    if (m == nullptr || v == nullptr) {
      throw std::invalid_argument("checkpoint is missing batch-norm statistics for " + name);
    }
    std::copy(m->data.begin(), m->data.end(), st.mean.data().begin());
    std::copy(v->data.begin(), v->data.end(), st.var.data().begin());
  }
}

namespace {

// ---------------------------------------------------------------- SfSNet

class SfsNet final : public Model {
 public:
  explicit SfsNet(const NetConfig& cfg) : Model(cfg) {
    const int c64 = ch(64), c128 = ch(128);
    conv1_ = make_conv("conv.c1", 3, c64, 7, 1);
    bn1_ = make_norm("conv.bn1", c64);
    conv2_ = make_conv("conv.c2", c64, c128, 3, 1);
    bn2_ = make_norm("conv.bn2", c128);
    conv3_ = make_conv("conv.c3", c128, c128, 3, 2);
    for (const char* branch : {"normal", "albedo"}) {
      Stack& s = std::string(branch) == "normal" ? normal_ : albedo_;
      for (int r = 0; r < cfg.n_resblocks; ++r) {
        const std::string p = std::string(branch) + ".res" + std::to_string(r);
        s.blocks.push_back({make_norm(p + ".bn1", c128), make_conv(p + ".c1", c128, c128, 3, 1),
                            make_norm(p + ".bn2", c128), make_conv(p + ".c2", c128, c128, 3, 1)});
      }
      s.out_bn = make_norm(std::string(branch) + ".res_out.bn", c128);
      const std::string h = std::string(branch) + ".head";
      s.head = {make_conv(h + ".c1", c128, c128, 1, 1), make_norm(h + ".bn1", c128),
                make_conv(h + ".c2", c128, c64, 3, 1), make_norm(h + ".bn2", c64),
                make_conv(h + ".out", c64, 3, 1, 1)};
    }
    light_conv_ = make_conv("light.c1", 3 * c128, c128, 1, 1);
    light_bn_ = make_norm("light.bn1", c128);
    light_fc_ = make_linear("light.fc", c128, kLightCoeffs);
  }

  Architecture architecture() const override { return Architecture::kSfsNet; }

  DecompositionOutput forward(const Tensor<float>& images, ad::NormMode mode,
                              ShapeAudit* audit) override {
    using ad::relu;
    Tensor<float> x = relu(bn1_(conv1_(images), mode));
    record(audit, "conv.c1", x);
    x = relu(bn2_(conv2_(x), mode));
    record(audit, "conv.c2", x);
    const Tensor<float> features = conv3_(x);
    record(audit, "conv.c3", features);

    const Tensor<float> nf = run_stack(normal_, features, mode, "normal", audit);
    const Tensor<float> af = run_stack(albedo_, features, mode, "albedo", audit);

    DecompositionOutput out;
    out.normal = run_head(normal_.head, nf, mode, "normal", audit);
    out.albedo = run_head(albedo_.head, af, mode, "albedo", audit);

    Tensor<float> l = ad::concat_channels<float>({features, nf, af});
    record(audit, "light.concat", l);
    l = relu(light_bn_(light_conv_(l), mode));
    record(audit, "light.c1", l);
    l = ad::global_avg_pool(l);
    record(audit, "light.pool", l);
    out.light = light_fc_(l);
    record(audit, "light.fc", out.light);
    return out;
  }

  ShapeAudit declared_shapes(int b) const override {
    const int s = config().input_size, h = s / 2;
    const int c64 = ch(64), c128 = ch(128);
    ShapeAudit a = {{"conv.c1", {b, c64, s, s}}, {"conv.c2", {b, c128, s, s}},
                    {"conv.c3", {b, c128, h, h}}};
    for (const char* branch : {"normal", "albedo"}) {
      for (int r = 0; r < config().n_resblocks; ++r) {
        a.push_back({std::string(branch) + ".res" + std::to_string(r), {b, c128, h, h}});
      }
      a.push_back({std::string(branch) + ".res_out", {b, c128, h, h}});
    }
    for (const char* branch : {"normal", "albedo"}) {
      const std::string p = std::string(branch) + ".head";
      a.push_back({p + ".up", {b, c128, s, s}});
      a.push_back({p + ".c1", {b, c128, s, s}});
      a.push_back({p + ".c2", {b, c64, s, s}});
      a.push_back({p + ".out", {b, 3, s, s}});
    }
    a.push_back({"light.concat", {b, 3 * c128, h, h}});
    a.push_back({"light.c1", {b, c128, h, h}});
    a.push_back({"light.pool", {b, c128}});
    a.push_back({"light.fc", {b, kLightCoeffs}});
    return a;
  }

 private:
  struct ResBlock {
    Norm bn1;
    Conv c1;
    Norm bn2;
    Conv c2;
  };
  struct Head {
    Conv c1;
    Norm bn1;
    Conv c2;
    Norm bn2;
    Conv out;
  };
  struct Stack {
    std::vector<ResBlock> blocks;
    Norm out_bn;
    Head head;
  };

  Tensor<float> run_stack(const Stack& s, const Tensor<float>& in, ad::NormMode mode,
                          const std::string& name, ShapeAudit* audit) const {
    using ad::relu;
    Tensor<float> x = in;
    for (std::size_t r = 0; r < s.blocks.size(); ++r) {
      const ResBlock& blk = s.blocks[r];
      Tensor<float> y = blk.c1(relu(blk.bn1(x, mode)));
      y = blk.c2(relu(blk.bn2(y, mode)));
      x = ad::add(x, y);
      record(audit, name + ".res" + std::to_string(r), x);
    }
    x = relu(s.out_bn(x, mode));
    record(audit, name + ".res_out", x);
    return x;
  }

  Tensor<float> run_head(const Head& h, const Tensor<float>& in, ad::NormMode mode,
                         const std::string& name, ShapeAudit* audit) const {
    using ad::relu;
    Tensor<float> x = ad::bilinear_upsample2x(in);
    record(audit, name + ".head.up", x);
    x = relu(h.bn1(h.c1(x), mode));
    record(audit, name + ".head.c1", x);
    x = relu(h.bn2(h.c2(x), mode));
    record(audit, name + ".head.c2", x);
    x = h.out(x);
    record(audit, name + ".head.out", x);
    return x;
  }

  Conv conv1_, conv2_, conv3_;
  Norm bn1_, bn2_;
  Stack normal_, albedo_;
  Conv light_conv_;
  Norm light_bn_;
  Linear light_fc_;
};

// -------------------------------------------------------- SkipNet / SkipNet+

constexpr int kDecoderChannels[] = {256, 256, 256, 128, 64};

class SkipNet final : public Model {
 public:
  explicit SkipNet(const NetConfig& cfg) : Model(cfg) {
    const int enc[] = {ch(64), ch(128), ch(256), ch(256), ch(256)};
    int cin = 3;
    for (int i = 0; i < 5; ++i) {
      const std::string p = "enc.c" + std::to_string(i + 1);
      enc_conv_[i] = make_conv(p, cin, enc[i], 4, 2);
      if (i > 0) enc_bn_[i] = make_norm(p + ".bn", enc[i]);
      cin = enc[i];
    }
    const int g = cfg.input_size / 32;
    const int feat = ch(256);
    enc_fc_ = make_linear("enc.fc", ch(256) * g * g, feat);
    mlp_normal_ = make_linear("mlp.normal", feat, feat);
    mlp_albedo_ = make_linear("mlp.albedo", feat, feat);
    mlp_light_ = make_linear("mlp.light", feat, feat);
    light_fc_ = make_linear("light.fc", feat, kLightCoeffs);
    for (const char* branch : {"normal", "albedo"}) {
      auto& dec = std::string(branch) == "normal" ? normal_dec_ : albedo_dec_;
      int prev = feat;
      for (int i = 0; i < 5; ++i) {
        const std::string p = std::string(branch) + ".dec.cd" + std::to_string(i + 1);
        const int skip = enc[4 - i];
        const int outc = ch(kDecoderChannels[i]);
        dec.cd[i] = make_deconv(p, prev + skip, outc);
        dec.bn[i] = make_norm(p + ".bn", outc);
        prev = outc;
      }
      dec.out = make_conv(std::string(branch) + ".dec.out", prev, 3, 1, 1);
    }
  }

  Architecture architecture() const override { return Architecture::kSkipNet; }

  DecompositionOutput forward(const Tensor<float>& images, ad::NormMode mode,
                              ShapeAudit* audit) override {
    std::vector<Tensor<float>> enc(5);
    Tensor<float> x = images;
    for (int i = 0; i < 5; ++i) {
      x = enc_conv_[i](x);
      if (i > 0) x = enc_bn_[i](x, mode);
      x = ad::leaky_relu(x, kSlope);
      enc[i] = x;
      record(audit, "enc.c" + std::to_string(i + 1), x);
    }
    const int b = images.dim(0);
    Tensor<float> flat = ad::reshape(x, {b, static_cast<int>(x.numel() / b)});
    Tensor<float> z = ad::leaky_relu(enc_fc_(flat), kSlope);
    record(audit, "enc.fc", z);
    const Tensor<float> zn = ad::leaky_relu(mlp_normal_(z), kSlope);
    const Tensor<float> za = ad::leaky_relu(mlp_albedo_(z), kSlope);
    const Tensor<float> zl = ad::leaky_relu(mlp_light_(z), kSlope);
    record(audit, "mlp.normal", zn);
    record(audit, "mlp.albedo", za);
    record(audit, "mlp.light", zl);

    DecompositionOutput out;
    out.normal = run_decoder(normal_dec_, zn, enc, mode, "normal", audit);
    out.albedo = run_decoder(albedo_dec_, za, enc, mode, "albedo", audit);
    out.light = light_fc_(zl);
    record(audit, "light.fc", out.light);
    return out;
  }

  ShapeAudit declared_shapes(int b) const override {
    const int s = config().input_size;
    const int enc[] = {ch(64), ch(128), ch(256), ch(256), ch(256)};
    ShapeAudit a;
    for (int i = 0; i < 5; ++i) {
      const int r = s >> (i + 1);
      a.push_back({"enc.c" + std::to_string(i + 1), {b, enc[i], r, r}});
    }
    const int feat = ch(256);
    a.push_back({"enc.fc", {b, feat}});
    a.push_back({"mlp.normal", {b, feat}});
    a.push_back({"mlp.albedo", {b, feat}});
    a.push_back({"mlp.light", {b, feat}});
    for (const char* branch : {"normal", "albedo"}) {
      const int g = s / 32;
      a.push_back({std::string(branch) + ".dec.tile", {b, feat, g, g}});
      for (int i = 0; i < 5; ++i) {
        const int r = s >> (4 - i);
        a.push_back({std::string(branch) + ".dec.cd" + std::to_string(i + 1),
                     {b, ch(kDecoderChannels[i]), r, r}});
      }
      a.push_back({std::string(branch) + ".dec.out", {b, 3, s, s}});
    }
    a.push_back({"light.fc", {b, kLightCoeffs}});
    return a;
  }

 private:
  static constexpr double kSlope = 0.2;

  struct Dec {
    Deconv cd[5];
    Norm bn[5];
    Conv out;
  };

  Tensor<float> run_decoder(const Dec& dec, const Tensor<float>& feat,
                            const std::vector<Tensor<float>>& enc, ad::NormMode mode,
                            const std::string& name, ShapeAudit* audit) const {
    const int g = config().input_size / 32;
    Tensor<float> x = ad::tile_spatial(feat, g, g);
    record(audit, name + ".dec.tile", x);
    for (int i = 0; i < 5; ++i) {
      x = ad::concat_channels<float>({x, enc[4 - i]});
      x = ad::leaky_relu(dec.bn[i](dec.cd[i](x), mode), kSlope);
      record(audit, name + ".dec.cd" + std::to_string(i + 1), x);
    }
    x = dec.out(x);
    record(audit, name + ".dec.out", x);
    return x;
  }

  Conv enc_conv_[5];
  Norm enc_bn_[5];
  Linear enc_fc_, mlp_normal_, mlp_albedo_, mlp_light_, light_fc_;
  Dec normal_dec_, albedo_dec_;
};

class SkipNetPlus final : public Model {
 public:
  explicit SkipNetPlus(const NetConfig& cfg) : Model(cfg) {
    // (channels, kernel, stride) in encoder order.
    const int layers[][3] = {{64, 3, 1},  {64, 1, 1},  {64, 3, 2},  {64, 1, 1},
                           {128, 3, 2}, {128, 1, 1}, {256, 3, 2}, {256, 1, 1},
                           {256, 3, 2}, {256, 1, 1}, {256, 3, 2}};
    int cin = 3;
    for (const auto& l : layers) {
      const int idx = static_cast<int>(enc_.size());
      const std::string p = "enc.l" + std::to_string(idx + 1);
      enc_.push_back({make_conv(p, cin, ch(l[0]), l[1], l[2]), make_norm(p + ".bn", ch(l[0])),
                      l[2] == 2});
      cin = ch(l[0]);
    }
    for (int i = 0; i < static_cast<int>(enc_.size()); ++i) {
      if (enc_[i].down) stage_index_.push_back(i);
    }
    for (const char* branch : {"normal", "albedo"}) {
      auto& dec = std::string(branch) == "normal" ? normal_dec_ : albedo_dec_;
      const std::string p = std::string(branch) + ".dec";
      dec.in_conv = make_conv(p + ".c1", ch(256), ch(256), 1, 1);
      dec.in_bn = make_norm(p + ".c1.bn", ch(256));
      int prev = ch(256);
      for (int i = 0; i < 5; ++i) {
        const int skip = enc_[stage_index_[4 - i]].conv.weight->value.dim(0);
        const int outc = ch(kDecoderChannels[i]);
        const std::string q = p + ".cd" + std::to_string(i + 1);
        dec.cd[i] = make_deconv(q, prev + skip, outc);
        dec.bn[i] = make_norm(q + ".bn", outc);
        prev = outc;
      }
      dec.out = make_conv(p + ".out", prev, 3, 1, 1);
    }
    light_fc_ = make_linear("light.fc", ch(256), kLightCoeffs);
  }

  Architecture architecture() const override { return Architecture::kSkipNetPlus; }

  DecompositionOutput forward(const Tensor<float>& images, ad::NormMode mode,
                              ShapeAudit* audit) override {
    std::vector<Tensor<float>> stages;
    Tensor<float> x = images;
    for (std::size_t i = 0; i < enc_.size(); ++i) {
      x = ad::leaky_relu(enc_[i].bn(enc_[i].conv(x), mode), kSlope);
      record(audit, "enc.l" + std::to_string(i + 1), x);
      if (enc_[i].down) stages.push_back(x);
    }
    DecompositionOutput out;
    out.normal = run_decoder(normal_dec_, x, stages, mode, "normal", audit);
    out.albedo = run_decoder(albedo_dec_, x, stages, mode, "albedo", audit);
    Tensor<float> l = ad::global_avg_pool(x);
    record(audit, "light.pool", l);
    out.light = light_fc_(l);
    record(audit, "light.fc", out.light);
    return out;
  }

  ShapeAudit declared_shapes(int b) const override {
    const int s = config().input_size;
    const int layers[][3] = {{64, 3, 1},  {64, 1, 1},  {64, 3, 2},  {64, 1, 1},
                           {128, 3, 2}, {128, 1, 1}, {256, 3, 2}, {256, 1, 1},
                           {256, 3, 2}, {256, 1, 1}, {256, 3, 2}};
    ShapeAudit a;
    int r = s;
    int idx = 1;
    for (const auto& l : layers) {
      if (l[2] == 2) r /= 2;
      a.push_back({"enc.l" + std::to_string(idx++), {b, ch(l[0]), r, r}});
    }
    for (const char* branch : {"normal", "albedo"}) {
      const std::string p = std::string(branch) + ".dec";
      a.push_back({p + ".c1", {b, ch(256), s / 32, s / 32}});
      for (int i = 0; i < 5; ++i) {
        const int res = s >> (4 - i);
        a.push_back({p + ".cd" + std::to_string(i + 1), {b, ch(kDecoderChannels[i]), res, res}});
      }
      a.push_back({p + ".out", {b, 3, s, s}});
    }
    a.push_back({"light.pool", {b, ch(256)}});
    a.push_back({"light.fc", {b, kLightCoeffs}});
    return a;
  }

 private:
  static constexpr double kSlope = 0.3;

  struct EncLayer {
    Conv conv;
    Norm bn;
    bool down;
  };
  struct Dec {
    Conv in_conv;
    Norm in_bn;
    Deconv cd[5];
    Norm bn[5];
    Conv out;
  };

  Tensor<float> run_decoder(const Dec& dec, const Tensor<float>& enc_out,
                            const std::vector<Tensor<float>>& stages, ad::NormMode mode,
                            const std::string& name, ShapeAudit* audit) const {
    Tensor<float> x = ad::leaky_relu(dec.in_bn(dec.in_conv(enc_out), mode), kSlope);
    record(audit, name + ".dec.c1", x);
    for (int i = 0; i < 5; ++i) {
      x = ad::concat_channels<float>({x, stages[4 - i]});
      x = ad::leaky_relu(dec.bn[i](dec.cd[i](x), mode), kSlope);
      record(audit, name + ".dec.cd" + std::to_string(i + 1), x);
    }
    x = dec.out(x);
    record(audit, name + ".dec.out", x);
    return x;
  }

  std::vector<EncLayer> enc_;
  std::vector<int> stage_index_;
  Dec normal_dec_, albedo_dec_;
  Linear light_fc_;
};

}  // namespace

std::unique_ptr<Model> build_sfsnet(const NetConfig& cfg) { return std::make_unique<SfsNet>(cfg); }
std::unique_ptr<Model> build_skipnet(const NetConfig& cfg) { return std::make_unique<SkipNet>(cfg); }
std::unique_ptr<Model> build_skipnet_plus(const NetConfig& cfg) {
  return std::make_unique<SkipNetPlus>(cfg);
}

std::unique_ptr<Model> build_model(Architecture arch, const NetConfig& cfg) {
  switch (arch) {
    case Architecture::kSfsNet: return build_sfsnet(cfg);
    case Architecture::kSkipNet: return build_skipnet(cfg);
    case Architecture::kSkipNetPlus: return build_skipnet_plus(cfg);
  }
  throw std::invalid_argument("unknown architecture");
}

void save_model(const Model& model, const std::filesystem::path& path, bool include_optimizer) {
  ad::write_checkpoint(path, model.state(include_optimizer));
  const NetConfig& c = model.config();
  nlohmann::json doc = {{"architecture", to_string(model.architecture())},
                        {"input_size", c.input_size},
                        {"width_scale", c.width_scale},
                        {"n_resblocks", c.n_resblocks},
                        {"seed", c.seed}};
  write_text(path.string() + ".json", doc.dump(2) + "\n");
}

std::unique_ptr<Model> load_model(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
  const std::filesystem::path meta = path.string() + ".json";
  if (!std::filesystem::exists(meta)) {
    throw IoError("model description not found: " + meta.string());
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text(meta));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(meta.string() + ": " + e.what());
  }
  NetConfig cfg;
  cfg.input_size = doc.at("input_size").get<int>();
  cfg.width_scale = doc.at("width_scale").get<double>();
  cfg.n_resblocks = doc.at("n_resblocks").get<int>();
  cfg.seed = doc.at("seed").get<std::uint64_t>();
  auto model = build_model(parse_architecture(doc.at("architecture").get<std::string>()), cfg);
  model->load_state(ad::read_checkpoint(path));
  return model;
}

Tensor<float> stack_maps(const std::vector<const Map3*>& maps) {
  if (maps.empty()) throw std::invalid_argument("stack_maps: empty batch");
  const int h = maps[0]->height(), w = maps[0]->width();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor<float> t({static_cast<int>(maps.size()), 3, h, w});
  for (std::size_t b = 0; b < maps.size(); ++b) {
    if (maps[b]->height() != h || maps[b]->width() != w) {
      throw std::invalid_argument("stack_maps: inconsistent map sizes");
    }
    float* dst = t.ptr() + b * 3 * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      const float* src = maps[b]->pixel(p);
      for (int c = 0; c < 3; ++c) dst[c * plane + p] = src[c];
    }
  }
  return t;
}

Tensor<float> stack_masks(const std::vector<const Mask*>& masks) {
  if (masks.empty()) throw std::invalid_argument("stack_masks: empty batch");
  const int h = masks[0]->height(), w = masks[0]->width();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor<float> t({static_cast<int>(masks.size()), 1, h, w});
  for (std::size_t b = 0; b < masks.size(); ++b) {
    if (masks[b]->height() != h || masks[b]->width() != w) {
      throw std::invalid_argument("stack_masks: inconsistent mask sizes");
    }
    for (std::size_t p = 0; p < plane; ++p) t.ptr()[b * plane + p] = masks[b]->at(p) ? 1.0f : 0.0f;
  }
  return t;
}

Tensor<float> stack_lights(const std::vector<const LightSH*>& lights) {
  Tensor<float> t({static_cast<int>(lights.size()), kLightCoeffs});
  for (std::size_t b = 0; b < lights.size(); ++b) {
    std::copy(lights[b]->coeffs.begin(), lights[b]->coeffs.end(), t.ptr() + b * kLightCoeffs);
  }
  return t;
}

void unstack_map(const Tensor<float>& t, int index, Map3& out) {
  const int h = t.dim(2), w = t.dim(3);
  if (out.height() != h || out.width() != w) {
    throw std::invalid_argument("unstack_map: destination has the wrong size");
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const float* src = t.ptr() + static_cast<std::size_t>(index) * 3 * plane;
  for (std::size_t p = 0; p < plane; ++p) {
    float* dst = out.pixel(p);
    for (int c = 0; c < 3; ++c) dst[c] = src[c * plane + p];
  }
}

LightSH unstack_light(const Tensor<float>& t, int index) {
  LightSH l;
  std::copy_n(t.ptr() + static_cast<std::size_t>(index) * kLightCoeffs, kLightCoeffs,
              l.coeffs.begin());
  return l;
}

std::vector<Decomposition> decompose(Model& model, const std::vector<const ColorMap*>& images,
                                     const std::vector<const Mask*>& masks) {
  if (images.size() != masks.size()) {
    throw std::invalid_argument("decompose: images and masks differ in count");
  }
  std::vector<Decomposition> out;
  if (images.empty()) return out;
  const int s = model.config().input_size;
  for (const ColorMap* im : images) {
    if (im->height() != s || im->width() != s) {
      throw std::invalid_argument("decompose: model expects " + std::to_string(s) + "x" +
                                  std::to_string(s) + " images, got " +
                                  std::to_string(im->height()) + "x" + std::to_string(im->width()));
    }
  }
  ad::NoGradScope no_grad;
  std::vector<const Map3*> maps(images.begin(), images.end());
  const DecompositionOutput pred = model.forward(stack_maps(maps), ad::NormMode::kEval);
  for (std::size_t b = 0; b < images.size(); ++b) {
    Decomposition d;
    VectorFieldMap raw(s, s, VectorRole::kGeneric);
    unstack_map(pred.normal, static_cast<int>(b), raw);
    d.normal = normalize_normals(raw, *masks[b]);
    d.albedo = ColorMap(s, s, ColorRole::kAlbedo);
    unstack_map(pred.albedo, static_cast<int>(b), d.albedo);
    for (float& v : d.albedo.values()) v = std::clamp(v, 0.0f, 1.0f);
    d.light = unstack_light(pred.light, static_cast<int>(b));
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace sfskit::nets
