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

// The three decomposition networks.
//
// Notation below: C(n,k) is conv + batch norm + ReLU with n filters of size
// k; C*(n,k) is a bare convolution; CD(n) is a 4x4 stride-2 transposed conv
// + batch norm + ReLU; BU is 2x bilinear upsampling. All channel counts are
// multiplied by NetConfig::width_scale.
//
// SfSNet (residual decomposition, input S):
//   conv:   C(64,7) - C(128,3) - C*(128,3)/2                  -> 128 x S/2
//   normal/albedo residual stacks (no weight sharing):
//           n x [BN - ReLU - C*(128,3) - BN - ReLU - C*(128,3) + skip],
//           then BN - ReLU                                      -> 128 x S/2
//   normal/albedo heads: BU - C(128,1) - C(64,3) - C*(3,1)     -> 3 x S
//   light:  concat(conv, normal, albedo features) -> C(128,1) -> global
//           average pool -> fully connected -> 27
//
// SkipNet (leaky ReLU 0.2): encoder C*(64,4)/2 - C(128,4)/2 - C(256,4)/2 -
//   C(256,4)/2 - C(256,4)/2 - fc256; three fc256 branches for normal,
//   albedo and light; the normal/albedo features are replicated over the
//   S/32 grid and decoded by CD256 - CD256 - CD256 - CD128 - CD64 - C*(3,1).
//   Each CD input is concatenated with the encoder output at the same
//   resolution. Light is fc(256 -> 27) on the light branch.
//
// SkipNet+ (leaky ReLU 0.3): fully convolutional encoder
//   Co64(3) - Co64(1) - C64(3)/2 - Co64(1) - C128(3)/2 - Co128(1) -
//   C256(3)/2 - Co256(1) - C256(3)/2 - Co256(1) - C256(3)/2,
//   two decoders C256(1) - CD256 - CD256 - CD256 - CD128 - CD64 - C*(3,1)
//   with the same skip rule, and light = fc(avgpool(encoder output)).

#ifndef SFSKIT_NETS_HPP_
#define SFSKIT_NETS_HPP_

#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sfskit/ad/checkpoint.hpp"
#include "sfskit/ad/ops.hpp"
#include "sfskit/ad/optim.hpp"
#include "sfskit/ad/tensor.hpp"
#include "sfskit/photometrics.hpp"
#include "sfskit/types.hpp"

namespace sfskit::nets {

using ad::Tensor;

enum class Architecture { kSfsNet, kSkipNet, kSkipNetPlus };

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& name);

struct NetConfig {
  int input_size = 64;
  double width_scale = 0.5;
  int n_resblocks = 5;
  std::uint64_t seed = 1;
};

// Throws std::invalid_argument for configurations the layer arithmetic
// cannot honour.
void validate(const NetConfig& cfg);

struct DecompositionOutput {
  Tensor<float> normal;  // [B, 3, S, S], not normalized
  Tensor<float> albedo;  // [B, 3, S, S]
  Tensor<float> light;   // [B, 27]
};

struct LayerShape {
  std::string layer;
  ad::Shape shape;
  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};
using ShapeAudit = std::vector<LayerShape>;

class Model {
 public:
  virtual ~Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  virtual Architecture architecture() const = 0;
  const NetConfig& config() const { return cfg_; }

  // images: [B, 3, S, S]. When `audit` is given, every layer appends its
  // executed output shape.
  virtual DecompositionOutput forward(const Tensor<float>& images, ad::NormMode mode,
                                      ShapeAudit* audit = nullptr) = 0;

  // Output shapes predicted from the configuration alone, in forward order.
  virtual ShapeAudit declared_shapes(int batch) const = 0;

  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  std::size_t parameter_count() const;

  // Parameters and batch-norm statistics, optionally with Adam state.
  std::vector<ad::NamedTensor> state(bool include_optimizer) const;
  void load_state(const std::vector<ad::NamedTensor>& entries);

 protected:
  explicit Model(const NetConfig& cfg);

  ad::Parameter* add_param(const std::string& name, ad::Shape shape, double init_std);
  ad::BatchNormStats<float>* add_bn_stats(const std::string& name, int channels);
  int ch(int base_channels) const;

  struct Conv {
    ad::Parameter* weight = nullptr;
    ad::Parameter* bias = nullptr;
    int stride = 1;
    Tensor<float> operator()(const Tensor<float>& x) const;
  };
  struct Deconv {
    ad::Parameter* weight = nullptr;
    ad::Parameter* bias = nullptr;
    Tensor<float> operator()(const Tensor<float>& x) const;
  };
  struct Norm {
    ad::Parameter* gamma = nullptr;
    ad::Parameter* beta = nullptr;
    ad::BatchNormStats<float>* stats = nullptr;
    Tensor<float> operator()(const Tensor<float>& x, ad::NormMode mode) const;
  };
  struct Linear {
    ad::Parameter* weight = nullptr;
    ad::Parameter* bias = nullptr;
    Tensor<float> operator()(const Tensor<float>& x) const;
  };

  Conv make_conv(const std::string& name, int cin, int cout, int k, int stride);
  Deconv make_deconv(const std::string& name, int cin, int cout);
  Norm make_norm(const std::string& name, int channels);
  Linear make_linear(const std::string& name, int in, int out);

 private:
  NetConfig cfg_;
  std::mt19937_64 rng_;
  std::deque<ad::Parameter> params_;
  std::deque<std::pair<std::string, ad::BatchNormStats<float>>> bn_stats_;
};

std::unique_ptr<Model> build_sfsnet(const NetConfig& cfg);
std::unique_ptr<Model> build_skipnet(const NetConfig& cfg);
std::unique_ptr<Model> build_skipnet_plus(const NetConfig& cfg);
std::unique_ptr<Model> build_model(Architecture arch, const NetConfig& cfg);

// Writes `path` (SFSCKPT) and `path` + ".json" holding the architecture and
// configuration, so a checkpoint can be reloaded without other context.
void save_model(const Model& model, const std::filesystem::path& path,
                bool include_optimizer = false);
std::unique_ptr<Model> load_model(const std::filesystem::path& path);

// Batch packing between maps and NCHW tensors.
Tensor<float> stack_maps(const std::vector<const Map3*>& maps);
Tensor<float> stack_masks(const std::vector<const Mask*>& masks);
Tensor<float> stack_lights(const std::vector<const LightSH*>& lights);
void unstack_map(const Tensor<float>& t, int index, Map3& out);
LightSH unstack_light(const Tensor<float>& t, int index);

// Eval-mode inference: normals renormalized on the mask (off-mask pixels
// are (0,0,1)), albedo clamped to [0,1], lighting as predicted.
std::vector<Decomposition> decompose(Model& model, const std::vector<const ColorMap*>& images,
                                     const std::vector<const Mask*>& masks);

}  // namespace sfskit::nets

#endif  // SFSKIT_NETS_HPP_
