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

// Differentiable operators. Maps are NCHW, feature vectors are [batch, n].
//
// Padding conventions (chosen so that every resolution halves or doubles
// exactly):
//   k = 1, 3, 7   pad (k - 1) / 2; stride 1 keeps H, stride 2 gives ceil(H/2)
//   k = 4         stride 2 only, pad 1; H -> H/2 for even H
//   transpose     k = 4, stride 2, pad 1; H -> 2H

#ifndef SFSKIT_AD_OPS_HPP_
#define SFSKIT_AD_OPS_HPP_

#include <vector>

#include "sfskit/ad/tensor.hpp"

namespace sfskit::ad {

// Padding used by conv2d for a given kernel/stride pair.
int conv_padding(int kernel, int stride);
int conv_output_extent(int in, int kernel, int stride, int pad);

// weight [out, in, k, k], bias [out] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride);

// weight [in, out, 4, 4] (the transpose of the matching conv2d weight),
// bias [out] or undefined.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight,
                           const Tensor<T>& bias);

// Running statistics of one batch-norm layer.
template <typename T>
struct BatchNormStats {
  Tensor<T> mean;
  Tensor<T> var;
  explicit BatchNormStats(int channels = 0)
      : mean({channels}, T(0)), var({channels}, T(1)) {}
};

enum class NormMode { kTrain, kEval };

// Per-channel normalization over (batch, height, width). Train mode uses the
// batch statistics (biased variance) and folds them into `stats` with
// `momentum` (unbiased variance); eval mode uses `stats`.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormStats<T>& stats, NormMode mode, double momentum = 0.1,
                     double eps = 1e-5);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, double slope);

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return leaky_relu(x, 0.0);
}

// 2x bilinear upsampling with half-pixel centers (align_corners = false):
// output index o samples input coordinate o/2 - 1/4, clamped to the border.
template <typename T>
Tensor<T> bilinear_upsample2x(const Tensor<T>& x);

// [B, C, H, W] -> [B, C]
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

// x [B, in], weight [out, in], bias [out] or undefined.
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

// [B, C] -> [B, C, H, W] by replication.
template <typename T>
Tensor<T> tile_spatial(const Tensor<T>& x, int height, int width);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, double s);

// sum_i weights[i] * terms[i] over scalar tensors.
template <typename T>
Tensor<T> weighted_sum(const std::vector<Tensor<T>>& terms, const std::vector<double>& weights);

// Per-pixel v / max(|v|, eps) over the channel axis of [B, 3, H, W].
template <typename T>
Tensor<T> normalize_channels(const Tensor<T>& x, double eps = 1e-6);

// normals [B, 3, H, W], light [B, 27] -> shading [B, 3, H, W] with
// s_c(p) = Y(n(p)) . L_c. Normals are used as given.
template <typename T>
Tensor<T> sh_shading(const Tensor<T>& normals, const Tensor<T>& light);

// Mean of |x - y| over masked elements. mask is [B, 1, H, W] (broadcast over
// channels) or the shape of x; entries are 0 or 1.
template <typename T>
Tensor<T> masked_l1(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& mask);

// Mean of (x - y)^2 over all elements.
template <typename T>
Tensor<T> mse(const Tensor<T>& x, const Tensor<T>& y);

// sum_i x_i * w_i with constant w; used to project outputs onto scalars.
template <typename T>
Tensor<T> dot_const(const Tensor<T>& x, const std::vector<T>& w);

}  // namespace sfskit::ad

#endif  // SFSKIT_AD_OPS_HPP_
