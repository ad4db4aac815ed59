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

#include "sfskit/sh.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sfskit {

bool LightSH::all_finite() const {
  return std::all_of(coeffs.begin(), coeffs.end(),
                     [](float v) { return std::isfinite(v); });
}

LightSH LightSH::ambient(float level) {
  LightSH l;
  for (int c = 0; c < kNumChannels; ++c) {
    l.at(c, 0) = static_cast<float>(level * sh_const::kSqrt4Pi);
  }
  return l;
}

Mask::Mask(int height, int width, bool value)
    : height_(height),
      width_(width),
      bits_(static_cast<std::size_t>(std::max(height, 0)) * std::max(width, 0),
            value ? 1 : 0) {
  if (height < 0 || width < 0) {
    throw std::invalid_argument("mask dimensions must be non-negative");
  }
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

double Mask::coverage() const {
  return bits_.empty() ? 0.0 : static_cast<double>(count()) / bits_.size();
}

namespace {

void require_dims(const Map3& a, const Map3& b, const char* what) {
  if (!a.same_dims(b)) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" +
                                std::to_string(a.height()) + "x" +
                                std::to_string(a.width()) + " vs " +
                                std::to_string(b.height()) + "x" +
                                std::to_string(b.width()) + ")");
  }
}

void require_dims(const Map3& a, const Mask& m, const char* what) {
  if (!a.same_dims(m)) {
    throw std::invalid_argument(std::string(what) +
                                ": map and mask dimensions differ");
  }
}

std::size_t require_nonempty(const Mask& m, const char* what) {
  const std::size_t n = m.count();
  if (n == 0) throw std::invalid_argument(std::string(what) + ": empty mask");
  return n;
}

double masked_mean_l1(const Map3& a, const Map3& b, const Mask& mask,
                      const char* what) {
  require_dims(a, b, what);
  require_dims(a, mask, what);
  const std::size_t n = require_nonempty(mask, what);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.pixels(); ++i) {
    if (!mask.at(i)) continue;
    const float* pa = a.pixel(i);
    const float* pb = b.pixel(i);
    for (int c = 0; c < 3; ++c) {
      sum += std::abs(static_cast<double>(pa[c]) - static_cast<double>(pb[c]));
    }
  }
  return sum / (3.0 * static_cast<double>(n));
}

}  // namespace

ShBasis sh_basis(const Eigen::Vector3d& normal) {
  const double norm = normal.norm();
  if (!(std::abs(norm - 1.0) <= 1e-6)) {
    throw std::invalid_argument("sh_basis: normal is not unit length (|n| = " +
                                std::to_string(norm) + ")");
  }
  return sh_basis_unchecked(normal.x(), normal.y(), normal.z());
}

ColorMap shading(const VectorFieldMap& normals, const LightSH& light,
                 const Mask& mask) {
  require_dims(normals, mask, "shading");
  ColorMap out(normals.height(), normals.width(), ColorRole::kShading);
  for (std::size_t i = 0; i < normals.pixels(); ++i) {
    if (!mask.at(i)) continue;
    const float* n = normals.pixel(i);
    const ShBasis y = sh_basis_unchecked<double>(n[0], n[1], n[2]);
    float* s = out.pixel(i);
    for (int c = 0; c < kNumChannels; ++c) {
      double acc = 0.0;
      for (int k = 0; k < kShBasisSize; ++k) acc += y[k] * light.at(c, k);
      s[c] = static_cast<float>(acc);
    }
  }
  return out;
}

ColorMap render(const VectorFieldMap& normals, const ColorMap& albedo,
                const LightSH& light, const Mask& mask) {
  require_dims(normals, albedo, "render");
  ColorMap out = shading(normals, light, mask);
  out.set_role(ColorRole::kImage);
  for (std::size_t i = 0; i < out.pixels(); ++i) {
    float* p = out.pixel(i);
    const float* a = albedo.pixel(i);
    for (int c = 0; c < 3; ++c) p[c] *= a[c];
  }
  return out;
}

double recon_loss(const ColorMap& image, const VectorFieldMap& normals,
                  const ColorMap& albedo, const LightSH& light,
                  const Mask& mask) {
  require_dims(image, normals, "recon_loss");
  require_nonempty(mask, "recon_loss");
  const ColorMap rendered = render(normals, albedo, light, mask);
  return masked_mean_l1(image, rendered, mask, "recon_loss");
}

double normal_loss(const VectorFieldMap& pred, const VectorFieldMap& gt,
                   const Mask& mask) {
  return masked_mean_l1(pred, gt, mask, "normal_loss");
}

double albedo_loss(const ColorMap& pred, const ColorMap& gt, const Mask& mask) {
  return masked_mean_l1(pred, gt, mask, "albedo_loss");
}

double light_loss(const LightSH& pred, const LightSH& gt) {
  double sum = 0.0;
  for (int i = 0; i < kLightCoeffs; ++i) {
    const double d = static_cast<double>(pred.coeffs[i]) - gt.coeffs[i];
    sum += d * d;
  }
  return sum / kLightCoeffs;
}

double total_loss(const LossTerms& terms, const LossWeights& w) {
  return w.recon * terms.recon + w.normal * terms.normal +
         w.albedo * terms.albedo + w.light * terms.light;
}

VectorFieldMap normalize_normals(const VectorFieldMap& raw, const Mask& mask) {
  require_dims(raw, mask, "normalize_normals");
  VectorFieldMap out(raw.height(), raw.width(), VectorRole::kNormal);
  for (std::size_t i = 0; i < raw.pixels(); ++i) {
    if (!mask.at(i)) {
      out.set_vec(i, Eigen::Vector3d::UnitZ());
      continue;
    }
    const Eigen::Vector3d v = raw.vec(i);
    const double norm = v.norm();
    if (norm < 1e-6) {
      out.set_vec(i, Eigen::Vector3d::UnitZ());
    } else {
      out.set_vec(i, v / norm);
    }
  }
  return out;
}

LightSH dir_light_to_sh(const Eigen::Vector3d& direction,
                        const std::array<float, 3>& intensity,
                        const std::array<float, 3>& ambient) {
  const ShBasis y = sh_basis(direction);
  constexpr std::array<double, kShBasisSize> gain = {
      kBandGain0, kBandGain1, kBandGain1, kBandGain1, kBandGain2,
      kBandGain2, kBandGain2, kBandGain2, kBandGain2};
  LightSH l;
  for (int c = 0; c < kNumChannels; ++c) {
    for (int k = 0; k < kShBasisSize; ++k) {
      double v = intensity[c] * gain[k] * y[k];
      if (k == 0) v += ambient[c] * sh_const::kSqrt4Pi;
      l.at(c, k) = static_cast<float>(v);
    }
  }
  return l;
}

}  // namespace sfskit
