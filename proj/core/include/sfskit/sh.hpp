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

// Lambertian rendering under second-order spherical-harmonics lighting.
//
// For a unit normal n = (x, y, z) the basis is
//
//   Y00  = 1 / sqrt(4 pi)
//   Y10  = sqrt(3 / 4 pi) z
//   Y11e = sqrt(3 / 4 pi) x
//   Y11o = sqrt(3 / 4 pi) y
//   Y20  = 1/2 sqrt(5 / 4 pi) (3 z^2 - 1)
//   Y21e = 3 sqrt(5 / 12 pi) x z
//   Y21o = 3 sqrt(5 / 12 pi) y z
//   Y22e = 3/2 sqrt(5 / 12 pi) (x^2 - y^2)
//   Y22o = 3 sqrt(5 / 12 pi) x y
//
// and a pixel renders as I_c(p) = A_c(p) * dot(Y(n(p)), L_c). Shading is
// never clamped here; clamping only happens when writing 8-bit files.
//
// All losses are masked means (not sums), so their weights do not depend on
// image resolution.

#ifndef SFSKIT_SH_HPP_
#define SFSKIT_SH_HPP_

#include <array>
#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "sfskit/types.hpp"

namespace sfskit {

using ShBasis = std::array<double, kShBasisSize>;

namespace sh_const {
inline const double kY00 = 0.5 / std::sqrt(std::numbers::pi);
inline const double kY1 = std::sqrt(3.0 / (4.0 * std::numbers::pi));
inline const double kY20 = 0.5 * std::sqrt(5.0 / (4.0 * std::numbers::pi));
inline const double kY2 = 3.0 * std::sqrt(5.0 / (12.0 * std::numbers::pi));
inline const double kSqrt4Pi = 2.0 * std::sqrt(std::numbers::pi);
}  // namespace sh_const

// Basis without the unit-length check. Used on hot paths where the caller
// has already normalized.
template <typename T>
inline std::array<T, kShBasisSize> sh_basis_unchecked(T x, T y, T z) {
  const T c0 = static_cast<T>(sh_const::kY00);
  const T c1 = static_cast<T>(sh_const::kY1);
  const T c20 = static_cast<T>(sh_const::kY20);
  const T c2 = static_cast<T>(sh_const::kY2);
  return {c0,
          c1 * z,
          c1 * x,
          c1 * y,
          c20 * (3 * z * z - 1),
          c2 * x * z,
          c2 * y * z,
          c2 / 2 * (x * x - y * y),
          c2 * x * y};
}

// Throws std::invalid_argument when |normal| differs from 1 by more than 1e-6.
ShBasis sh_basis(const Eigen::Vector3d& normal);

ColorMap shading(const VectorFieldMap& normals, const LightSH& light,
                 const Mask& mask);

ColorMap render(const VectorFieldMap& normals, const ColorMap& albedo,
                const LightSH& light, const Mask& mask);

double recon_loss(const ColorMap& image, const VectorFieldMap& normals,
                  const ColorMap& albedo, const LightSH& light,
                  const Mask& mask);

double normal_loss(const VectorFieldMap& pred, const VectorFieldMap& gt,
                   const Mask& mask);
double albedo_loss(const ColorMap& pred, const ColorMap& gt, const Mask& mask);

// Mean squared error over the 27 coefficients.
double light_loss(const LightSH& pred, const LightSH& gt);

struct LossTerms {
  double recon = 0.0;
  double normal = 0.0;
  double albedo = 0.0;
  double light = 0.0;
};

double total_loss(const LossTerms& terms, const LossWeights& weights = {});

// Divides each masked vector by max(|v|, 1e-6); a zero vector becomes
// (0,0,1). Pixels outside the mask are set to (0,0,1).
VectorFieldMap normalize_normals(const VectorFieldMap& raw, const Mask& mask);

// Directional light convolved with the clamped-cosine kernel, truncated to
// second order. Per channel
//
//   L = ambient * (sqrt(4 pi), 0, ..., 0) + intensity * a_l * Y_lm(d)
//
// with band gains a0 = pi, a1 = 2 pi / 3, a2 = pi / 4. The resulting shading
// approximates ambient + intensity * max(0, dot(n, d)).
LightSH dir_light_to_sh(const Eigen::Vector3d& direction,
                        const std::array<float, 3>& intensity,
                        const std::array<float, 3>& ambient);

inline constexpr double kBandGain0 = std::numbers::pi;
inline constexpr double kBandGain1 = 2.0 * std::numbers::pi / 3.0;
inline constexpr double kBandGain2 = std::numbers::pi / 4.0;

}  // namespace sfskit

#endif  // SFSKIT_SH_HPP_
