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

#ifndef SFSKIT_TYPES_HPP_
#define SFSKIT_TYPES_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace sfskit {

inline constexpr int kShBasisSize = 9;
inline constexpr int kNumChannels = 3;
inline constexpr int kLightCoeffs = kShBasisSize * kNumChannels;

// Second-order spherical-harmonics lighting for an RGB scene.
//
// Coefficients are stored channel-major: channel c, basis index k lives at
// coeffs[9 * c + k]. The basis order within a channel is
//   [Y00, Y10, Y11e, Y11o, Y20, Y21e, Y21o, Y22e, Y22o]
// where Y10 multiplies z, Y11e multiplies x and Y11o multiplies y.
struct LightSH {
  std::array<float, kLightCoeffs> coeffs{};

  float& at(int channel, int k) { return coeffs[kShBasisSize * channel + k]; }
  float at(int channel, int k) const {
    return coeffs[kShBasisSize * channel + k];
  }
  std::span<const float, kShBasisSize> channel(int c) const {
    return std::span<const float, kShBasisSize>(coeffs.data() + kShBasisSize * c,
                                                kShBasisSize);
  }

  bool all_finite() const;

  // Light whose shading is `level` for every normal on every channel.
  static LightSH ambient(float level = 1.0f);

  friend bool operator==(const LightSH&, const LightSH&) = default;
};

// H x W boolean grid. Row-major, row 0 at the top of the image.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, bool value = false);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return bits_.size(); }

  bool operator()(int y, int x) const { return bits_[index(y, x)] != 0; }
  void set(int y, int x, bool v) { bits_[index(y, x)] = v ? 1 : 0; }
  bool at(std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }

  std::size_t count() const;
  double coverage() const;

  static Mask full(int height, int width) { return Mask(height, width, true); }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  std::size_t index(int y, int x) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Shared storage for H x W x 3 float maps, channel-fastest.
class Map3 {
 public:
  Map3() = default;
  Map3(int height, int width, float fill = 0.0f)
      : height_(height),
        width_(width),
        values_(static_cast<std::size_t>(height) * width * 3, fill) {
    if (height < 0 || width < 0) {
      throw std::invalid_argument("map dimensions must be non-negative");
    }
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }

  float* pixel(std::size_t i) { return values_.data() + 3 * i; }
  const float* pixel(std::size_t i) const { return values_.data() + 3 * i; }
  float* pixel(int y, int x) { return pixel(static_cast<std::size_t>(y) * width_ + x); }
  const float* pixel(int y, int x) const {
    return pixel(static_cast<std::size_t>(y) * width_ + x);
  }

  std::vector<float>& values() { return values_; }
  const std::vector<float>& values() const { return values_; }

  bool same_dims(const Map3& o) const {
    return height_ == o.height_ && width_ == o.width_;
  }
  bool same_dims(const Mask& m) const {
    return height_ == m.height() && width_ == m.width();
  }

 protected:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> values_;
};

enum class VectorRole { kNormal, kGeneric };

// Per-pixel 3-vectors. Normal maps use a camera-facing convention:
// x to the right, y up, z towards the viewer.
class VectorFieldMap : public Map3 {
 public:
  VectorFieldMap() = default;
  VectorFieldMap(int height, int width, VectorRole role = VectorRole::kNormal)
      : Map3(height, width), role_(role) {}

  VectorRole role() const { return role_; }
  void set_role(VectorRole r) { role_ = r; }

  Eigen::Vector3d vec(std::size_t i) const {
    const float* p = pixel(i);
    return {p[0], p[1], p[2]};
  }
  void set_vec(std::size_t i, const Eigen::Vector3d& v) {
    float* p = pixel(i);
    p[0] = static_cast<float>(v.x());
    p[1] = static_cast<float>(v.y());
    p[2] = static_cast<float>(v.z());
  }

  friend bool operator==(const VectorFieldMap& a, const VectorFieldMap& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ &&
           a.values_ == b.values_;
  }

 private:
  VectorRole role_ = VectorRole::kNormal;
};

enum class ColorRole { kImage, kAlbedo, kShading };

// Per-pixel RGB. Image and albedo values live in [0,1]; shading may leave
// that range.
class ColorMap : public Map3 {
 public:
  ColorMap() = default;
  ColorMap(int height, int width, ColorRole role = ColorRole::kImage,
           float fill = 0.0f)
      : Map3(height, width, fill), role_(role) {}

  ColorRole role() const { return role_; }
  void set_role(ColorRole r) { role_ = r; }

  friend bool operator==(const ColorMap& a, const ColorMap& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ &&
           a.values_ == b.values_;
  }

 private:
  ColorRole role_ = ColorRole::kImage;
};

struct LossWeights {
  double recon = 0.5;
  double normal = 0.5;
  double albedo = 0.5;
  double light = 0.1;
};

}  // namespace sfskit

#endif  // SFSKIT_TYPES_HPP_
