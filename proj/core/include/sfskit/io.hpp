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

// File formats.
//
// FMAP: "FMAP" magic, then little-endian u32 version (=1), u32 H, u32 W,
// u32 C, followed by H*W*C little-endian float32 values, row-major and
// channel-fastest. Masks are stored with C = 1 and values 0 or 1.
//
// Lighting: a JSON document {"sh": [27 numbers], "note": "..."} with the
// coefficients channel-major.
//
// PNG: 8-bit RGB/gray. Colors are clamped to [0,1] before quantizing.
// Normal maps are visualized by mapping [-1,1] linearly to [0,255].

#ifndef SFSKIT_IO_HPP_
#define SFSKIT_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfskit/types.hpp"

namespace sfskit {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FloatMap {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;
  std::vector<float> data;

  friend bool operator==(const FloatMap&, const FloatMap&) = default;
};

inline constexpr std::uint32_t kFmapVersion = 1;

void write_fmap(const std::filesystem::path& path, const FloatMap& map);
FloatMap read_fmap(const std::filesystem::path& path);

FloatMap to_float_map(const Map3& map);
FloatMap to_float_map(const Mask& mask);
ColorMap color_map_from(const FloatMap& map, ColorRole role);
VectorFieldMap vector_map_from(const FloatMap& map, VectorRole role);
Mask mask_from(const FloatMap& map);

std::string light_to_json(const LightSH& light, const std::string& note = {});
LightSH light_from_json(const std::string& text);
void write_light(const std::filesystem::path& path, const LightSH& light,
                 const std::string& note = {});
LightSH read_light(const std::filesystem::path& path);

struct Image8 {
  int height = 0;
  int width = 0;
  int channels = 0;  // 1 or 3
  std::vector<std::uint8_t> data;
};

void write_png(const std::filesystem::path& path, const Image8& image);
Image8 read_png(const std::filesystem::path& path);

std::uint8_t to_8bit(double v);

Image8 color_to_image8(const ColorMap& map);
Image8 normals_to_image8(const VectorFieldMap& map, const Mask* mask = nullptr);
Image8 mask_to_image8(const Mask& mask);

ColorMap color_map_from(const Image8& image, ColorRole role);
Mask mask_from(const Image8& image);

// Loads a color map from .fmap or .png by extension.
ColorMap load_color_map(const std::filesystem::path& path, ColorRole role);
Mask load_mask(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace sfskit

#endif  // SFSKIT_IO_HPP_
