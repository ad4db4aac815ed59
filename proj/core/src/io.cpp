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

#include "sfskit/io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>

#include <nlohmann/json.hpp>

namespace sfskit {

namespace {

constexpr std::array<char, 4> kFmapMagic = {'F', 'M', 'A', 'P'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_all(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

void write_fmap(const std::filesystem::path& path, const FloatMap& map) {
  const std::size_t n =
      static_cast<std::size_t>(map.height) * map.width * map.channels;
  if (map.data.size() != n) {
    throw std::invalid_argument("write_fmap: payload size does not match header");
  }
  std::string bytes(kFmapMagic.begin(), kFmapMagic.end());
  bytes.reserve(20 + 4 * n);
  put_u32(bytes, kFmapVersion);
  put_u32(bytes, map.height);
  put_u32(bytes, map.width);
  put_u32(bytes, map.channels);
  for (float v : map.data) put_u32(bytes, std::bit_cast<std::uint32_t>(v));
  write_all(path, bytes);
}

FloatMap read_fmap(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 20 || std::memcmp(p, kFmapMagic.data(), 4) != 0) {
    throw IoError(path.string() + ": not an FMAP file");
  }
  if (get_u32(p + 4) != kFmapVersion) {
    throw IoError(path.string() + ": unsupported FMAP version " +
                  std::to_string(get_u32(p + 4)));
  }
  FloatMap map;
  map.height = get_u32(p + 8);
  map.width = get_u32(p + 12);
  map.channels = get_u32(p + 16);
  const std::size_t n =
      static_cast<std::size_t>(map.height) * map.width * map.channels;
  if (bytes.size() != 20 + 4 * n) {
    throw IoError(path.string() + ": truncated or oversized FMAP payload");
  }
  map.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    map.data[i] = std::bit_cast<float>(get_u32(p + 20 + 4 * i));
  }
  return map;
}

FloatMap to_float_map(const Map3& map) {
  return {static_cast<std::uint32_t>(map.height()),
          static_cast<std::uint32_t>(map.width()), 3, map.values()};
}

FloatMap to_float_map(const Mask& mask) {
  FloatMap out{static_cast<std::uint32_t>(mask.height()),
               static_cast<std::uint32_t>(mask.width()), 1, {}};
  out.data.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) out.data[i] = mask.at(i) ? 1.0f : 0.0f;
  return out;
}

ColorMap color_map_from(const FloatMap& map, ColorRole role) {
  if (map.channels != 3) {
    throw std::invalid_argument("expected a 3-channel map, got " +
                                std::to_string(map.channels));
  }
  ColorMap out(static_cast<int>(map.height), static_cast<int>(map.width), role);
  out.values() = map.data;
  return out;
}

VectorFieldMap vector_map_from(const FloatMap& map, VectorRole role) {
  if (map.channels != 3) {
    throw std::invalid_argument("expected a 3-channel map, got " +
                                std::to_string(map.channels));
  }
  VectorFieldMap out(static_cast<int>(map.height), static_cast<int>(map.width), role);
  out.values() = map.data;
  return out;
}

Mask mask_from(const FloatMap& map) {
  if (map.channels != 1) {
    throw std::invalid_argument("expected a 1-channel mask, got " +
                                std::to_string(map.channels));
  }
  Mask m(static_cast<int>(map.height), static_cast<int>(map.width));
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, map.data[i] > 0.5f);
  return m;
}

std::string light_to_json(const LightSH& light, const std::string& note) {
  nlohmann::json doc;
  doc["sh"] = light.coeffs;
  if (!note.empty()) doc["note"] = note;
  return doc.dump(2) + "\n";
}

LightSH light_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(std::string("light document: ") + e.what());
  }
  if (!doc.contains("sh") || !doc["sh"].is_array() || doc["sh"].size() != kLightCoeffs) {
    throw IoError("light document must hold a 27-element \"sh\" array");
  }
  LightSH light;
  for (int i = 0; i < kLightCoeffs; ++i) {
    if (!doc["sh"][i].is_number()) throw IoError("light coefficient is not a number");
    light.coeffs[i] = doc["sh"][i].get<float>();
  }
  if (!light.all_finite()) throw IoError("light document has non-finite values");
  return light;
}

void write_light(const std::filesystem::path& path, const LightSH& light,
                 const std::string& note) {
  write_all(path, light_to_json(light, note));
}

LightSH read_light(const std::filesystem::path& path) {
  return light_from_json(read_all(path));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_all(path, text);
}

std::string read_text(const std::filesystem::path& path) { return read_all(path); }

std::uint8_t to_8bit(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

Image8 color_to_image8(const ColorMap& map) {
  Image8 img{map.height(), map.width(), 3, {}};
  img.data.resize(map.values().size());
  std::transform(map.values().begin(), map.values().end(), img.data.begin(),
                 [](float v) { return to_8bit(v); });
  return img;
}

Image8 normals_to_image8(const VectorFieldMap& map, const Mask* mask) {
  Image8 img{map.height(), map.width(), 3, {}};
  img.data.resize(map.values().size(), 0);
  for (std::size_t i = 0; i < map.pixels(); ++i) {
    if (mask != nullptr && !mask->at(i)) continue;
    const float* p = map.pixel(i);
    for (int c = 0; c < 3; ++c) img.data[3 * i + c] = to_8bit(0.5 * (p[c] + 1.0));
  }
  return img;
}

Image8 mask_to_image8(const Mask& mask) {
  Image8 img{mask.height(), mask.width(), 1, {}};
  img.data.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) img.data[i] = mask.at(i) ? 255 : 0;
  return img;
}

ColorMap color_map_from(const Image8& image, ColorRole role) {
  ColorMap out(image.height, image.width, role);
  for (std::size_t i = 0; i < out.pixels(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const int src = image.channels == 1 ? 0 : c;
      out.pixel(i)[c] = image.data[image.channels * i + src] / 255.0f;
    }
  }
  return out;
}

Mask mask_from(const Image8& image) {
  Mask m(image.height, image.width);
  for (std::size_t i = 0; i < m.size(); ++i) {
    m.set(i, image.data[image.channels * i] >= 128);
  }
  return m;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void png_warning_fn(png_structp, png_const_charp) {}

// libpng reports errors by longjmp; nothing with a destructor may live
// between setjmp and the png calls in these two helpers.
bool png_write_rows(std::FILE* fp, const Image8& image) {
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warning_fn);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, image.width, image.height, 8,
               image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(image.width) * image.channels;
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, image.data.data() + y * stride);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

bool png_read_rows(std::FILE* fp, Image8* img) {
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warning_fn);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  const auto color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  png_read_update_info(png, info);
  img->width = static_cast<int>(png_get_image_width(png, info));
  img->height = static_cast<int>(png_get_image_height(png, info));
  img->channels = static_cast<int>(png_get_channels(png, info));
  if (img->channels != 1 && img->channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  const std::size_t stride = static_cast<std::size_t>(img->width) * img->channels;
  img->data.resize(stride * img->height);
  for (int y = 0; y < img->height; ++y) {
    png_read_row(png, img->data.data() + y * stride, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw std::invalid_argument("write_png: channels must be 1 or 3");
  }
  if (image.data.size() !=
      static_cast<std::size_t>(image.width) * image.height * image.channels) {
    throw std::invalid_argument("write_png: payload size does not match header");
  }
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path.string());
  if (!png_write_rows(fp.get(), image)) throw IoError("failed to encode " + path.string());
}

Image8 read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());
  Image8 img;
  if (!png_read_rows(fp.get(), &img)) throw IoError("failed to decode " + path.string());
  return img;
}

ColorMap load_color_map(const std::filesystem::path& path, ColorRole role) {
  if (path.extension() == ".png") return color_map_from(read_png(path), role);
  return color_map_from(read_fmap(path), role);
}

Mask load_mask(const std::filesystem::path& path) {
  if (path.extension() == ".png") return mask_from(read_png(path));
  return mask_from(read_fmap(path));
}

}  // namespace sfskit
