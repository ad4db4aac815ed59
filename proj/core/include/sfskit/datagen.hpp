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

// Procedural (image, normal, albedo, light, mask) samples.
//
// Shapes are height fields z(u, v) over the normalized frame
// u, v in [-1, 1] (u to the right, v up) built from anisotropic Gaussian
// bumps, cut by an elliptical mask. The "pseudo-real" family adds fine
// wrinkles, albedo texture, dark patches, a specular lobe and pixel noise on
// top of the same construction, so its images are not exactly explained by
// the Lambertian model.

#ifndef SFSKIT_DATAGEN_HPP_
#define SFSKIT_DATAGEN_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sfskit/types.hpp"

namespace sfskit {
namespace nets {
class Model;
}

namespace datagen {

enum class Family { kSynthetic, kPseudoReal };
enum class Supervision { kGroundTruth, kPseudo };

std::string to_string(Family f);
std::string to_string(Supervision s);
Family parse_family(const std::string& s);
Supervision parse_supervision(const std::string& s);

struct Sample {
  ColorMap image;
  VectorFieldMap normal;
  ColorMap albedo;
  LightSH light;
  Mask mask;
  Supervision supervision = Supervision::kGroundTruth;
  Family family = Family::kSynthetic;
};

// Mixes (seed, index) into an independent 64-bit stream seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// ---------------------------------------------------------------- shapes

struct Bump {
  double cu = 0.0, cv = 0.0;  // centre
  double su = 0.3, sv = 0.3;  // standard deviations along the rotated axes
  double theta = 0.0;         // rotation of the first axis, radians
  double amplitude = 0.5;
};

struct Wrinkle {
  double ku = 0.0, kv = 0.0;  // angular wave vector
  double phase = 0.0;
  double amplitude = 0.0;
};

struct HeightField {
  std::vector<Bump> bumps;
  std::vector<Wrinkle> wrinkles;

  double height(double u, double v) const;
  // (dz/du, dz/dv), exact.
  Eigen::Vector2d gradient(double u, double v) const;
};

struct Ellipse {
  double cu = 0.0, cv = 0.0;
  double ru = 0.8, rv = 0.9;
};

struct ShapeParams {
  HeightField field;
  Ellipse mask;
};

struct Shape {
  VectorFieldMap normal;
  Mask mask;
};

// Pixel (y, x) of a size x size frame sits at
//   u = (2x + 1) / size - 1,  v = 1 - (2y + 1) / size.
double pixel_u(int x, int size);
double pixel_v(int y, int size);

// Normals n = normalize(-dz/du, -dz/dv, 1) inside the ellipse, (0,0,1)
// outside.
Shape rasterize_shape(const ShapeParams& params, int size);

inline constexpr double kMinMaskCoverage = 0.30;
inline constexpr double kMaxMaskCoverage = 0.80;

// 5-12 bumps (the first one large and central); pseudo-real adds wrinkles.
// The ellipse is redrawn until its coverage is within the bounds above.
ShapeParams sample_shape_params(std::uint64_t seed, Family family, int size);
Shape sample_shape(std::uint64_t seed, Family family, int size = 64);

// ---------------------------------------------------------------- albedo

inline constexpr float kMinAlbedo = 0.15f;
inline constexpr float kMaxAlbedo = 0.95f;

ColorMap sample_albedo(std::uint64_t seed, Family family, int size = 64);

// ---------------------------------------------------------------- lights

struct LightDistribution {
  LightSH mean;
  std::array<float, kLightCoeffs> stddev{};
  // Lower bound on the per-channel ambient shading level; the DC
  // coefficient is raised to at least ambient_floor * sqrt(4 pi).
  float ambient_floor = 0.0f;

  static LightDistribution defaults();
};

inline constexpr double kMinShadingMean = 0.2;
inline constexpr double kMaxShadingMean = 1.2;

// Mean shading of each channel over a front-facing hemisphere disc.
std::array<double, 3> hemisphere_shading_mean(const LightSH& light);

struct LightDraw {
  LightSH light;
  int attempts = 0;
};

inline constexpr int kMaxLightAttempts = 10000;

// Coefficient-wise Gaussian draw, rejected until every channel's
// hemisphere shading mean lies in [0.2, 1.2]. Throws std::runtime_error if
// nothing is accepted within kMaxLightAttempts draws.
LightDraw sample_light_draw(const LightDistribution& dist, std::uint64_t seed);
LightSH sample_light(const LightDistribution& dist, std::uint64_t seed);

// ---------------------------------------------------------------- datasets

struct DatasetOptions {
  int size = 64;
  double noise_sigma = 0.01;
  double max_specular = 0.1;
  LightDistribution lights = LightDistribution::defaults();
};

struct DatasetStats {
  long long light_draws = 0;
  long long light_accepted = 0;
  long long image_rejections = 0;  // lights redrawn because pixels left [0, 1]

  double acceptance_rate() const {
    return light_draws == 0 ? 1.0 : static_cast<double>(light_accepted) / light_draws;
  }
};

// Sample i depends only on (seed, i, family, options), never on the worker
// count. Synthetic images are exact renders; pseudo-real images are renders
// plus specular highlight and noise, clamped to [0, 1]. Lights producing
// rendered values outside [0, 1] are redrawn.
std::vector<Sample> make_dataset(int n, std::uint64_t seed, Family family,
                                 const DatasetOptions& options = {},
                                 DatasetStats* stats = nullptr);
Sample make_sample(std::uint64_t seed, std::uint64_t index, Family family,
                   const DatasetOptions& options = {}, DatasetStats* stats = nullptr);

// Adds the specular lobe (intensity at most options.max_specular) and pixel
// noise on the mask, then clamps to [0, 1]. Deterministic in `seed`.
void apply_pseudo_real_effects(Sample& sample, std::uint64_t seed,
                               const DatasetOptions& options);

// Replaces the normal/albedo/light of every pseudo-real sample with the
// model's decomposition and tags it kPseudo. Images, masks and synthetic
// samples are copied unchanged.
std::vector<Sample> pseudo_label(nets::Model& model, const std::vector<Sample>& samples,
                                 int batch_size = 16);

// Directory layout: manifest.json plus NNNNN.{image,normal,albedo,mask}.fmap.
struct DatasetInfo {
  int n = 0;
  std::uint64_t seed = 0;
  std::string family;
  double noise_sigma = 0.0;
  int size = 0;
};

void save_dataset(const std::vector<Sample>& samples, const std::filesystem::path& dir,
                  const DatasetInfo& info);
std::vector<Sample> load_dataset(const std::filesystem::path& dir, DatasetInfo* info = nullptr);

}  // namespace datagen
}  // namespace sfskit

#endif  // SFSKIT_DATAGEN_HPP_
