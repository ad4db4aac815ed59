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

#include "sfskit/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sfskit/io.hpp"
#include "sfskit/nets.hpp"
#include "sfskit/parallel.hpp"
#include "sfskit/sh.hpp"

namespace sfskit::datagen {

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum Stream : std::uint64_t {
  kShapeStream = 1,
  kAlbedoStream = 2,
  kNoiseStream = 3,
  kSpecularStream = 4,
  kLightStream = 1000,
};

}  // namespace

std::string to_string(Family f) {
  return f == Family::kSynthetic ? "synthetic" : "pseudo-real";
}

std::string to_string(Supervision s) {
  return s == Supervision::kGroundTruth ? "ground-truth" : "pseudo";
}

Family parse_family(const std::string& s) {
  if (s == "synthetic") return Family::kSynthetic;
  if (s == "pseudo-real") return Family::kPseudoReal;
  throw std::invalid_argument("unknown family '" + s + "' (expected synthetic or pseudo-real)");
}

Supervision parse_supervision(const std::string& s) {
  if (s == "ground-truth") return Supervision::kGroundTruth;
  if (s == "pseudo") return Supervision::kPseudo;
  throw std::invalid_argument("unknown supervision tag '" + s + "'");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ index);
}

// ---------------------------------------------------------------- shapes

double HeightField::height(double u, double v) const {
  double z = 0.0;
  for (const Bump& b : bumps) {
    const double c = std::cos(b.theta), s = std::sin(b.theta);
    const double du = u - b.cu, dv = v - b.cv;
    const double a = (c * du + s * dv) / b.su;
    const double e = (-s * du + c * dv) / b.sv;
    z += b.amplitude * std::exp(-0.5 * (a * a + e * e));
  }
  for (const Wrinkle& w : wrinkles) z += w.amplitude * std::sin(w.ku * u + w.kv * v + w.phase);
  return z;
}

Eigen::Vector2d HeightField::gradient(double u, double v) const {
  Eigen::Vector2d g = Eigen::Vector2d::Zero();
  for (const Bump& b : bumps) {
    const double c = std::cos(b.theta), s = std::sin(b.theta);
    const double du = u - b.cu, dv = v - b.cv;
    const double a = (c * du + s * dv) / b.su;
    const double e = (-s * du + c * dv) / b.sv;
    const double f = b.amplitude * std::exp(-0.5 * (a * a + e * e));
    // d/du of a is c / su, of e is -s / sv; d/dv: s / su and c / sv.
    g.x() += -f * (a * c / b.su - e * s / b.sv);
    g.y() += -f * (a * s / b.su + e * c / b.sv);
  }
  for (const Wrinkle& w : wrinkles) {
    const double d = w.amplitude * std::cos(w.ku * u + w.kv * v + w.phase);
    g.x() += d * w.ku;
    g.y() += d * w.kv;
  }
  return g;
}

double pixel_u(int x, int size) { return (2.0 * x + 1.0) / size - 1.0; }
double pixel_v(int y, int size) { return 1.0 - (2.0 * y + 1.0) / size; }

namespace {

bool inside(const Ellipse& e, double u, double v) {
  const double a = (u - e.cu) / e.ru, b = (v - e.cv) / e.rv;
  return a * a + b * b <= 1.0;
}

double coverage_of(const Ellipse& e, int size) {
  long long in = 0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) in += inside(e, pixel_u(x, size), pixel_v(y, size));
  }
  return static_cast<double>(in) / (static_cast<double>(size) * size);
}

}  // namespace

Shape rasterize_shape(const ShapeParams& params, int size) {
  if (size <= 0) throw std::invalid_argument("shape size must be positive");
  Shape s{VectorFieldMap(size, size), Mask(size, size)};
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * size + x;
      const double u = pixel_u(x, size), v = pixel_v(y, size);
      if (!inside(params.mask, u, v)) {
        s.normal.set_vec(i, Eigen::Vector3d(0, 0, 1));
        continue;
      }
      s.mask.set(i, true);
      const Eigen::Vector2d g = params.field.gradient(u, v);
      s.normal.set_vec(i, Eigen::Vector3d(-g.x(), -g.y(), 1.0).normalized());
    }
  }
  return s;
}

ShapeParams sample_shape_params(std::uint64_t seed, Family family, int size) {
  Rng rng(seed);
  ShapeParams p;
  for (int attempt = 0;; ++attempt) {
    p.mask.cu = uniform(rng, -0.08, 0.08);
    p.mask.cv = uniform(rng, -0.08, 0.08);
    p.mask.ru = uniform(rng, 0.62, 0.92);
    p.mask.rv = uniform(rng, 0.72, 0.98);
    const double cov = coverage_of(p.mask, size);
    if (cov >= kMinMaskCoverage && cov <= kMaxMaskCoverage) break;
    if (attempt > 1000) throw std::runtime_error("could not draw a mask with valid coverage");
  }

  const int n_bumps = uniform_int(rng, 5, 12);
  Bump face;
  face.cu = p.mask.cu;
  face.cv = p.mask.cv;
  face.su = p.mask.ru * uniform(rng, 0.55, 0.75);
  face.sv = p.mask.rv * uniform(rng, 0.55, 0.75);
  face.theta = uniform(rng, -0.2, 0.2);
  face.amplitude = uniform(rng, 0.35, 0.6);
  p.field.bumps.push_back(face);
  for (int i = 1; i < n_bumps; ++i) {
    Bump b;
    const double r = std::sqrt(uniform(rng, 0.0, 1.0)), t = uniform(rng, 0.0, 2 * std::numbers::pi);
    b.cu = p.mask.cu + 0.8 * p.mask.ru * r * std::cos(t);
    b.cv = p.mask.cv + 0.8 * p.mask.rv * r * std::sin(t);
    b.su = uniform(rng, 0.08, 0.25);
    b.sv = uniform(rng, 0.08, 0.25);
    b.theta = uniform(rng, 0.0, std::numbers::pi);
    b.amplitude = uniform(rng, -0.04, 0.08);
    p.field.bumps.push_back(b);
  }
  if (family == Family::kPseudoReal) {
    const int n_wrinkles = uniform_int(rng, 3, 6);
    for (int i = 0; i < n_wrinkles; ++i) {
      Wrinkle w;
      const double k = 2 * std::numbers::pi * uniform(rng, 5.0, 11.0);
      const double t = uniform(rng, 0.0, std::numbers::pi);
      w.ku = k * std::cos(t);
      w.kv = k * std::sin(t);
      w.phase = uniform(rng, 0.0, 2 * std::numbers::pi);
      w.amplitude = uniform(rng, 0.002, 0.005);
      p.field.wrinkles.push_back(w);
    }
  }
  return p;
}

Shape sample_shape(std::uint64_t seed, Family family, int size) {
  return rasterize_shape(sample_shape_params(seed, family, size), size);
}

// ---------------------------------------------------------------- albedo

ColorMap sample_albedo(std::uint64_t seed, Family family, int size) {
  Rng rng(seed);
  ColorMap a(size, size, ColorRole::kAlbedo);
  std::array<double, 3> base{};
  const double tone = uniform(rng, 0.35, 0.75);
  for (double& b : base) b = std::clamp(tone + uniform(rng, -0.12, 0.12), 0.25, 0.85);

  struct Wave {
    double ku, kv, phase;
    std::array<double, 3> amp;
  };
  auto draw_waves = [&](int n, double kmin, double kmax, double amax) {
    std::vector<Wave> w(static_cast<std::size_t>(n));
    for (Wave& x : w) {
      const double k = uniform(rng, kmin, kmax), t = uniform(rng, 0.0, std::numbers::pi);
      x.ku = k * std::cos(t);
      x.kv = k * std::sin(t);
      x.phase = uniform(rng, 0.0, 2 * std::numbers::pi);
      for (double& m : x.amp) m = uniform(rng, 0.0, amax);
    }
    return w;
  };
  const std::vector<Wave> low = draw_waves(3, 1.0, 4.0, 0.08);
  std::vector<Wave> high;
  struct Patch {
    double cu, cv, su, sv, depth;
  };
  std::vector<Patch> patches;
  if (family == Family::kPseudoReal) {
    high = draw_waves(6, 40.0, 90.0, 0.05);
    const int n_patches = uniform_int(rng, 1, 3);
    for (int i = 0; i < n_patches; ++i) {
      patches.push_back({uniform(rng, -0.6, 0.6), uniform(rng, -0.7, 0.5), uniform(rng, 0.08, 0.3),
                         uniform(rng, 0.05, 0.15), uniform(rng, 0.4, 0.7)});
    }
  }

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double u = pixel_u(x, size), v = pixel_v(y, size);
      float* px = a.pixel(y, x);
      double dark = 1.0;
      for (const Patch& p : patches) {
        const double du = (u - p.cu) / p.su, dv = (v - p.cv) / p.sv;
        dark *= 1.0 - p.depth * std::exp(-0.5 * (du * du + dv * dv));
      }
      for (int c = 0; c < 3; ++c) {
        double val = base[static_cast<std::size_t>(c)];
        for (const Wave& w : low) val += w.amp[c] * std::sin(w.ku * u + w.kv * v + w.phase);
        for (const Wave& w : high) val += w.amp[c] * std::sin(w.ku * u + w.kv * v + w.phase);
        val *= dark;
        px[c] = static_cast<float>(std::clamp(val, double{kMinAlbedo}, double{kMaxAlbedo}));
      }
    }
  }
  return a;
}

// ---------------------------------------------------------------- lights

LightDistribution LightDistribution::defaults() {
  LightDistribution d;
  const LightSH frontal = dir_light_to_sh(Eigen::Vector3d(0, 0.3, 1).normalized(), {0.45f, 0.45f, 0.45f}, {0.4f, 0.4f, 0.4f});
  d.mean = frontal;
  for (int c = 0; c < 3; ++c) {
    const float s[kShBasisSize] = {0.2f, 0.3f, 0.35f, 0.35f, 0.1f, 0.1f, 0.1f, 0.1f, 0.1f};
    for (int k = 0; k < kShBasisSize; ++k) d.stddev[kShBasisSize * c + k] = s[k];
  }
  d.ambient_floor = 0.2f;
  return d;
}

namespace {

const std::vector<ShBasis>& hemisphere_bases() {
  static const std::vector<ShBasis> bases = [] {
    std::vector<ShBasis> out;
    constexpr int kGrid = 32;
    for (int y = 0; y < kGrid; ++y) {
      for (int x = 0; x < kGrid; ++x) {
        const double u = pixel_u(x, kGrid), v = pixel_v(y, kGrid);
        const double r2 = u * u + v * v;
        if (r2 >= 1.0) continue;
        out.push_back(sh_basis_unchecked(u, v, std::sqrt(1.0 - r2)));
      }
    }
    return out;
  }();
  return bases;
}

}  // namespace

std::array<double, 3> hemisphere_shading_mean(const LightSH& light) {
  const auto& bases = hemisphere_bases();
  std::array<double, 3> mean{};
  for (const ShBasis& y : bases) {
    for (int c = 0; c < 3; ++c) {
      double s = 0.0;
      for (int k = 0; k < kShBasisSize; ++k) s += y[k] * light.at(c, k);
      mean[static_cast<std::size_t>(c)] += s;
    }
  }
  for (double& m : mean) m /= static_cast<double>(bases.size());
  return mean;
}

LightDraw sample_light_draw(const LightDistribution& dist, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double floor_dc = dist.ambient_floor * sh_const::kSqrt4Pi;
  LightDraw out;
  while (out.attempts < kMaxLightAttempts) {
    ++out.attempts;
    LightSH l;
    for (int i = 0; i < kLightCoeffs; ++i) {
      l.coeffs[i] = static_cast<float>(dist.mean.coeffs[i] + dist.stddev[i] * gauss(rng));
    }
    for (int c = 0; c < 3; ++c) {
      l.at(c, 0) = static_cast<float>(std::max<double>(l.at(c, 0), floor_dc));
    }
    const auto m = hemisphere_shading_mean(l);
    if (std::all_of(m.begin(), m.end(),
                    [](double v) { return v >= kMinShadingMean && v <= kMaxShadingMean; })) {
      out.light = l;
      return out;
    }
  }
  throw std::runtime_error("light distribution rejected " + std::to_string(kMaxLightAttempts) +
                           " consecutive draws");
}

LightSH sample_light(const LightDistribution& dist, std::uint64_t seed) {
  return sample_light_draw(dist, seed).light;
}

// ---------------------------------------------------------------- datasets

namespace {

bool render_in_range(const ColorMap& img, const Mask& mask) {
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask.at(i)) continue;
    const float* p = img.pixel(i);
    for (int c = 0; c < 3; ++c) {
      if (!(p[c] >= 0.0f && p[c] <= 1.0f)) return false;
    }
  }
  return true;
}

}  // namespace

void apply_pseudo_real_effects(Sample& s, std::uint64_t sample_seed, const DatasetOptions& opt) {
  Rng rng(derive_seed(sample_seed, kSpecularStream));
  Eigen::Vector3d d(0, 0, 0);
  for (int c = 0; c < 3; ++c) d += Eigen::Vector3d(s.light.at(c, 2), s.light.at(c, 3), s.light.at(c, 1));
  if (d.norm() < 1e-6 || d.z() <= 0.0) d = Eigen::Vector3d(0, 0, 1);
  const Eigen::Vector3d h = (d.normalized() + Eigen::Vector3d(0, 0, 1)).normalized();
  const double ks = uniform(rng, 0.3 * opt.max_specular, opt.max_specular);
  const double shininess = uniform(rng, 10.0, 40.0);

  Rng noise_rng(derive_seed(sample_seed, kNoiseStream));
  std::normal_distribution<double> noise(0.0, opt.noise_sigma > 0 ? opt.noise_sigma : 1.0);
  for (std::size_t i = 0; i < s.mask.size(); ++i) {
    if (!s.mask.at(i)) continue;
    const double highlight = ks * std::pow(std::max(0.0, s.normal.vec(i).dot(h)), shininess);
    float* p = s.image.pixel(i);
    for (int c = 0; c < 3; ++c) {
      double v = p[c] + highlight;
      if (opt.noise_sigma > 0) v += noise(noise_rng);
      p[c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
}

Sample make_sample(std::uint64_t seed, std::uint64_t index, Family family,
                   const DatasetOptions& opt, DatasetStats* stats) {
  const std::uint64_t s = derive_seed(seed, index);
  Sample out;
  out.family = family;
  out.supervision = Supervision::kGroundTruth;
  Shape shape = sample_shape(derive_seed(s, kShapeStream), family, opt.size);
  out.normal = std::move(shape.normal);
  out.mask = std::move(shape.mask);
  out.albedo = sample_albedo(derive_seed(s, kAlbedoStream), family, opt.size);

  DatasetStats local;
  for (std::uint64_t attempt = 0;; ++attempt) {
    if (attempt >= static_cast<std::uint64_t>(kMaxLightAttempts)) {
      throw std::runtime_error("no light kept sample " + std::to_string(index) +
                               " inside [0, 1]");
    }
    const LightDraw draw = sample_light_draw(opt.lights, derive_seed(s, kLightStream + attempt));
    local.light_draws += draw.attempts;
    local.light_accepted += 1;
    out.image = render(out.normal, out.albedo, draw.light, out.mask);
    if (render_in_range(out.image, out.mask)) {
      out.light = draw.light;
      break;
    }
    local.image_rejections += 1;
  }
  if (family == Family::kPseudoReal) apply_pseudo_real_effects(out, s, opt);
  if (stats != nullptr) {
    stats->light_draws += local.light_draws;
    stats->light_accepted += local.light_accepted;
    stats->image_rejections += local.image_rejections;
  }
  return out;
}

std::vector<Sample> make_dataset(int n, std::uint64_t seed, Family family,
                                 const DatasetOptions& opt, DatasetStats* stats) {
  if (n < 0) throw std::invalid_argument("dataset size must be non-negative");
  std::vector<Sample> out(static_cast<std::size_t>(n));
  std::vector<DatasetStats> per(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    out[i] = make_sample(seed, i, family, opt, &per[i]);
  });
  if (stats != nullptr) {
    for (const DatasetStats& p : per) {
      stats->light_draws += p.light_draws;
      stats->light_accepted += p.light_accepted;
      stats->image_rejections += p.image_rejections;
    }
  }
  return out;
}

std::vector<Sample> pseudo_label(nets::Model& model, const std::vector<Sample>& samples,
                                 int batch_size) {
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  std::vector<Sample> out = samples;
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].family == Family::kPseudoReal) todo.push_back(i);
  }
  for (std::size_t start = 0; start < todo.size(); start += batch_size) {
    const std::size_t end = std::min(todo.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const ColorMap*> images;
    std::vector<const Mask*> masks;
    for (std::size_t j = start; j < end; ++j) {
      images.push_back(&samples[todo[j]].image);
      masks.push_back(&samples[todo[j]].mask);
    }
    std::vector<Decomposition> dec = nets::decompose(model, images, masks);
    for (std::size_t j = start; j < end; ++j) {
      Sample& s = out[todo[j]];
      Decomposition& d = dec[j - start];
      s.normal = std::move(d.normal);
      s.albedo = std::move(d.albedo);
      s.light = d.light;
      s.supervision = Supervision::kPseudo;
    }
  }
  return out;
}

namespace {

std::string sample_stem(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05zu", i);
  return buf;
}

}  // namespace

void save_dataset(const std::vector<Sample>& samples, const std::filesystem::path& dir,
                  const DatasetInfo& info) {
  std::filesystem::create_directories(dir);
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    const std::string stem = sample_stem(i);
    write_fmap(dir / (stem + ".image.fmap"), to_float_map(s.image));
    write_fmap(dir / (stem + ".normal.fmap"), to_float_map(s.normal));
    write_fmap(dir / (stem + ".albedo.fmap"), to_float_map(s.albedo));
    write_fmap(dir / (stem + ".mask.fmap"), to_float_map(s.mask));
    entries.push_back({{"id", stem},
                       {"image", stem + ".image.fmap"},
                       {"normal", stem + ".normal.fmap"},
                       {"albedo", stem + ".albedo.fmap"},
                       {"mask", stem + ".mask.fmap"},
                       {"family", to_string(s.family)},
                       {"supervision", to_string(s.supervision)},
                       {"light", s.light.coeffs}});
  }
  nlohmann::json doc = {{"format", "sfskit-dataset"},
                        {"version", 1},
                        {"n", samples.size()},
                        {"seed", info.seed},
                        {"family", info.family},
                        {"noise_sigma", info.noise_sigma},
                        {"size", info.size},
                        {"samples", entries}};
  write_text(dir / "manifest.json", doc.dump(2) + "\n");
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir, DatasetInfo* info) {
  const std::filesystem::path manifest = dir / "manifest.json";
  if (!std::filesystem::exists(manifest)) {
    throw IoError("dataset manifest not found: " + manifest.string());
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text(manifest));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest.string() + ": " + e.what());
  }
  std::vector<Sample> out;
  try {
    if (info != nullptr) {
      info->n = doc.at("n").get<int>();
      info->seed = doc.at("seed").get<std::uint64_t>();
      info->family = doc.at("family").get<std::string>();
      info->noise_sigma = doc.at("noise_sigma").get<double>();
      info->size = doc.at("size").get<int>();
    }
    for (const auto& e : doc.at("samples")) {
      Sample s;
      s.image = color_map_from(read_fmap(dir / e.at("image").get<std::string>()), ColorRole::kImage);
      s.normal = vector_map_from(read_fmap(dir / e.at("normal").get<std::string>()), VectorRole::kNormal);
      s.albedo = color_map_from(read_fmap(dir / e.at("albedo").get<std::string>()), ColorRole::kAlbedo);
      s.mask = mask_from(read_fmap(dir / e.at("mask").get<std::string>()));
      s.family = parse_family(e.at("family").get<std::string>());
      s.supervision = parse_supervision(e.at("supervision").get<std::string>());
      const auto light = e.at("light").get<std::vector<float>>();
      if (light.size() != static_cast<std::size_t>(kLightCoeffs)) {
        throw IoError(manifest.string() + ": light entry must have 27 coefficients");
      }
      std::copy(light.begin(), light.end(), s.light.coeffs.begin());
      out.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest.string() + ": " + e.what());
  }
  return out;
}

}  // namespace sfskit::datagen
