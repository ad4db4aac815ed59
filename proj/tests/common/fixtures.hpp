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

// Constructed inputs shared by the unit and acceptance tests.

#ifndef SFSKIT_TESTS_FIXTURES_HPP_
#define SFSKIT_TESTS_FIXTURES_HPP_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>

#include <Eigen/Geometry>

#include "oracles.hpp"
#include "sfskit/sh.hpp"
#include "sfskit/types.hpp"

namespace sfskit::fixture {

// Every gt normal is random; pred is gt turned by `degrees` about a random
// axis perpendicular to it.
inline std::pair<VectorFieldMap, VectorFieldMap> rotated_fields(int h, int w, double degrees,
                                                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  VectorFieldMap pred(h, w), gt(h, w);
  const double angle = degrees * std::numbers::pi / 180.0;
  for (std::size_t i = 0; i < gt.pixels(); ++i) {
    const Eigen::Vector3d n = oracle::random_unit(rng);
    Eigen::Vector3d axis = n.cross(oracle::random_unit(rng));
    while (axis.norm() < 1e-3) axis = n.cross(oracle::random_unit(rng));
    axis.normalize();
    gt.set_vec(i, n);
    pred.set_vec(i, Eigen::AngleAxisd(angle, axis) * n);
  }
  return {pred, gt};
}

struct SolveCase {
  VectorFieldMap normal;
  ColorMap albedo;
  LightSH light;
  Mask mask;
  ColorMap image;
};

// Front-facing normals spread over the hemisphere, albedo in [0.2, 0.9] and
// a random light; the image is the exact render.
inline SolveCase solve_case(std::uint64_t seed, int size = 32) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> ua(0.2f, 0.9f);
  std::normal_distribution<float> g(0.0f, 0.4f);
  std::bernoulli_distribution keep(0.7);
  SolveCase s{VectorFieldMap(size, size), ColorMap(size, size, ColorRole::kAlbedo), LightSH{},
              Mask(size, size), ColorMap()};
  for (std::size_t i = 0; i < s.normal.pixels(); ++i) {
    Eigen::Vector3d n = oracle::random_unit(rng);
    if (n.z() < 0) n.z() = -n.z();
    s.normal.set_vec(i, n);
    s.mask.set(i, keep(rng));
  }
  for (float& v : s.albedo.values()) v = ua(rng);
  for (float& v : s.light.coeffs) v = g(rng);
  for (int c = 0; c < 3; ++c) s.light.at(c, 0) += 2.0f;
  s.image = render(s.normal, s.albedo, s.light, s.mask);
  return s;
}

}  // namespace sfskit::fixture

#endif  // SFSKIT_TESTS_FIXTURES_HPP_
