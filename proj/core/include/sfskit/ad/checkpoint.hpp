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

// SFSCKPT checkpoint files.
//
// Layout, little-endian throughout:
//   "SFSCKPT"            7 magic bytes
//   u32 version          (= 1)
//   u32 count
//   count entries of
//     u32 name_length, name bytes (UTF-8)
//     u32 rank, rank x u32 extents
//     prod(extents) x float32

#ifndef SFSKIT_AD_CHECKPOINT_HPP_
#define SFSKIT_AD_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sfskit/ad/tensor.hpp"

namespace sfskit::ad {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

}  // namespace sfskit::ad

#endif  // SFSKIT_AD_CHECKPOINT_HPP_
