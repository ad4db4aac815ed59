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

// Text configuration for `sfskit train`.
//
// INI layout, one section per module:
//
//   [data]
//   n_synthetic = 2000
//   [stage_c]
//   mix_ratio = 0.5
//
// Every key must be known; values are checked when read. Command-line
// overrides use the same dotted names (`--set stage_c.mix_ratio=0.25`).

#ifndef SFSKIT_TOOLS_RUN_CONFIG_HPP_
#define SFSKIT_TOOLS_RUN_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "sfskit/trainer.hpp"

namespace sfskit::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RunConfig {
 public:
  // All known keys at their defaults.
  RunConfig();

  void load_file(const std::filesystem::path& path);
  void load_string(const std::string& text, const std::string& origin = "<string>");

  // `dotted` is "section.key"; `assignment` is "section.key=value".
  void set(const std::string& dotted, const std::string& value);
  void apply_override(const std::string& assignment);

  bool has(const std::string& dotted) const;
  std::string get(const std::string& dotted) const;
  double get_double(const std::string& dotted) const;
  long long get_int(const std::string& dotted) const;
  std::uint64_t get_u64(const std::string& dotted) const;

  // Sections and keys in a fixed order, all values resolved.
  std::string to_ini() const;

 private:
  std::map<std::string, std::map<std::string, std::string>> values_;
};

trainer::ParadigmConfig to_paradigm_config(const RunConfig& cfg);

}  // namespace sfskit::cli

#endif  // SFSKIT_TOOLS_RUN_CONFIG_HPP_
