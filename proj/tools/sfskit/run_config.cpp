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

#include "run_config.hpp"

#include <charconv>
#include <sstream>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "sfskit/io.hpp"

namespace sfskit::cli {

namespace {

struct Key {
  const char* section;
  const char* name;
  const char* value;
};

// Empty `steps` means "derive from epochs".
constexpr Key kDefaults[] = {
    {"run", "seed", "1"},
    {"data", "n_synthetic", "2000"},
    {"data", "n_pseudo_real", "2000"},
    {"data", "n_heldout", "200"},
    {"data", "noise_sigma", "0.01"},
    {"data", "size", "64"},
    {"net", "width_scale", "0.5"},
    {"net", "n_resblocks", "5"},
    {"net", "init_seed", "1"},
    {"stage_a", "epochs", "30"},
    {"stage_a", "steps", ""},
    {"stage_a", "batch_size", "16"},
    {"stage_a", "lr", "0.001"},
    {"stage_a", "w_recon", "0.5"},
    {"stage_a", "w_normal", "0.5"},
    {"stage_a", "w_albedo", "0.5"},
    {"stage_a", "w_light", "0.1"},
    {"stage_a", "checkpoint_every", "0"},
    {"stage_a", "log_every", "50"},
    {"stage_c", "epochs", "40"},
    {"stage_c", "steps", ""},
    {"stage_c", "batch_size", "16"},
    {"stage_c", "lr", "0.001"},
    {"stage_c", "mix_ratio", "0.5"},
    {"stage_c", "w_recon", "0.5"},
    {"stage_c", "w_normal", "0.5"},
    {"stage_c", "w_albedo", "0.5"},
    {"stage_c", "w_light", "0.1"},
    {"stage_c", "checkpoint_every", "0"},
    {"stage_c", "log_every", "50"},
    {"benchmark", "subjects", "40"},
    {"benchmark", "lights", "19"},
    {"benchmark", "seed", "7"},
    {"benchmark", "intensity", "0.55"},
    {"benchmark", "ambient", "0.3"},
};

std::pair<std::string, std::string> split_dotted(const std::string& dotted) {
  const auto dot = dotted.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == dotted.size()) {
    throw ConfigError("config key '" + dotted + "' must have the form section.key");
  }
  return {dotted.substr(0, dot), dotted.substr(dot + 1)};
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig::RunConfig() {
  for (const Key& k : kDefaults) values_[k.section][k.name] = k.value;
}

void RunConfig::load_string(const std::string& text, const std::string& origin) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(origin + ": line " + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(origin + ": key '" + section + "' appears outside any section");
    }
    if (values_.count(section) == 0) {
      throw ConfigError(origin + ": unknown config section [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      try {
        set(section + "." + key, value.data());
      } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
      }
    }
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  load_string(read_text(path), path.string());
}

void RunConfig::set(const std::string& dotted, const std::string& value) {
  const auto [section, key] = split_dotted(dotted);
  auto s = values_.find(section);
  if (s == values_.end()) throw ConfigError("unknown config section [" + section + "]");
  auto k = s->second.find(key);
  if (k == s->second.end()) throw ConfigError("unknown config key '" + dotted + "'");
  k->second = trim(value);
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + assignment + "' must have the form section.key=value");
  }
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

bool RunConfig::has(const std::string& dotted) const {
  const auto [section, key] = split_dotted(dotted);
  const auto s = values_.find(section);
  return s != values_.end() && s->second.count(key) > 0;
}

std::string RunConfig::get(const std::string& dotted) const {
  const auto [section, key] = split_dotted(dotted);
  const auto s = values_.find(section);
  if (s == values_.end() || s->second.count(key) == 0) {
    throw ConfigError("unknown config key '" + dotted + "'");
  }
  return s->second.at(key);
}

double RunConfig::get_double(const std::string& dotted) const {
  const std::string v = get(dotted);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + dotted + "' expects a number, got '" + v + "'");
}

long long RunConfig::get_int(const std::string& dotted) const {
  const std::string v = get(dotted);
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ConfigError("config key '" + dotted + "' expects an integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t RunConfig::get_u64(const std::string& dotted) const {
  const std::string v = get(dotted);
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ConfigError("config key '" + dotted + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::string RunConfig::to_ini() const {
  std::string out;
  std::string current;
  for (const Key& k : kDefaults) {
    if (current != k.section) {
      if (!current.empty()) out += "\n";
      current = k.section;
      out += "[" + current + "]\n";
    }
    out += std::string(k.name) + " = " + values_.at(k.section).at(k.name) + "\n";
  }
  return out;
}

namespace {

trainer::TrainConfig stage_config(const RunConfig& c, const std::string& s, std::uint64_t seed) {
  trainer::TrainConfig t;
  t.epochs = static_cast<int>(c.get_int(s + ".epochs"));
  if (!c.get(s + ".steps").empty()) t.steps = c.get_int(s + ".steps");
  t.batch_size = static_cast<int>(c.get_int(s + ".batch_size"));
  t.lr = c.get_double(s + ".lr");
  t.weights.recon = c.get_double(s + ".w_recon");
  t.weights.normal = c.get_double(s + ".w_normal");
  t.weights.albedo = c.get_double(s + ".w_albedo");
  t.weights.light = c.get_double(s + ".w_light");
  t.checkpoint_every = c.get_int(s + ".checkpoint_every");
  t.log_every = c.get_int(s + ".log_every");
  if (c.has(s + ".mix_ratio")) t.mix_ratio = c.get_double(s + ".mix_ratio");
  t.seed = seed;
  return t;
}

}  // namespace

trainer::ParadigmConfig to_paradigm_config(const RunConfig& c) {
  trainer::ParadigmConfig p = trainer::default_paradigm_config();
  p.seed = c.get_u64("run.seed");
  p.n_synthetic = static_cast<int>(c.get_int("data.n_synthetic"));
  p.n_pseudo_real = static_cast<int>(c.get_int("data.n_pseudo_real"));
  p.n_heldout = static_cast<int>(c.get_int("data.n_heldout"));
  p.noise_sigma = c.get_double("data.noise_sigma");
  p.net.input_size = static_cast<int>(c.get_int("data.size"));
  p.net.width_scale = c.get_double("net.width_scale");
  p.net.n_resblocks = static_cast<int>(c.get_int("net.n_resblocks"));
  p.net.seed = c.get_u64("net.init_seed");
  p.stage_a = stage_config(c, "stage_a", datagen::derive_seed(p.seed, 0xa));
  p.stage_c = stage_config(c, "stage_c", datagen::derive_seed(p.seed, 0xc));
  p.benchmark.num_subjects = static_cast<int>(c.get_int("benchmark.subjects"));
  p.benchmark.num_lights = static_cast<int>(c.get_int("benchmark.lights"));
  p.benchmark.seed = c.get_u64("benchmark.seed");
  p.benchmark.intensity = static_cast<float>(c.get_double("benchmark.intensity"));
  p.benchmark.ambient = static_cast<float>(c.get_double("benchmark.ambient"));
  p.benchmark.size = p.net.input_size;
  return p;
}

}  // namespace sfskit::cli
