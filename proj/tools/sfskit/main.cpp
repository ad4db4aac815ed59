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

#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "run_config.hpp"
#include "sfskit/ad/gradcheck.hpp"
#include "sfskit/datagen.hpp"
#include "sfskit/io.hpp"
#include "sfskit/nets.hpp"
#include "sfskit/photometrics.hpp"
#include "sfskit/sh.hpp"
#include "sfskit/trainer.hpp"

namespace fs = std::filesystem;
using namespace sfskit;

namespace {

void info(const std::string& msg) { std::cerr << "sfskit: " << msg << "\n"; }
void warn(const std::string& msg) { std::cerr << "sfskit: warning: " << msg << "\n"; }

// key = value lines describing the flags a command ran with.
class Resolved {
 public:
  explicit Resolved(std::string command) : command_(std::move(command)) {}
  template <typename T>
  Resolved& add(const std::string& key, const T& v) {
    std::ostringstream s;
    s << v;
    lines_.push_back(key + " = " + s.str());
    return *this;
  }
  void write(const fs::path& out) const {
    std::string text = "[" + command_ + "]\n";
    for (const auto& l : lines_) text += l + "\n";
    write_text(out / "run.ini", text);
  }

 private:
  std::string command_;
  std::vector<std::string> lines_;
};

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_color(const fs::path& dir, const std::string& stem, const ColorMap& m) {
  write_fmap(dir / (stem + ".fmap"), to_float_map(m));
  write_png(dir / (stem + ".png"), color_to_image8(m));
}

void write_decomposition(const fs::path& dir, const Decomposition& d, const Mask& mask) {
  write_fmap(dir / "normal.fmap", to_float_map(d.normal));
  write_png(dir / "normal.png", normals_to_image8(d.normal, &mask));
  write_color(dir, "albedo", d.albedo);
  write_fmap(dir / "mask.fmap", to_float_map(mask));
  write_png(dir / "mask.png", mask_to_image8(mask));
  write_light(dir / "light.json", d.light);
}

struct LoadedDecomposition {
  Decomposition d;
  Mask mask;
};

LoadedDecomposition read_decomposition(const fs::path& dir) {
  for (const char* f : {"normal.fmap", "albedo.fmap", "mask.fmap", "light.json"}) {
    if (!fs::exists(dir / f)) throw IoError("decomposition file not found: " + (dir / f).string());
  }
  LoadedDecomposition out;
  out.d.normal = vector_map_from(read_fmap(dir / "normal.fmap"), VectorRole::kNormal);
  out.d.albedo = color_map_from(read_fmap(dir / "albedo.fmap"), ColorRole::kAlbedo);
  out.d.light = read_light(dir / "light.json");
  out.mask = mask_from(read_fmap(dir / "mask.fmap"));
  return out;
}

Eigen::Vector3d parse_vec3(const std::string& s) {
  std::vector<double> v;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw std::invalid_argument("expected x,y,z but got '" + s + "'");
    }
  }
  if (v.size() != 3) throw std::invalid_argument("expected x,y,z but got '" + s + "'");
  return {v[0], v[1], v[2]};
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  int n = 100;
  std::uint64_t seed = 1;
  std::string family = "synthetic";
  int size = 64;
  double noise_sigma = 0.01;
  std::string out;
};

int cmd_gen_data(const GenDataArgs& a) {
  const datagen::Family family = datagen::parse_family(a.family);
  datagen::DatasetOptions opts;
  opts.size = a.size;
  opts.noise_sigma = a.noise_sigma;
  datagen::DatasetStats stats;
  const auto samples = datagen::make_dataset(a.n, a.seed, family, opts, &stats);
  info("light acceptance rate " + fmt_double(stats.acceptance_rate()) + " (" +
       std::to_string(stats.light_accepted) + "/" + std::to_string(stats.light_draws) +
       "), out-of-range redraws " + std::to_string(stats.image_rejections));
  datagen::save_dataset(samples, a.out,
                        {a.n, a.seed, datagen::to_string(family), a.noise_sigma, a.size});
  Resolved("gen-data")
      .add("n", a.n)
      .add("seed", a.seed)
      .add("family", a.family)
      .add("size", a.size)
      .add("noise_sigma", fmt_double(a.noise_sigma))
      .write(a.out);
  info("wrote " + std::to_string(samples.size()) + " samples to " + a.out);
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string paradigm;
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  bool resume = false;
};

int cmd_train(const TrainArgs& a) {
  cli::RunConfig rc;
  if (!a.config.empty()) rc.load_file(a.config);
  for (const auto& o : a.overrides) rc.apply_override(o);

  std::vector<trainer::Paradigm> paradigms;
  if (a.paradigm == "all") {
    paradigms = trainer::all_paradigms();
  } else {
    paradigms.push_back(trainer::parse_paradigm(a.paradigm));
  }

  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "run.ini",
             "# sfskit train --paradigm " + a.paradigm + "\n" + rc.to_ini());

  std::ofstream log_file(fs::path(a.out) / "train.log");
  const auto t0 = std::chrono::steady_clock::now();
  auto log = [&](const std::string& line) {
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char stamp[32];
    std::snprintf(stamp, sizeof stamp, "[%9.2fs] ", t);
    log_file << stamp << line << "\n";
    log_file.flush();
    info(line);
  };

  trainer::ParadigmConfig pc = cli::to_paradigm_config(rc);
  pc.work_dir = fs::path(a.out) / "models";
  pc.resume = a.resume;
  pc.log = log;
  fs::create_directories(pc.work_dir);

  trainer::ParadigmRunner runner(pc);
  std::vector<ParadigmRow> rows;
  for (trainer::Paradigm p : paradigms) rows.push_back(runner.run(p));

  write_text(fs::path(a.out) / "report.txt", format_paradigm_table(rows));
  write_text(fs::path(a.out) / "report.json", to_json(rows) + "\n");

  nlohmann::json curves = nlohmann::json::object();
  for (const auto& [tag, report] : runner.reports()) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : report.epoch_losses) {
      epochs.push_back({{"total", e.total},
                        {"recon", e.recon},
                        {"normal", e.normal},
                        {"albedo", e.albedo},
                        {"light", e.light}});
    }
    curves[tag] = {{"stage", report.stage},
                   {"steps", report.steps_run},
                   {"steps_per_epoch", report.steps_per_epoch},
                   {"epochs", epochs}};
    log(tag + " trained in " + fmt_double(report.wall_seconds) + " s");
  }
  write_text(fs::path(a.out) / "curves.json", curves.dump(2) + "\n");
  std::cout << format_paradigm_table(rows);
  return 0;
}

// ---------------------------------------------------------------- pseudo-label

struct PseudoLabelArgs {
  std::string model, data, out;
  int batch_size = 16;
};

int cmd_pseudo_label(const PseudoLabelArgs& a) {
  auto model = nets::load_model(a.model);
  datagen::DatasetInfo info_in;
  const auto samples = datagen::load_dataset(a.data, &info_in);
  const auto labelled = datagen::pseudo_label(*model, samples, a.batch_size);
  datagen::save_dataset(labelled, a.out, info_in);
  Resolved("pseudo-label")
      .add("model", a.model)
      .add("data", a.data)
      .add("batch_size", a.batch_size)
      .write(a.out);
  std::size_t n = 0;
  for (const auto& s : labelled) n += s.supervision == datagen::Supervision::kPseudo;
  info("pseudo-labelled " + std::to_string(n) + " of " + std::to_string(labelled.size()) +
       " samples");
  return 0;
}

// ---------------------------------------------------------------- decompose

struct DecomposeArgs {
  std::string model, image, mask, out;
};

int cmd_decompose(const DecomposeArgs& a) {
  auto model = nets::load_model(a.model);
  const ColorMap image = load_color_map(a.image, ColorRole::kImage);
  Mask mask;
  if (a.mask.empty()) {
    warn("no --mask given; using a full-frame mask");
    mask = Mask::full(image.height(), image.width());
  } else {
    mask = load_mask(a.mask);
  }
  if (!image.same_dims(mask)) {
    throw std::invalid_argument("mask size does not match the image size");
  }
  const auto dec = nets::decompose(*model, {&image}, {&mask});
  const Decomposition& d = dec.front();
  fs::create_directories(a.out);
  write_decomposition(a.out, d, mask);
  write_color(a.out, "shading", shading(d.normal, d.light, mask));
  write_color(a.out, "reconstruction", render(d.normal, d.albedo, d.light, mask));
  Resolved("decompose")
      .add("model", a.model)
      .add("image", a.image)
      .add("mask", a.mask.empty() ? "(full frame)" : a.mask)
      .write(a.out);
  return 0;
}

// ---------------------------------------------------------------- relight

struct RelightArgs {
  std::string decomp_dir, light_dir = "0,0,1", out;
  float intensity = 0.8f, ambient = 0.2f;
  bool uniform_albedo = false;
  float albedo_value = 0.8f;
};

int cmd_relight(const RelightArgs& a) {
  const LoadedDecomposition src = read_decomposition(a.decomp_dir);
  const Eigen::Vector3d dir = parse_vec3(a.light_dir);
  if (dir.norm() < 1e-12) throw std::invalid_argument("--light-dir must be non-zero");
  const LightSH light = dir_light_to_sh(dir.normalized(), {a.intensity, a.intensity, a.intensity},
                                        {a.ambient, a.ambient, a.ambient});
  ColorMap albedo = src.d.albedo;
  if (a.uniform_albedo) {
    albedo = ColorMap(albedo.height(), albedo.width(), ColorRole::kAlbedo, a.albedo_value);
  }
  fs::create_directories(a.out);
  write_color(a.out, "relit", render(src.d.normal, albedo, light, src.mask));
  write_color(a.out, "shading", shading(src.d.normal, light, src.mask));
  write_light(fs::path(a.out) / "light.json", light, "directional light");
  Resolved("relight")
      .add("decomp_dir", a.decomp_dir)
      .add("light_dir", a.light_dir)
      .add("intensity", fmt_double(a.intensity))
      .add("ambient", fmt_double(a.ambient))
      .add("uniform_albedo", a.uniform_albedo ? "true" : "false")
      .add("albedo_value", fmt_double(a.albedo_value))
      .write(a.out);
  return 0;
}

// ---------------------------------------------------------------- transfer-light

struct TransferArgs {
  std::string source_dir, target_dir, out;
};

int cmd_transfer(const TransferArgs& a) {
  const LoadedDecomposition source = read_decomposition(a.source_dir);
  const LoadedDecomposition target = read_decomposition(a.target_dir);
  const TransferResult r = transfer_light(source.d, target.d, target.mask);
  fs::create_directories(a.out);
  write_color(a.out, "transfer", r.image);
  write_color(a.out, "shading", r.shading);
  write_light(fs::path(a.out) / "light.json", source.d.light, "source lighting");
  Resolved("transfer-light")
      .add("source_dir", a.source_dir)
      .add("target_dir", a.target_dir)
      .write(a.out);
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string task, pred, gt, mask, out;
};

fs::path resolve_map(const std::string& p, const char* dir_file) {
  const fs::path path(p);
  if (fs::is_directory(path)) return path / dir_file;
  return path;
}

Mask resolve_mask(const EvalArgs& a, int h, int w) {
  if (!a.mask.empty()) return load_mask(a.mask);
  for (const std::string& d : {a.gt, a.pred}) {
    if (fs::is_directory(d) && fs::exists(fs::path(d) / "mask.fmap")) {
      return mask_from(read_fmap(fs::path(d) / "mask.fmap"));
    }
  }
  warn("no mask found; evaluating over the full frame");
  return Mask::full(h, w);
}

std::vector<LabeledLight> read_labeled_lights(const std::string& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  if (!doc.is_array()) throw IoError(path + ": expected a JSON array of {sh, class} entries");
  std::vector<LabeledLight> out;
  for (const auto& e : doc) {
    const auto sh = e.at("sh").get<std::vector<float>>();
    if (sh.size() != static_cast<std::size_t>(kLightCoeffs)) {
      throw IoError(path + ": each entry needs 27 SH coefficients");
    }
    LabeledLight l;
    std::copy(sh.begin(), sh.end(), l.light.coeffs.begin());
    l.label = e.at("class").get<int>();
    out.push_back(l);
  }
  return out;
}

int cmd_eval(const EvalArgs& a) {
  fs::create_directories(a.out);
  std::string table, json;
  if (a.task == "normals") {
    const auto pred = vector_map_from(read_fmap(resolve_map(a.pred, "normal.fmap")), VectorRole::kNormal);
    const auto gt = vector_map_from(read_fmap(resolve_map(a.gt, "normal.fmap")), VectorRole::kNormal);
    const Mask mask = resolve_mask(a, gt.height(), gt.width());
    const NormalErrorStats s = angular_error_stats(pred, gt, mask);
    table = format_normal_table({{"prediction", s}});
    json = to_json(s);
  } else if (a.task == "recon") {
    const fs::path pred_path = resolve_map(a.pred, "reconstruction.fmap");
    const fs::path gt_path = resolve_map(a.gt, "image.fmap");
    const ColorMap pred = load_color_map(pred_path, ColorRole::kImage);
    const ColorMap gt = load_color_map(gt_path, ColorRole::kImage);
    const Mask mask = resolve_mask(a, gt.height(), gt.width());
    const ReconErrorStats s = recon_error_stats(gt, pred, mask);
    table = format_paradigm_table({{"prediction", s, {}}});
    json = to_json(s);
  } else if (a.task == "light") {
    const auto train = read_labeled_lights(a.gt);
    const auto test = read_labeled_lights(a.pred);
    const LightClassReport r = light_classify(train, test);
    table = format_light_table({{"prediction", r}});
    json = to_json(r);
  } else {
    throw std::invalid_argument("unknown --task '" + a.task + "' (expected normals, light or recon)");
  }
  write_text(fs::path(a.out) / "report.txt", table);
  write_text(fs::path(a.out) / "report.json", json + "\n");
  Resolved("eval").add("task", a.task).add("pred", a.pred).add("gt", a.gt).add("mask", a.mask).write(a.out);
  std::cout << table;
  return 0;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  int seeds = 20;
  double tol = 1e-5;
  double step = 1e-4;
  std::string out;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  std::map<std::string, ad::GradcheckReport> worst;
  std::vector<std::string> order;
  for (int seed = 0; seed < a.seeds; ++seed) {
    for (auto& c : ad::standard_gradcheck_cases(static_cast<std::uint64_t>(seed))) {
      const auto r = ad::gradcheck(c.op, c.inputs, a.tol, a.step, static_cast<std::uint64_t>(seed));
      auto it = worst.find(c.name);
      if (it == worst.end()) {
        order.push_back(c.name);
        worst[c.name] = r;
      } else if (!r.passed || r.max_rel_error > it->second.max_rel_error) {
        const bool failed_before = !it->second.passed;
        it->second = r;
        it->second.passed = r.passed && !failed_before;
      }
    }
  }
  std::string text;
  bool all = true;
  for (const auto& name : order) {
    const auto& r = worst[name];
    all = all && r.passed;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-22s %s  max rel error %.3e over %d seeds\n", name.c_str(),
                  r.passed ? "PASS" : "FAIL", r.max_rel_error, a.seeds);
    text += buf;
  }
  std::cout << text;
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_text(fs::path(a.out) / "gradcheck.txt", text);
    Resolved("gradcheck")
        .add("seeds", a.seeds)
        .add("tol", fmt_double(a.tol))
        .add("step", fmt_double(a.step))
        .write(a.out);
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sfskit: shape-from-shading decomposition toolkit", "sfskit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "0.1.0");

  GenDataArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "Generate a procedural dataset");
  c_gen->add_option("--n", gen.n, "Number of samples")->capture_default_str();
  c_gen->add_option("--seed", gen.seed, "Dataset seed")->capture_default_str();
  c_gen->add_option("--family", gen.family, "synthetic or pseudo-real")
      ->check(CLI::IsMember({"synthetic", "pseudo-real"}))
      ->capture_default_str();
  c_gen->add_option("--size", gen.size, "Image side length in pixels")->capture_default_str();
  c_gen->add_option("--noise-sigma", gen.noise_sigma, "Pixel noise for pseudo-real samples")
      ->capture_default_str();
  c_gen->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Run a training paradigm end to end");
  c_train
      ->add_option("--paradigm", train.paradigm,
                   "skipnet-syn, sfsnet-syn, sfsnet-full, skipnet-plus-full or all")
      ->required();
  c_train->add_option("--config", train.config, "INI configuration file");
  c_train->add_option("--set", train.overrides, "Override a config key: section.key=value");
  c_train->add_option("--out", train.out, "Output directory")->required();
  c_train->add_flag("--resume", train.resume, "Continue from checkpoints in --out");

  PseudoLabelArgs pl;
  auto* c_pl = app.add_subcommand("pseudo-label", "Replace pseudo-real labels with model outputs");
  c_pl->add_option("--model", pl.model, "Model checkpoint")->required();
  c_pl->add_option("--data", pl.data, "Dataset directory")->required();
  c_pl->add_option("--out", pl.out, "Output dataset directory")->required();
  c_pl->add_option("--batch-size", pl.batch_size, "Inference batch size")->capture_default_str();

  DecomposeArgs dec;
  auto* c_dec = app.add_subcommand("decompose", "Decompose an image into normal, albedo and light");
  c_dec->add_option("--model", dec.model, "Model checkpoint")->required();
  c_dec->add_option("--image", dec.image, "Input image (.png or .fmap)")->required();
  c_dec->add_option("--mask", dec.mask, "Mask (.png or .fmap); full frame when omitted");
  c_dec->add_option("--out", dec.out, "Output directory")->required();

  RelightArgs rel;
  auto* c_rel = app.add_subcommand("relight", "Render a decomposition under a directional light");
  c_rel->add_option("--decomp-dir", rel.decomp_dir, "Directory written by decompose")->required();
  c_rel->add_option("--light-dir", rel.light_dir, "Light direction x,y,z")->capture_default_str();
  c_rel->add_option("--intensity", rel.intensity, "Directional intensity")->capture_default_str();
  c_rel->add_option("--ambient", rel.ambient, "Ambient level")->capture_default_str();
  c_rel->add_flag("--uniform-albedo", rel.uniform_albedo, "Replace the albedo by a constant");
  c_rel->add_option("--albedo-value", rel.albedo_value, "Constant used by --uniform-albedo")
      ->capture_default_str();
  c_rel->add_option("--out", rel.out, "Output directory")->required();

  TransferArgs tr;
  auto* c_tr = app.add_subcommand("transfer-light", "Render the target under the source lighting");
  c_tr->add_option("--source-dir", tr.source_dir, "Decomposition providing the light")->required();
  c_tr->add_option("--target-dir", tr.target_dir, "Decomposition providing shape and albedo")
      ->required();
  c_tr->add_option("--out", tr.out, "Output directory")->required();

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Score predictions against references");
  c_ev->add_option("--task", ev.task, "normals, light or recon")
      ->check(CLI::IsMember({"normals", "light", "recon"}))
      ->required();
  c_ev->add_option("--pred", ev.pred, "Prediction file or decomposition directory; light: test entries")
      ->required();
  c_ev->add_option("--gt", ev.gt, "Reference file or directory; light: training entries")->required();
  c_ev->add_option("--mask", ev.mask, "Mask file (normals and recon)");
  c_ev->add_option("--out", ev.out, "Output directory")->required();

  GradcheckArgs gc;
  auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference check of every autodiff op");
  c_gc->add_option("--seeds", gc.seeds, "Random cases per op")->capture_default_str();
  c_gc->add_option("--tol", gc.tol, "Relative tolerance")->capture_default_str();
  c_gc->add_option("--step", gc.step, "Central-difference step")->capture_default_str();
  c_gc->add_option("--out", gc.out, "Optional output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_gen) return cmd_gen_data(gen);
    if (*c_train) return cmd_train(train);
    if (*c_pl) return cmd_pseudo_label(pl);
    if (*c_dec) return cmd_decompose(dec);
    if (*c_rel) return cmd_relight(rel);
    if (*c_tr) return cmd_transfer(tr);
    if (*c_ev) return cmd_eval(ev);
    if (*c_gc) return cmd_gradcheck(gc);
  } catch (const std::exception& e) {
    std::cerr << "sfskit: error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
