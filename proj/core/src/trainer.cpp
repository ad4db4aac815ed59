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

#include "sfskit/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "sfskit/ad/optim.hpp"
#include "sfskit/io.hpp"
#include "sfskit/parallel.hpp"

namespace sfskit::trainer {

namespace {

constexpr int kTrainStateVersion = 1;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

void validate(const TrainConfig& cfg) {
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(cfg.mix_ratio >= 0.0 && cfg.mix_ratio <= 1.0)) {
    throw std::invalid_argument("mix_ratio must lie in [0, 1]");
  }
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (cfg.epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (cfg.steps && *cfg.steps < 0) throw std::invalid_argument("steps must be non-negative");
  if (cfg.checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be >= 0");
  if (cfg.checkpoint_every > 0 && cfg.checkpoint_path.empty()) {
    throw std::invalid_argument("checkpoint_every needs a checkpoint_path");
  }
  const LossWeights& w = cfg.weights;
  for (double v : {w.recon, w.normal, w.albedo, w.light}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("loss weights must be finite and >= 0");
  }
}

int pseudo_per_batch(const TrainConfig& cfg) {
  return static_cast<int>(std::floor(cfg.mix_ratio * cfg.batch_size + 1e-9));
}

namespace {

// Element `k` of the endless stream formed by concatenating independent
// permutations of [0, n).
class PermutationStream {
 public:
  PermutationStream(std::uint64_t seed, std::size_t n) : seed_(seed), n_(n) {}

  std::size_t at(unsigned long long k) {
    const unsigned long long pass = k / n_;
    if (pass != pass_ || perm_.empty()) {
      perm_.resize(n_);
      std::iota(perm_.begin(), perm_.end(), std::size_t{0});
      std::mt19937_64 rng(datagen::derive_seed(seed_, pass));
      std::shuffle(perm_.begin(), perm_.end(), rng);
      pass_ = pass;
    }
    return perm_[k % n_];
  }

 private:
  std::uint64_t seed_;
  std::size_t n_;
  unsigned long long pass_ = 0;
  std::vector<std::size_t> perm_;
};

}  // namespace

BatchPlan plan_batch(const TrainConfig& cfg, long long step, std::size_t n_synthetic,
                     std::size_t n_pseudo) {
  const int n_p = pseudo_per_batch(cfg);
  const int n_s = cfg.batch_size - n_p;
  if (n_p > 0 && n_pseudo == 0) throw std::invalid_argument("mix_ratio needs pseudo-real samples");
  if (n_s > 0 && n_synthetic == 0) throw std::invalid_argument("batch needs synthetic samples");
  BatchPlan plan;
  if (n_s > 0) {
    PermutationStream s(datagen::derive_seed(cfg.seed, 0x5157), n_synthetic);
    for (int j = 0; j < n_s; ++j) plan.synthetic.push_back(s.at(static_cast<unsigned long long>(step) * n_s + j));
  }
  if (n_p > 0) {
    PermutationStream s(datagen::derive_seed(cfg.seed, 0x9e7), n_pseudo);
    for (int j = 0; j < n_p; ++j) plan.pseudo.push_back(s.at(static_cast<unsigned long long>(step) * n_p + j));
  }
  return plan;
}

BatchLoss batch_loss(nets::Model& model, const std::vector<const Sample*>& batch,
                     const LossWeights& weights, ad::NormMode mode) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  std::vector<const Map3*> images, normals, albedos;
  std::vector<const Mask*> masks;
  std::vector<const LightSH*> lights;
  for (const Sample* s : batch) {
    images.push_back(&s->image);
    normals.push_back(&s->normal);
    albedos.push_back(&s->albedo);
    masks.push_back(&s->mask);
    lights.push_back(&s->light);
  }
  const ad::Tensor<float> x = nets::stack_maps(images);
  const ad::Tensor<float> m = nets::stack_masks(masks);
  const nets::DecompositionOutput pred = model.forward(x, mode);

  const ad::Tensor<float> n_hat = ad::normalize_channels(pred.normal);
  const ad::Tensor<float> recon = ad::mul(pred.albedo, ad::sh_shading(n_hat, pred.light));
  const ad::Tensor<float> e_recon = ad::masked_l1(recon, x, m);
  const ad::Tensor<float> e_normal = ad::masked_l1(n_hat, nets::stack_maps(normals), m);
  const ad::Tensor<float> e_albedo = ad::masked_l1(pred.albedo, nets::stack_maps(albedos), m);
  const ad::Tensor<float> e_light = ad::mse(pred.light, nets::stack_lights(lights));

  BatchLoss out;
  out.total = ad::weighted_sum<float>({e_recon, e_normal, e_albedo, e_light},
                                      {weights.recon, weights.normal, weights.albedo, weights.light});
  out.values = {e_recon.item(), e_normal.item(), e_albedo.item(), e_light.item(), out.total.item()};
  return out;
}

namespace {

nlohmann::json losses_to_json(const std::vector<StepLosses>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (const StepLosses& l : v) a.push_back({l.recon, l.normal, l.albedo, l.light, l.total});
  return a;
}

std::vector<StepLosses> losses_from_json(const nlohmann::json& a) {
  std::vector<StepLosses> out;
  for (const auto& e : a) {
    out.push_back({e.at(0).get<double>(), e.at(1).get<double>(), e.at(2).get<double>(),
                   e.at(3).get<double>(), e.at(4).get<double>()});
  }
  return out;
}

std::filesystem::path train_state_path(const std::filesystem::path& ckpt) {
  return ckpt.string() + ".train.json";
}

void save_training_checkpoint(const nets::Model& model, const std::filesystem::path& path,
                              const std::string& stage, const TrainConfig& cfg,
                              const std::vector<StepLosses>& history) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  nets::save_model(model, path, true);
  nlohmann::json doc = {{"version", kTrainStateVersion},
                        {"stage", stage},
                        {"step", history.size()},
                        {"seed", cfg.seed},
                        {"batch_size", cfg.batch_size},
                        {"mix_ratio", cfg.mix_ratio},
                        {"lr", cfg.lr},
                        {"step_losses", losses_to_json(history)}};
  write_text(train_state_path(path), doc.dump(1) + "\n");
}

std::vector<StepLosses> load_training_checkpoint(nets::Model& model,
                                                 const std::filesystem::path& path,
                                                 const std::string& stage,
                                                 const TrainConfig& cfg) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
  const std::filesystem::path meta = train_state_path(path);
  if (!std::filesystem::exists(meta)) throw IoError("training state not found: " + meta.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text(meta));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(meta.string() + ": " + e.what());
  }
  if (doc.at("stage").get<std::string>() != stage) {
    throw std::invalid_argument("checkpoint " + path.string() + " belongs to " +
                                doc.at("stage").get<std::string>() + ", not " + stage);
  }
  if (doc.at("seed").get<std::uint64_t>() != cfg.seed ||
      doc.at("batch_size").get<int>() != cfg.batch_size ||
      doc.at("mix_ratio").get<double>() != cfg.mix_ratio) {
    throw std::invalid_argument("checkpoint " + path.string() +
                                " was written with a different seed, batch size or mix ratio");
  }
  model.load_state(ad::read_checkpoint(path));
  return losses_from_json(doc.at("step_losses"));
}

std::vector<StepLosses> epoch_means(const std::vector<StepLosses>& steps, long long per_epoch) {
  std::vector<StepLosses> out;
  for (std::size_t start = 0; start < steps.size(); start += static_cast<std::size_t>(per_epoch)) {
    const std::size_t end = std::min(steps.size(), start + static_cast<std::size_t>(per_epoch));
    StepLosses m;
    for (std::size_t i = start; i < end; ++i) {
      m.recon += steps[i].recon;
      m.normal += steps[i].normal;
      m.albedo += steps[i].albedo;
      m.light += steps[i].light;
      m.total += steps[i].total;
    }
    const double n = static_cast<double>(end - start);
    m.recon /= n;
    m.normal /= n;
    m.albedo /= n;
    m.light /= n;
    m.total /= n;
    out.push_back(m);
  }
  return out;
}

std::string describe(const StepLosses& l) {
  return "total " + fmt("%.6f", l.total) + " recon " + fmt("%.6f", l.recon) + " normal " +
         fmt("%.6f", l.normal) + " albedo " + fmt("%.6f", l.albedo) + " light " +
         fmt("%.6f", l.light);
}

StageReport run_training(nets::Model& model, const std::vector<Sample>& synthetic,
                         const std::vector<Sample>& pseudo, const TrainConfig& cfg,
                         const std::string& stage) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  StageReport report;
  report.stage = stage;
  const std::size_t n_total = synthetic.size() + pseudo.size();
  report.steps_per_epoch =
      std::max<long long>(1, static_cast<long long>((n_total + cfg.batch_size - 1) / cfg.batch_size));
  const long long total_steps =
      cfg.steps ? *cfg.steps : static_cast<long long>(cfg.epochs) * report.steps_per_epoch;

  const LossWeights& w = cfg.weights;
  if (total_steps > 0 && w.normal == 0.0 && w.albedo == 0.0 && w.light == 0.0) {
    throw std::invalid_argument(
        "refusing to train with reconstruction loss alone: at least one of the normal, albedo "
        "or light weights must be positive");
  }

  std::vector<StepLosses> history;
  if (!cfg.resume_from.empty()) {
    history = load_training_checkpoint(model, cfg.resume_from, stage, cfg);
    if (static_cast<long long>(history.size()) > total_steps) {
      throw std::invalid_argument("checkpoint is past the configured number of steps");
    }
  }

  std::vector<ad::Parameter*> params = model.parameters();
  ad::AdamOptions adam;
  adam.lr = cfg.lr;
  ad::zero_grad(params);

  for (long long step = static_cast<long long>(history.size()); step < total_steps; ++step) {
    const BatchPlan plan = plan_batch(cfg, step, synthetic.size(), pseudo.size());
    std::vector<const Sample*> batch;
    for (std::size_t i : plan.synthetic) batch.push_back(&synthetic[i]);
    for (std::size_t i : plan.pseudo) batch.push_back(&pseudo[i]);

    ad::Tape tape;
    BatchLoss loss;
    {
      ad::TapeScope scope(tape);
      loss = batch_loss(model, batch, w, ad::NormMode::kTrain);
    }
    const StepLosses& v = loss.values;
    if (!std::isfinite(v.total) || !std::isfinite(v.recon) || !std::isfinite(v.normal) ||
        !std::isfinite(v.albedo) || !std::isfinite(v.light)) {
      std::string where;
      if (!cfg.checkpoint_path.empty()) {
        const std::filesystem::path snap = cfg.checkpoint_path.string() + ".diverged";
        save_training_checkpoint(model, snap, stage, cfg, history);
        where = "; parameters before this step saved to " + snap.string();
      }
      throw TrainingDiverged(stage + ": non-finite loss at step " + std::to_string(step) + " (" +
                             describe(v) + ")" + where);
    }
    tape.backward(loss.total);
    ad::adam_step(params, adam);
    ad::zero_grad(params);
    history.push_back(v);

    const long long done = step + 1;
    if (cfg.log && (done % std::max<long long>(1, cfg.log_every) == 0 || done == total_steps)) {
      cfg.log(stage + " step " + std::to_string(done) + "/" + std::to_string(total_steps) + " " +
              describe(v));
    }
    if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0) {
      save_training_checkpoint(model, cfg.checkpoint_path, stage, cfg, history);
    }
  }

  report.steps_run = static_cast<long long>(history.size());
  report.step_losses = std::move(history);
  report.epoch_losses = epoch_means(report.step_losses, report.steps_per_epoch);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace

StageReport train_stage_a(nets::Model& model, const std::vector<Sample>& synthetic,
                          const TrainConfig& cfg) {
  for (const Sample& s : synthetic) {
    if (s.family != datagen::Family::kSynthetic || s.supervision != datagen::Supervision::kGroundTruth) {
      throw std::invalid_argument("stage A trains on synthetic ground truth only");
    }
  }
  TrainConfig c = cfg;
  c.mix_ratio = 0.0;
  return run_training(model, synthetic, {}, c, "stage-a");
}

StageReport train_stage_c(nets::Model& model, const std::vector<Sample>& synthetic,
                          const std::vector<Sample>& pseudo_labelled, const TrainConfig& cfg) {
  for (const Sample& s : synthetic) {
    if (s.family != datagen::Family::kSynthetic) {
      throw std::invalid_argument("stage C: the synthetic set contains a pseudo-real sample");
    }
  }
  for (const Sample& s : pseudo_labelled) {
    if (s.family == datagen::Family::kPseudoReal &&
        s.supervision == datagen::Supervision::kGroundTruth) {
      throw std::invalid_argument(
          "stage C: pseudo-real sample carries ground-truth supervision; pseudo-label it first");
    }
  }
  return run_training(model, synthetic, pseudo_labelled, cfg, "stage-c");
}

// ------------------------------------------------------------- evaluation

namespace {

template <typename Fn>
void for_each_decomposition(nets::Model& model, const std::vector<Sample>& samples, int batch_size,
                            Fn&& fn) {
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const ColorMap*> images;
    std::vector<const Mask*> masks;
    for (std::size_t i = start; i < end; ++i) {
      images.push_back(&samples[i].image);
      masks.push_back(&samples[i].mask);
    }
    const std::vector<Decomposition> dec = nets::decompose(model, images, masks);
    for (std::size_t i = start; i < end; ++i) fn(i, dec[i - start]);
  }
}

}  // namespace

ReconErrorStats eval_recon(nets::Model& model, const std::vector<Sample>& samples, int batch_size) {
  ReconErrorAccumulator acc;
  for_each_decomposition(model, samples, batch_size, [&](std::size_t i, const Decomposition& d) {
    const Sample& s = samples[i];
    acc.add(s.image, render(d.normal, d.albedo, d.light, s.mask), s.mask);
  });
  return acc.stats();
}

std::vector<Eigen::Vector3d> benchmark_light_directions(int num_lights) {
  if (num_lights < 2) throw std::invalid_argument("need at least two benchmark lights");
  std::vector<Eigen::Vector3d> dirs;
  for (int i = 0; i < num_lights; ++i) {
    const double phi = std::numbers::pi * (static_cast<double>(i) / (num_lights - 1) - 0.5);
    dirs.push_back(Eigen::Vector3d(std::sin(phi), 0.25, std::cos(phi)).normalized());
  }
  return dirs;
}

LightBenchmark make_light_benchmark(const LightBenchmarkOptions& opts) {
  if (opts.num_subjects < 2) throw std::invalid_argument("need at least two benchmark subjects");
  const auto dirs = benchmark_light_directions(opts.num_lights);
  const int half = opts.num_subjects / 2;

  const std::size_t n = static_cast<std::size_t>(opts.num_subjects) * dirs.size();
  std::vector<Sample> all(n);
  parallel_for(static_cast<std::size_t>(opts.num_subjects), [&](std::size_t subject) {
    const std::uint64_t ss = datagen::derive_seed(opts.seed, subject);
    datagen::Shape shape =
        datagen::sample_shape(datagen::derive_seed(ss, 1), datagen::Family::kPseudoReal, opts.size);
    const ColorMap albedo =
        datagen::sample_albedo(datagen::derive_seed(ss, 2), datagen::Family::kPseudoReal, opts.size);
    for (std::size_t l = 0; l < dirs.size(); ++l) {
      Sample& s = all[subject * dirs.size() + l];
      s.family = datagen::Family::kPseudoReal;
      s.normal = shape.normal;
      s.mask = shape.mask;
      s.albedo = albedo;
      s.light = dir_light_to_sh(dirs[l], {opts.intensity, opts.intensity, opts.intensity},
                                {opts.ambient, opts.ambient, opts.ambient});
      s.image = render(s.normal, s.albedo, s.light, s.mask);
    }
  });

  LightBenchmark bench;
  for (int subject = 0; subject < opts.num_subjects; ++subject) {
    for (std::size_t l = 0; l < dirs.size(); ++l) {
      Sample& s = all[static_cast<std::size_t>(subject) * dirs.size() + l];
      if (subject < half) {
        bench.train.push_back(std::move(s));
        bench.train_labels.push_back(static_cast<int>(l));
      } else {
        bench.test.push_back(std::move(s));
        bench.test_labels.push_back(static_cast<int>(l));
      }
    }
  }
  return bench;
}

namespace {

LightClassReport classify(const std::vector<LightSH>& train, const std::vector<int>& train_labels,
                          const std::vector<LightSH>& test, const std::vector<int>& test_labels,
                          int num_classes) {
  std::vector<LabeledLight> tr, te;
  for (std::size_t i = 0; i < train.size(); ++i) tr.push_back({train[i], train_labels[i]});
  for (std::size_t i = 0; i < test.size(); ++i) te.push_back({test[i], test_labels[i]});
  LightClassifierOptions opts;
  opts.num_classes = num_classes;
  return light_classify(tr, te, opts);
}

int class_count(const LightBenchmark& b) {
  return 1 + *std::max_element(b.train_labels.begin(), b.train_labels.end());
}

}  // namespace

LightClassReport eval_light_classification(nets::Model& model, const LightBenchmark& bench,
                                           int batch_size) {
  std::vector<LightSH> train(bench.train.size()), test(bench.test.size());
  for_each_decomposition(model, bench.train, batch_size,
                         [&](std::size_t i, const Decomposition& d) { train[i] = d.light; });
  for_each_decomposition(model, bench.test, batch_size,
                         [&](std::size_t i, const Decomposition& d) { test[i] = d.light; });
  return classify(train, bench.train_labels, test, bench.test_labels, class_count(bench));
}

LightClassReport eval_light_classification_ideal(const LightBenchmark& bench) {
  auto solve_all = [](const std::vector<Sample>& set) {
    std::vector<LightSH> out(set.size());
    parallel_for(set.size(), [&](std::size_t i) {
      out[i] = solve_light_ls(set[i].image, set[i].normal, set[i].albedo, set[i].mask);
    });
    return out;
  };
  return classify(solve_all(bench.train), bench.train_labels, solve_all(bench.test),
                  bench.test_labels, class_count(bench));
}

// -------------------------------------------------------------- paradigms

std::string to_string(Paradigm p) {
  switch (p) {
    case Paradigm::kSkipNetSyn: return "skipnet-syn";
    case Paradigm::kSfsNetSyn: return "sfsnet-syn";
    case Paradigm::kSfsNetFull: return "sfsnet-full";
    case Paradigm::kSkipNetPlusFull: return "skipnet-plus-full";
  }
  return "unknown";
}

Paradigm parse_paradigm(const std::string& name) {
  for (Paradigm p : all_paradigms()) {
    if (to_string(p) == name) return p;
  }
  throw std::invalid_argument("unknown paradigm '" + name +
                              "' (expected skipnet-syn, sfsnet-syn, sfsnet-full or skipnet-plus-full)");
}

const std::vector<Paradigm>& all_paradigms() {
  static const std::vector<Paradigm> v = {Paradigm::kSkipNetSyn, Paradigm::kSfsNetSyn,
                                          Paradigm::kSfsNetFull, Paradigm::kSkipNetPlusFull};
  return v;
}

ParadigmConfig default_paradigm_config() {
  ParadigmConfig c;
  c.stage_a.epochs = 30;
  c.stage_c.epochs = 40;
  return c;
}

ParadigmRunner::ParadigmRunner(ParadigmConfig cfg) : cfg_(std::move(cfg)) {
  nets::validate(cfg_.net);
  for (TrainConfig stage : {cfg_.stage_a, cfg_.stage_c}) {
    if (stage.checkpoint_every > 0 && stage.checkpoint_path.empty()) {
      if (cfg_.work_dir.empty()) throw std::invalid_argument("checkpoint_every needs a work_dir");
      stage.checkpoint_path = cfg_.work_dir / "stage.ckpt";
    }
    validate(stage);
  }
  if (cfg_.n_synthetic < 0 || cfg_.n_pseudo_real < 0 || cfg_.n_heldout < 1) {
    throw std::invalid_argument("dataset sizes must be non-negative and the held-out set non-empty");
  }
  if (cfg_.benchmark.num_subjects < 2 || cfg_.benchmark.num_lights < 2) {
    throw std::invalid_argument("the light benchmark needs at least two subjects and two lights");
  }
  cfg_.benchmark.size = cfg_.net.input_size;
}

void ParadigmRunner::log(const std::string& line) const {
  if (cfg_.log) cfg_.log(line);
}

namespace {

std::vector<Sample> generate(const ParadigmConfig& cfg, int n, std::uint64_t stream,
                             datagen::Family family) {
  datagen::DatasetOptions opts;
  opts.size = cfg.net.input_size;
  opts.noise_sigma = cfg.noise_sigma;
  return datagen::make_dataset(n, datagen::derive_seed(cfg.seed, stream), family, opts);
}

}  // namespace

const std::vector<Sample>& ParadigmRunner::synthetic() {
  if (!synthetic_) {
    log("generating " + std::to_string(cfg_.n_synthetic) + " synthetic samples");
    synthetic_ = generate(cfg_, cfg_.n_synthetic, 11, datagen::Family::kSynthetic);
  }
  return *synthetic_;
}

const std::vector<Sample>& ParadigmRunner::pseudo_real() {
  if (!pseudo_real_) {
    log("generating " + std::to_string(cfg_.n_pseudo_real) + " pseudo-real samples");
    pseudo_real_ = generate(cfg_, cfg_.n_pseudo_real, 12, datagen::Family::kPseudoReal);
  }
  return *pseudo_real_;
}

const std::vector<Sample>& ParadigmRunner::heldout() {
  if (!heldout_) heldout_ = generate(cfg_, cfg_.n_heldout, 13, datagen::Family::kPseudoReal);
  return *heldout_;
}

const LightBenchmark& ParadigmRunner::benchmark() {
  if (!bench_) bench_ = make_light_benchmark(cfg_.benchmark);
  return *bench_;
}

std::unique_ptr<nets::Model> ParadigmRunner::train_fresh(nets::Architecture arch, Recipe recipe,
                                                         const std::string& tag) {
  auto model = nets::build_model(arch, cfg_.net);
  // sfsnet-syn shares the stage-C step budget so it differs from
  // sfsnet-full only in its data.
  TrainConfig tc = recipe == Recipe::kStageA ? cfg_.stage_a : cfg_.stage_c;
  if (!tc.log) tc.log = cfg_.log;
  if (!cfg_.work_dir.empty()) {
    const std::filesystem::path ckpt = cfg_.work_dir / (tag + ".ckpt");
    if (tc.checkpoint_every > 0) tc.checkpoint_path = ckpt;
    if (cfg_.resume && std::filesystem::exists(ckpt)) {
      tc.resume_from = ckpt;
      log("resuming " + tag + " from " + ckpt.string());
    }
  }
  log("training " + tag);
  StageReport r = recipe == Recipe::kMixed
                      ? train_stage_c(*model, synthetic(), pseudo_labelled(), tc)
                      : train_stage_a(*model, synthetic(), tc);
  reports_[tag] = std::move(r);
  if (!cfg_.work_dir.empty()) nets::save_model(*model, cfg_.work_dir / (tag + ".model"));
  return model;
}

nets::Model& ParadigmRunner::stage_a_model() {
  if (!stage_a_) stage_a_ = train_fresh(nets::Architecture::kSkipNet, Recipe::kStageA, "skipnet-stage-a");
  return *stage_a_;
}

const std::vector<Sample>& ParadigmRunner::pseudo_labelled() {
  if (!labelled_) {
    nets::Model& teacher = stage_a_model();
    log("pseudo-labelling " + std::to_string(pseudo_real().size()) + " samples");
    labelled_ = datagen::pseudo_label(teacher, pseudo_real());
  }
  return *labelled_;
}

ReconErrorStats ParadigmRunner::pseudo_label_residual() {
  return eval_recon(stage_a_model(), heldout());
}

ParadigmRow ParadigmRunner::run(Paradigm p) {
  std::unique_ptr<nets::Model> owned;
  nets::Model* model = nullptr;
  switch (p) {
    case Paradigm::kSkipNetSyn:
      model = &stage_a_model();
      break;
    case Paradigm::kSfsNetSyn:
      owned = train_fresh(nets::Architecture::kSfsNet, Recipe::kSyntheticOnly, "sfsnet-syn");
      model = owned.get();
      break;
    case Paradigm::kSfsNetFull:
      owned = train_fresh(nets::Architecture::kSfsNet, Recipe::kMixed, "sfsnet-full");
      model = owned.get();
      break;
    case Paradigm::kSkipNetPlusFull:
      owned = train_fresh(nets::Architecture::kSkipNetPlus, Recipe::kMixed, "skipnet-plus-full");
      model = owned.get();
      break;
  }
  ParadigmRow row;
  row.paradigm = to_string(p);
  log("evaluating " + row.paradigm);
  row.recon = eval_recon(*model, heldout());
  row.light = eval_light_classification(*model, benchmark());
  return row;
}

ParadigmRow run_paradigm(Paradigm p, const ParadigmConfig& cfg) {
  ParadigmRunner runner(cfg);
  return runner.run(p);
}

}  // namespace sfskit::trainer
