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

// Multi-stage training with pseudo-supervision.
//
//   stage A  supervised training on synthetic ground truth
//   stage B  pseudo_label() the pseudo-real set with the stage-A network
//   stage C  training on mini-batches mixing synthetic ground truth and
//            pseudo-labelled pseudo-real samples
//
// The reconstruction term always compares against the sample's own input
// image. Batch contents depend only on (seed, step), so a run resumed from
// a checkpoint follows the uninterrupted trajectory.

#ifndef SFSKIT_TRAINER_HPP_
#define SFSKIT_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfskit/datagen.hpp"
#include "sfskit/nets.hpp"
#include "sfskit/photometrics.hpp"
#include "sfskit/sh.hpp"

namespace sfskit::trainer {

using datagen::Sample;

struct TrainConfig {
  LossWeights weights;
  int batch_size = 16;
  double mix_ratio = 0.5;  // stage C only
  double lr = 1e-3;
  int epochs = 30;
  // When set, overrides `epochs` with an exact step count.
  std::optional<long long> steps;
  std::uint64_t seed = 1;
  // Every `checkpoint_every` steps (0 disables) the model, optimizer state
  // and loss history are written to `checkpoint_path`.
  long long checkpoint_every = 0;
  std::filesystem::path checkpoint_path;
  // Continue from a checkpoint written by a run with the same config.
  std::filesystem::path resume_from;
  // Called with one line per logged step.
  std::function<void(const std::string&)> log;
  long long log_every = 50;
};

void validate(const TrainConfig& cfg);

struct BatchPlan {
  std::vector<std::size_t> synthetic;  // indices into the synthetic set
  std::vector<std::size_t> pseudo;     // indices into the pseudo-labelled set
};

// floor(mix_ratio * batch_size) pseudo-real samples, the rest synthetic.
int pseudo_per_batch(const TrainConfig& cfg);

// Samples are drawn without replacement from per-pass permutations of each
// set; the result is a pure function of (seed, step, set sizes).
BatchPlan plan_batch(const TrainConfig& cfg, long long step, std::size_t n_synthetic,
                     std::size_t n_pseudo);

struct StepLosses {
  double recon = 0.0;
  double normal = 0.0;
  double albedo = 0.0;
  double light = 0.0;
  double total = 0.0;
};

struct StageReport {
  std::string stage;
  long long steps_run = 0;
  long long steps_per_epoch = 0;
  std::vector<StepLosses> step_losses;
  // Mean of step_losses over each (possibly partial) epoch.
  std::vector<StepLosses> epoch_losses;
  double wall_seconds = 0.0;
  std::map<std::string, double> metrics;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One forward pass with the full objective. Targets are the stored
// normal/albedo/light of each sample; the reconstruction target is the
// sample's image.
struct BatchLoss {
  ad::Tensor<float> total;
  StepLosses values;
};
BatchLoss batch_loss(nets::Model& model, const std::vector<const Sample*>& batch,
                     const LossWeights& weights, ad::NormMode mode);

StageReport train_stage_a(nets::Model& model, const std::vector<Sample>& synthetic,
                          const TrainConfig& cfg);

// Throws std::invalid_argument if a pseudo-real sample still carries
// ground-truth supervision or a synthetic-set entry is not synthetic.
StageReport train_stage_c(nets::Model& model, const std::vector<Sample>& synthetic,
                          const std::vector<Sample>& pseudo_labelled, const TrainConfig& cfg);

// ------------------------------------------------------------- evaluation

// Recon error of render(decompose(image)) against the image, on the mask.
ReconErrorStats eval_recon(nets::Model& model, const std::vector<Sample>& samples,
                           int batch_size = 16);

// Pseudo-real shapes and albedos under each light, rendered without specular
// or noise, so lights solved from ground-truth geometry are exact.
struct LightBenchmark {
  std::vector<Sample> train;  // subjects in the first half
  std::vector<Sample> test;   // subjects in the second half
  std::vector<int> train_labels;
  std::vector<int> test_labels;
};

struct LightBenchmarkOptions {
  int num_lights = kNumLightClasses;
  int num_subjects = 40;
  int size = 64;
  std::uint64_t seed = 7;
  float intensity = 0.55f;
  float ambient = 0.3f;
};

// Directions on a horizontal arc from -90 to +90 degrees azimuth, raised
// slightly above the horizon.
std::vector<Eigen::Vector3d> benchmark_light_directions(int num_lights);
LightBenchmark make_light_benchmark(const LightBenchmarkOptions& opts = {});

LightClassReport eval_light_classification(nets::Model& model, const LightBenchmark& bench,
                                           int batch_size = 16);
// Same protocol with lights from solve_light_ls on ground-truth geometry.
LightClassReport eval_light_classification_ideal(const LightBenchmark& bench);

// -------------------------------------------------------------- paradigms

enum class Paradigm { kSkipNetSyn, kSfsNetSyn, kSfsNetFull, kSkipNetPlusFull };

std::string to_string(Paradigm p);
Paradigm parse_paradigm(const std::string& name);
const std::vector<Paradigm>& all_paradigms();

struct ParadigmConfig {
  int n_synthetic = 2000;
  int n_pseudo_real = 2000;
  int n_heldout = 200;
  double noise_sigma = 0.01;
  std::uint64_t seed = 1;
  nets::NetConfig net;
  TrainConfig stage_a;
  TrainConfig stage_c;
  LightBenchmarkOptions benchmark;
  // Optional directory receiving the trained networks and, when a stage
  // config sets checkpoint_every, their periodic checkpoints.
  std::filesystem::path work_dir;
  // Continue each stage from its checkpoint in work_dir when one exists.
  bool resume = false;
  std::function<void(const std::string&)> log;
};

ParadigmConfig default_paradigm_config();

// Shares generated data and the stage-A network between paradigms, so
// several paradigms of one configuration train stage A once.
class ParadigmRunner {
 public:
  explicit ParadigmRunner(ParadigmConfig cfg);

  ParadigmRow run(Paradigm p);

  const std::vector<Sample>& synthetic();
  const std::vector<Sample>& pseudo_real();
  const std::vector<Sample>& heldout();
  const std::vector<Sample>& pseudo_labelled();
  const LightBenchmark& benchmark();
  nets::Model& stage_a_model();

  // Recon error of the stage-B pseudo labels on the held-out set, i.e. of
  // the stage-A network.
  ReconErrorStats pseudo_label_residual();

  const std::map<std::string, StageReport>& reports() const { return reports_; }

 private:
  void log(const std::string& line) const;
  enum class Recipe { kStageA, kSyntheticOnly, kMixed };
  std::unique_ptr<nets::Model> train_fresh(nets::Architecture arch, Recipe recipe,
                                           const std::string& tag);

  ParadigmConfig cfg_;
  std::optional<std::vector<Sample>> synthetic_, pseudo_real_, heldout_, labelled_;
  std::optional<LightBenchmark> bench_;
  std::unique_ptr<nets::Model> stage_a_;
  std::map<std::string, StageReport> reports_;
};

ParadigmRow run_paradigm(Paradigm p, const ParadigmConfig& cfg);

}  // namespace sfskit::trainer

#endif  // SFSKIT_TRAINER_HPP_
