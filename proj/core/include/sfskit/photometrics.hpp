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

// Lighting recovery, light transfer and the evaluation metrics.

#ifndef SFSKIT_PHOTOMETRICS_HPP_
#define SFSKIT_PHOTOMETRICS_HPP_

#include <array>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sfskit/types.hpp"

namespace sfskit {

class DegenerateGeometryError : public std::runtime_error {
 public:
  DegenerateGeometryError(int channel, const std::string& detail);
  int channel() const { return channel_; }

 private:
  int channel_;
};

// A complete intrinsic decomposition of one image.
struct Decomposition {
  VectorFieldMap normal;
  ColorMap albedo;
  LightSH light;
};

// Pixels with albedo below this are dropped from a channel's system.
inline constexpr double kMinSolveAlbedo = 1e-4;
// Systems whose design matrix is worse conditioned than this are rejected.
inline constexpr double kMaxSolveCondition = 1e8;

// Per-channel least squares for L_c minimizing
//   sum_p (I_c(p) - A_c(p) Y(p)^T L_c)^2
// over masked pixels. Solved in double precision via SVD.
LightSH solve_light_ls(const ColorMap& image, const VectorFieldMap& normals,
                       const ColorMap& albedo, const Mask& mask);

// Condition number of channel c's design matrix (inf when it has fewer than
// nine usable rows).
double light_system_condition(const VectorFieldMap& normals,
                              const ColorMap& albedo, const Mask& mask,
                              int channel);

struct TransferResult {
  ColorMap image;    // target normals and albedo under the source light
  ColorMap shading;  // target normals under the source light
};

TransferResult transfer_light(const Decomposition& source,
                              const Decomposition& target, const Mask& mask);

struct NormalErrorStats {
  double mean_deg = 0.0;
  double std_deg = 0.0;
  double pct_under_20 = 0.0;
  double pct_under_25 = 0.0;
  double pct_under_30 = 0.0;
};

// Per-pixel errors are compared against the thresholds with a strict "<"
// after subtracting this guard, so float rounding of an exact-threshold
// rotation does not flip the count.
inline constexpr double kAngleThresholdGuardDeg = 1e-4;

NormalErrorStats angular_error_stats(const VectorFieldMap& pred,
                                     const VectorFieldMap& gt, const Mask& mask);

// Per-pixel angular errors in degrees, in pixel order, masked pixels only.
std::vector<double> angular_errors_deg(const VectorFieldMap& pred,
                                       const VectorFieldMap& gt,
                                       const Mask& mask);

struct ReconErrorStats {
  double mae = 0.0;   // 0-255 intensity scale
  double rmse = 0.0;  // 0-255 intensity scale
};

ReconErrorStats recon_error_stats(const ColorMap& image,
                                  const ColorMap& reconstruction,
                                  const Mask& mask);

// Sums of absolute and squared errors, for pooling across images.
struct ReconErrorAccumulator {
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  std::size_t count = 0;

  void add(const ColorMap& image, const ColorMap& reconstruction,
           const Mask& mask);
  ReconErrorStats stats() const;
};

inline constexpr int kNumLightClasses = 19;

struct LabeledLight {
  LightSH light;
  int label = 0;
};

struct LightClassReport {
  double top1 = 0.0;
  double top2 = 0.0;
  double top3 = 0.0;
  // confusion[true][predicted]
  std::vector<std::vector<int>> confusion;
};

struct LightClassifierOptions {
  int num_classes = kNumLightClasses;
  double l2 = 1e-3;
  double grad_tol = 1e-6;
  int max_epochs = 500;
};

// Multinomial logistic regression on the 27 coefficients, fit by full-batch
// gradient descent from zero weights with step 1/Lipschitz. Inputs are
// centered and PCA-whitened on the training set first; principal directions
// with variance below 1e-6 of the largest are dropped.
class LightClassifier {
 public:
  static LightClassifier fit(const std::vector<LabeledLight>& train,
                             const LightClassifierOptions& opts = {});

  std::vector<double> scores(const LightSH& light) const;
  int epochs_run() const { return epochs_; }
  double final_grad_norm() const { return grad_norm_; }

 private:
  std::vector<double> features(const LightSH& light) const;

  std::array<double, kLightCoeffs> mean_{};
  std::vector<double> whiten_;   // dims_ x 27
  int dims_ = 0;
  std::vector<double> weights_;  // num_classes x (dims_ + 1), bias last
  int classes_ = 0;
  int epochs_ = 0;
  double grad_norm_ = 0.0;
};

LightClassReport light_classify(const std::vector<LabeledLight>& train,
                                const std::vector<LabeledLight>& test,
                                const LightClassifierOptions& opts = {});

// Reports. Text tables follow the layouts of the published tables; the JSON
// documents carry the same numbers as flat key/value pairs.
std::string format_normal_table(
    const std::vector<std::pair<std::string, NormalErrorStats>>& rows);
std::string format_light_table(
    const std::vector<std::pair<std::string, LightClassReport>>& rows);

struct ParadigmRow {
  std::string paradigm;
  ReconErrorStats recon;
  LightClassReport light;
};

std::string format_paradigm_table(const std::vector<ParadigmRow>& rows);

std::string to_json(const NormalErrorStats& s);
std::string to_json(const ReconErrorStats& s);
std::string to_json(const LightClassReport& r);
std::string to_json(const std::vector<ParadigmRow>& rows);

}  // namespace sfskit

#endif  // SFSKIT_PHOTOMETRICS_HPP_
