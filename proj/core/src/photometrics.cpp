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

#include "sfskit/photometrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "sfskit/sh.hpp"

namespace sfskit {

namespace {

const char* kChannelNames[] = {"red", "green", "blue"};

void require_same(const Map3& a, const Map3& b, const char* what) {
  if (!a.same_dims(b)) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}
void require_same(const Map3& a, const Mask& m, const char* what) {
  if (!a.same_dims(m)) throw std::invalid_argument(std::string(what) + ": mask dimension mismatch");
}

struct ChannelSystem {
  Eigen::MatrixXd design;
  Eigen::VectorXd rhs;
};

ChannelSystem build_system(const ColorMap* image, const VectorFieldMap& normals,
                           const ColorMap& albedo, const Mask& mask, int c) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < normals.pixels(); ++i) {
    if (mask.at(i) && albedo.pixel(i)[c] >= kMinSolveAlbedo) rows.push_back(i);
  }
  ChannelSystem sys{Eigen::MatrixXd(rows.size(), kShBasisSize),
                    Eigen::VectorXd(rows.size())};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t i = rows[r];
    const float* n = normals.pixel(i);
    const auto y = sh_basis_unchecked<double>(n[0], n[1], n[2]);
    const double a = albedo.pixel(i)[c];
    for (int k = 0; k < kShBasisSize; ++k) sys.design(r, k) = a * y[k];
    sys.rhs(r) = image != nullptr ? image->pixel(i)[c] : 0.0;
  }
  return sys;
}

double condition_of(const Eigen::MatrixXd& design) {
  if (design.rows() < kShBasisSize) return std::numeric_limits<double>::infinity();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(design);
  const auto& s = svd.singularValues();
  if (s(kShBasisSize - 1) <= 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / s(kShBasisSize - 1);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

}  // namespace

DegenerateGeometryError::DegenerateGeometryError(int channel, const std::string& detail)
    : std::runtime_error("degenerate geometry in " +
                         std::string(kChannelNames[std::clamp(channel, 0, 2)]) +
                         " channel: " + detail),
      channel_(channel) {}

double light_system_condition(const VectorFieldMap& normals, const ColorMap& albedo,
                              const Mask& mask, int channel) {
  require_same(normals, albedo, "light_system_condition");
  require_same(normals, mask, "light_system_condition");
  return condition_of(build_system(nullptr, normals, albedo, mask, channel).design);
}

LightSH solve_light_ls(const ColorMap& image, const VectorFieldMap& normals,
                       const ColorMap& albedo, const Mask& mask) {
  require_same(image, normals, "solve_light_ls");
  require_same(image, albedo, "solve_light_ls");
  require_same(image, mask, "solve_light_ls");
  LightSH light;
  for (int c = 0; c < kNumChannels; ++c) {
    const ChannelSystem sys = build_system(&image, normals, albedo, mask, c);
    if (sys.design.rows() < kShBasisSize) {
      throw DegenerateGeometryError(
          c, std::to_string(sys.design.rows()) + " usable pixels, need at least 9");
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sys.design,
                                          Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    const double cond = s(kShBasisSize - 1) > 0.0
                            ? s(0) / s(kShBasisSize - 1)
                            : std::numeric_limits<double>::infinity();
    if (!(cond <= kMaxSolveCondition)) {
      throw DegenerateGeometryError(c, "condition number " + fmt("%.3g", cond) +
                                           " exceeds 1e8");
    }
    const Eigen::VectorXd x = svd.solve(sys.rhs);
    for (int k = 0; k < kShBasisSize; ++k) light.at(c, k) = static_cast<float>(x(k));
  }
  return light;
}

TransferResult transfer_light(const Decomposition& source, const Decomposition& target,
                              const Mask& mask) {
  TransferResult out;
  out.image = render(target.normal, target.albedo, source.light, mask);
  out.shading = shading(target.normal, source.light, mask);
  return out;
}

std::vector<double> angular_errors_deg(const VectorFieldMap& pred, const VectorFieldMap& gt,
                                       const Mask& mask) {
  require_same(pred, gt, "angular_error_stats");
  require_same(pred, mask, "angular_error_stats");
  std::vector<double> errs;
  errs.reserve(mask.count());
  for (std::size_t i = 0; i < pred.pixels(); ++i) {
    if (!mask.at(i)) continue;
    // Same angle as acos(clamp(dot)) for unit inputs, without its loss of
    // precision near 0 and 180 degrees.
    const Eigen::Vector3d p = pred.vec(i);
    const Eigen::Vector3d g = gt.vec(i);
    errs.push_back(std::atan2(p.cross(g).norm(), p.dot(g)) * 180.0 / std::numbers::pi);
  }
  return errs;
}

NormalErrorStats angular_error_stats(const VectorFieldMap& pred, const VectorFieldMap& gt,
                                     const Mask& mask) {
  const std::vector<double> errs = angular_errors_deg(pred, gt, mask);
  if (errs.empty()) throw std::invalid_argument("angular_error_stats: empty mask");
  const double n = static_cast<double>(errs.size());
  NormalErrorStats s;
  s.mean_deg = std::accumulate(errs.begin(), errs.end(), 0.0) / n;
  double var = 0.0;
  std::size_t u20 = 0, u25 = 0, u30 = 0;
  for (double e : errs) {
    var += (e - s.mean_deg) * (e - s.mean_deg);
    const double g = e + kAngleThresholdGuardDeg;
    u20 += g < 20.0;
    u25 += g < 25.0;
    u30 += g < 30.0;
  }
  s.std_deg = std::sqrt(var / n);
  s.pct_under_20 = 100.0 * u20 / n;
  s.pct_under_25 = 100.0 * u25 / n;
  s.pct_under_30 = 100.0 * u30 / n;
  return s;
}

void ReconErrorAccumulator::add(const ColorMap& image, const ColorMap& reconstruction,
                                const Mask& mask) {
  require_same(image, reconstruction, "recon_error_stats");
  require_same(image, mask, "recon_error_stats");
  for (std::size_t i = 0; i < image.pixels(); ++i) {
    if (!mask.at(i)) continue;
    for (int c = 0; c < 3; ++c) {
      const double d = 255.0 * (static_cast<double>(image.pixel(i)[c]) -
                                static_cast<double>(reconstruction.pixel(i)[c]));
      abs_sum += std::abs(d);
      sq_sum += d * d;
      ++count;
    }
  }
}

ReconErrorStats ReconErrorAccumulator::stats() const {
  if (count == 0) throw std::invalid_argument("recon_error_stats: empty mask");
  return {abs_sum / count, std::sqrt(sq_sum / count)};
}

ReconErrorStats recon_error_stats(const ColorMap& image, const ColorMap& reconstruction,
                                  const Mask& mask) {
  ReconErrorAccumulator acc;
  acc.add(image, reconstruction, mask);
  return acc.stats();
}

LightClassifier LightClassifier::fit(const std::vector<LabeledLight>& train,
                                     const LightClassifierOptions& opts) {
  const int k = opts.num_classes;
  if (k < 2) throw std::invalid_argument("light_classify: need at least two classes");
  std::vector<int> seen(k, 0);
  for (const auto& t : train) {
    if (t.label < 0 || t.label >= k) {
      throw std::invalid_argument("light_classify: label " + std::to_string(t.label) +
                                  " out of range");
    }
    seen[t.label] = 1;
  }
  for (int c = 0; c < k; ++c) {
    if (!seen[c]) {
      throw std::invalid_argument("light_classify: class " + std::to_string(c) +
                                  " missing from training set");
    }
  }

  LightClassifier model;
  model.classes_ = k;
  const std::size_t n = train.size();
  Eigen::MatrixXd raw(static_cast<Eigen::Index>(n), kLightCoeffs);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < kLightCoeffs; ++j) raw(i, j) = train[i].light.coeffs[j];
  }
  const Eigen::RowVectorXd mu = raw.colwise().mean();
  const Eigen::MatrixXd centered = raw.rowwise() - mu;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> pca(centered.transpose() * centered /
                                                           static_cast<double>(n));
  const Eigen::VectorXd ev = pca.eigenvalues();
  const double ev_max = std::max(ev.maxCoeff(), 0.0);
  for (int j = 0; j < kLightCoeffs; ++j) model.mean_[j] = mu(j);
  for (int q = kLightCoeffs - 1; q >= 0; --q) {
    if (!(ev(q) > 1e-6 * ev_max && ev(q) > 0.0)) continue;
    const Eigen::VectorXd axis = pca.eigenvectors().col(q) / std::sqrt(ev(q));
    for (int j = 0; j < kLightCoeffs; ++j) model.whiten_.push_back(axis(j));
    ++model.dims_;
  }
  const int d = model.dims_ + 1;

  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), d);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), k);
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double> f = model.features(train[i].light);
    for (int j = 0; j < d; ++j) x(i, j) = f[j];
    y(i, train[i].label) = 1.0;
  }

  const Eigen::MatrixXd gram = x.transpose() * x / static_cast<double>(n);
  const double lmax = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram).eigenvalues().maxCoeff();
  const double step = 1.0 / (0.5 * lmax + opts.l2);

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, k);
  Eigen::MatrixXd reg_mask = Eigen::MatrixXd::Ones(d, k);
  reg_mask.row(d - 1).setZero();

  int epoch = 0;
  double gnorm = std::numeric_limits<double>::infinity();
  for (; epoch < opts.max_epochs; ++epoch) {
    Eigen::MatrixXd logits = x * w;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const double mx = logits.row(i).maxCoeff();
      logits.row(i) = (logits.row(i).array() - mx).exp();
      logits.row(i) /= logits.row(i).sum();
    }
    const Eigen::MatrixXd grad = x.transpose() * (logits - y) / static_cast<double>(n) +
                                 opts.l2 * w.cwiseProduct(reg_mask);
    gnorm = grad.norm();
    if (gnorm < opts.grad_tol) break;
    w -= step * grad;
  }
  model.epochs_ = epoch;
  model.grad_norm_ = gnorm;
  model.weights_.resize(static_cast<std::size_t>(k) * d);
  for (int c = 0; c < k; ++c) {
    for (int j = 0; j < d; ++j) model.weights_[c * d + j] = w(j, c);
  }
  return model;
}

std::vector<double> LightClassifier::features(const LightSH& light) const {
  std::vector<double> f(static_cast<std::size_t>(dims_) + 1, 0.0);
  for (int q = 0; q < dims_; ++q) {
    double acc = 0.0;
    for (int j = 0; j < kLightCoeffs; ++j) {
      acc += whiten_[static_cast<std::size_t>(q) * kLightCoeffs + j] * (light.coeffs[j] - mean_[j]);
    }
    f[q] = acc;
  }
  f[dims_] = 1.0;
  return f;
}

std::vector<double> LightClassifier::scores(const LightSH& light) const {
  const int d = dims_ + 1;
  const std::vector<double> f = features(light);
  std::vector<double> s(classes_, 0.0);
  for (int c = 0; c < classes_; ++c) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) acc += weights_[static_cast<std::size_t>(c) * d + j] * f[j];
    s[c] = acc;
  }
  return s;
}

LightClassReport light_classify(const std::vector<LabeledLight>& train,
                                const std::vector<LabeledLight>& test,
                                const LightClassifierOptions& opts) {
  const LightClassifier model = LightClassifier::fit(train, opts);
  const int k = opts.num_classes;
  LightClassReport report;
  report.confusion.assign(k, std::vector<int>(k, 0));
  if (test.empty()) return report;
  std::size_t hits[3] = {0, 0, 0};
  for (const auto& t : test) {
    if (t.label < 0 || t.label >= k) {
      throw std::invalid_argument("light_classify: test label out of range");
    }
    const std::vector<double> s = model.scores(t.light);
    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return s[a] > s[b]; });
    report.confusion[t.label][order[0]] += 1;
    for (int r = 0; r < 3 && r < k; ++r) {
      if (order[r] == t.label) {
        for (int q = r; q < 3; ++q) hits[q] += 1;
        break;
      }
    }
  }
  const double n = static_cast<double>(test.size());
  report.top1 = 100.0 * hits[0] / n;
  report.top2 = 100.0 * hits[1] / n;
  report.top3 = 100.0 * hits[2] / n;
  return report;
}

std::string format_normal_table(
    const std::vector<std::pair<std::string, NormalErrorStats>>& rows) {
  std::ostringstream os;
  os << "| Algorithm            | Mean +- std       | < 20    | < 25    | < 30    |\n";
  os << "|----------------------|-------------------|---------|---------|---------|\n";
  for (const auto& [name, s] : rows) {
    os << "| " << pad(name, 20) << " | "
       << pad(fmt("%.2f", s.mean_deg) + " +- " + fmt("%.2f", s.std_deg), 17) << " | "
       << pad(fmt("%.2f%%", s.pct_under_20), 7) << " | "
       << pad(fmt("%.2f%%", s.pct_under_25), 7) << " | "
       << pad(fmt("%.2f%%", s.pct_under_30), 7) << " |\n";
  }
  return os.str();
}

std::string format_light_table(
    const std::vector<std::pair<std::string, LightClassReport>>& rows) {
  std::ostringstream os;
  os << "| Algorithm            | top-1 %  | top-2 %  | top-3 %  |\n";
  os << "|----------------------|----------|----------|----------|\n";
  for (const auto& [name, r] : rows) {
    os << "| " << pad(name, 20) << " | " << pad(fmt("%.2f", r.top1), 8) << " | "
       << pad(fmt("%.2f", r.top2), 8) << " | " << pad(fmt("%.2f", r.top3), 8) << " |\n";
  }
  return os.str();
}

std::string format_paradigm_table(const std::vector<ParadigmRow>& rows) {
  std::ostringstream os;
  os << "| Training Paradigm    | MAE      | RMSE     | Rank 1   | Rank 2   | Rank 3   |\n";
  os << "|----------------------|----------|----------|----------|----------|----------|\n";
  for (const auto& r : rows) {
    os << "| " << pad(r.paradigm, 20) << " | " << pad(fmt("%.2f", r.recon.mae), 8) << " | "
       << pad(fmt("%.2f", r.recon.rmse), 8) << " | "
       << pad(fmt("%.2f%%", r.light.top1), 8) << " | "
       << pad(fmt("%.2f%%", r.light.top2), 8) << " | "
       << pad(fmt("%.2f%%", r.light.top3), 8) << " |\n";
  }
  return os.str();
}

namespace {

nlohmann::json json_of(const NormalErrorStats& s) {
  return {{"mean_deg", s.mean_deg},
          {"std_deg", s.std_deg},
          {"pct_under_20", s.pct_under_20},
          {"pct_under_25", s.pct_under_25},
          {"pct_under_30", s.pct_under_30}};
}
nlohmann::json json_of(const ReconErrorStats& s) {
  return {{"mae", s.mae}, {"rmse", s.rmse}};
}
nlohmann::json json_of(const LightClassReport& r) {
  return {{"top1", r.top1}, {"top2", r.top2}, {"top3", r.top3}, {"confusion", r.confusion}};
}

}  // namespace

std::string to_json(const NormalErrorStats& s) { return json_of(s).dump(2) + "\n"; }
std::string to_json(const ReconErrorStats& s) { return json_of(s).dump(2) + "\n"; }
std::string to_json(const LightClassReport& r) { return json_of(r).dump(2) + "\n"; }

std::string to_json(const std::vector<ParadigmRow>& rows) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row = {{"paradigm", r.paradigm},
                          {"mae", r.recon.mae},
                          {"rmse", r.recon.rmse},
                          {"rank1", r.light.top1},
                          {"rank2", r.light.top2},
                          {"rank3", r.light.top3}};
    doc.push_back(row);
  }
  return doc.dump(2) + "\n";
}

}  // namespace sfskit
