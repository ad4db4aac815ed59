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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion in the selected group fails.
//
//   sfskit_acceptance --group fast|trainability|ordering|cli|all

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "sfskit/ad/gradcheck.hpp"
#include "sfskit/ad/ops.hpp"
#include "sfskit/datagen.hpp"
#include "sfskit/io.hpp"
#include "sfskit/nets.hpp"
#include "sfskit/photometrics.hpp"
#include "sfskit/sh.hpp"
#include "sfskit/trainer.hpp"
#include "temp_dir.hpp"

namespace sfskit {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Runs `body`, appends its runtime and checks it against `budget_s`.
void criterion(const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double t = seconds_since(t0);
  std::string detail =
      o.detail + "; " + fmt("%.1f", t) + " s (budget " + fmt("%.0f", budget_s) + " s)";
  if (t > budget_s) {
    o.pass = false;
    detail += " over budget";
  }
  std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++g_failures;
}

// ---------------------------------------------------------------- fast

Outcome sh_correctness() {
  std::mt19937_64 rng(2026);
  std::vector<Eigen::Vector3d> dirs = {Eigen::Vector3d::UnitZ(), Eigen::Vector3d::UnitX()};
  while (dirs.size() < 1000) dirs.push_back(oracle::random_unit(rng));
  double worst = 0.0;
  for (const auto& d : dirs) {
    const ShBasis got = sh_basis(d);
    const auto want = oracle::sh9(d.x(), d.y(), d.z());
    for (int k = 0; k < 9; ++k) {
      worst = std::max(worst, std::fabs(got[k] - static_cast<double>(want[k])));
    }
  }
  // Pinned values at the poles.
  const double y00 = 0.28209479177387814, y1 = 0.48860251190291992;
  const double y20 = 0.31539156525252005, y22 = 0.54627421529603959;
  const ShBasis z = sh_basis(Eigen::Vector3d::UnitZ());
  const ShBasis x = sh_basis(Eigen::Vector3d::UnitX());
  const std::array<double, 9> pin_z = {y00, y1, 0, 0, 2 * y20, 0, 0, 0, 0};
  const std::array<double, 9> pin_x = {y00, 0, y1, 0, -y20, 0, 0, y22, 0};
  double pin = 0.0;
  for (int k = 0; k < 9; ++k) {
    pin = std::max({pin, std::fabs(z[k] - pin_z[k]), std::fabs(x[k] - pin_x[k])});
  }
  return {worst < 1e-6 && pin < 1e-6,
          "max |basis - oracle| " + fmt("%.2e", worst) + " over 1000 vectors, pinned " + fmt("%.2e", pin)};
}

Outcome rendering_identity() {
  const auto samples = datagen::make_dataset(100, 4242, datagen::Family::kSynthetic);
  double worst = 0.0;
  std::size_t ambient_mismatch = 0;
  const LightSH ambient = LightSH::ambient(1.0f);
  bool coefficient_ok = true;
  for (int c = 0; c < 3; ++c) {
    coefficient_ok = coefficient_ok &&
                     std::fabs(ambient.at(c, 0) - static_cast<float>(sh_const::kSqrt4Pi)) == 0.0f;
  }
  for (const auto& s : samples) {
    const ColorMap img = render(s.normal, s.albedo, s.light, s.mask);
    worst = std::max(worst, recon_loss(img, s.normal, s.albedo, s.light, s.mask));
    const ColorMap flat = render(s.normal, s.albedo, ambient, s.mask);
    for (std::size_t i = 0; i < flat.pixels(); ++i) {
      if (!s.mask.at(i)) continue;
      for (int c = 0; c < 3; ++c) ambient_mismatch += flat.pixel(i)[c] != s.albedo.pixel(i)[c];
    }
  }
  return {worst <= 1e-6 && ambient_mismatch == 0 && coefficient_ok,
          "max recon_loss " + fmt("%.2e", worst) + " over 100 samples, ambient mismatches " +
              std::to_string(ambient_mismatch)};
}

double residual_rms(const ColorMap& image, const VectorFieldMap& n, const ColorMap& albedo,
                    const Mask& mask, const std::array<Eigen::Matrix<double, 9, 1>, 3>& light) {
  long double sum = 0.0L;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n.pixels(); ++i) {
    if (!mask.at(i)) continue;
    const float* v = n.pixel(i);
    const auto y = oracle::sh9(v[0], v[1], v[2]);
    for (int c = 0; c < 3; ++c) {
      long double s = 0.0L;
      for (int k = 0; k < 9; ++k) s += y[k] * light[c][k];
      const long double r = image.pixel(i)[c] - albedo.pixel(i)[c] * s;
      sum += r * r;
      ++count;
    }
  }
  return static_cast<double>(std::sqrt(sum / count));
}

Outcome lighting_solve() {
  double worst_rel = 0.0, worst_cond = 0.0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto s = fixture::solve_case(seed, 32);
    for (int c = 0; c < 3; ++c) {
      worst_cond = std::max(worst_cond, light_system_condition(s.normal, s.albedo, s.mask, c));
    }
    const LightSH got = solve_light_ls(s.image, s.normal, s.albedo, s.mask);
    double num = 0.0, den = 0.0;
    for (int j = 0; j < kLightCoeffs; ++j) {
      num += std::pow(double(got.coeffs[j]) - s.light.coeffs[j], 2);
      den += std::pow(double(s.light.coeffs[j]), 2);
    }
    worst_rel = std::max(worst_rel, std::sqrt(num / den));
  }
  // Noisy images: residual of the library solve against a 64-bit reference.
  double worst_resid = 0.0;
  for (std::uint64_t seed = 101; seed <= 110; ++seed) {
    auto s = fixture::solve_case(seed, 32);
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> noise(0.0f, 0.01f);
    for (float& v : s.image.values()) v += noise(rng);
    const LightSH got = solve_light_ls(s.image, s.normal, s.albedo, s.mask);
    std::array<Eigen::Matrix<double, 9, 1>, 3> lib, ref;
    for (int c = 0; c < 3; ++c) {
      ref[c] = oracle::solve_channel(s.image, s.normal, s.albedo, s.mask, c);
      for (int k = 0; k < 9; ++k) lib[c][k] = got.at(c, k);
    }
    worst_resid = std::max(worst_resid, std::fabs(residual_rms(s.image, s.normal, s.albedo, s.mask, lib) -
                                                  residual_rms(s.image, s.normal, s.albedo, s.mask, ref)));
  }
  return {worst_rel < 1e-4 && worst_cond < 1e4 && worst_resid <= 1e-6,
          "max relative error " + fmt("%.2e", worst_rel) + " (max condition " + fmt("%.1f", worst_cond) +
              ", 50 seeds), noisy residual gap " + fmt("%.2e", worst_resid)};
}

Outcome autodiff() {
  std::map<std::string, int> passed;
  std::vector<std::string> failed;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (auto& c : ad::standard_gradcheck_cases(seed)) {
      const auto r = ad::gradcheck(c.op, c.inputs, 1e-5, 1e-4, seed);
      worst = std::max(worst, r.max_rel_error);
      if (r.passed) {
        ++passed[c.name];
      } else {
        failed.push_back(c.name + "@" + std::to_string(seed));
      }
    }
  }
  int min_runs = std::numeric_limits<int>::max();
  for (const auto& [name, n] : passed) min_runs = std::min(min_runs, n);

  using T = ad::Tensor<double>;
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g(0.0, 1.0);
  auto rnd = [&](ad::Shape shape) {
    T t(std::move(shape));
    for (double& v : t.data()) v = g(rng);
    return t;
  };
  double worst_adjoint = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const int cin = 1 + trial % 4, cout = 2 + trial % 3, h = 4 + 2 * (trial % 3), w = 6;
    const T x = rnd({2, cin, h, w});
    const T wt = rnd({cout, cin, 4, 4});
    const T y = rnd({2, cout, h / 2, w / 2});
    const T cx = ad::conv2d(x, wt, T(), 2);
    const T ty = ad::conv_transpose2d(y, wt, T());
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < cx.numel(); ++i) lhs += cx.data()[i] * y.data()[i];
    for (std::size_t i = 0; i < x.numel(); ++i) rhs += x.data()[i] * ty.data()[i];
    worst_adjoint = std::max(worst_adjoint, std::fabs(lhs - rhs));
  }
  std::string detail = std::to_string(passed.size()) + " ops, each passing on " +
                       std::to_string(min_runs) + " random shapes, max rel error " +
                       fmt("%.2e", worst) + ", adjoint gap " + fmt("%.2e", worst_adjoint);
  if (!failed.empty()) detail += ", failed: " + failed.front() + " and " + std::to_string(failed.size() - 1) + " more";
  return {failed.empty() && min_runs >= 20 && worst_adjoint <= 1e-10, detail};
}

using Expected = std::vector<std::pair<std::string, ad::Shape>>;

Expected expected_shapes(nets::Architecture arch) {
  Expected e;
  auto add = [&](const std::string& n, ad::Shape s) {
    s.insert(s.begin(), 1);
    e.emplace_back(n, s);
  };
  switch (arch) {
    case nets::Architecture::kSfsNet:
      add("conv.c1", {64, 128, 128});
      add("conv.c2", {128, 128, 128});
      add("conv.c3", {128, 64, 64});
      for (const char* b : {"normal", "albedo"}) {
        for (int r = 0; r < 5; ++r) add(std::string(b) + ".res" + std::to_string(r), {128, 64, 64});
        add(std::string(b) + ".res_out", {128, 64, 64});
      }
      for (const char* b : {"normal", "albedo"}) {
        const std::string p = std::string(b) + ".head.";
        add(p + "up", {128, 128, 128});
        add(p + "c1", {128, 128, 128});
        add(p + "c2", {64, 128, 128});
        add(p + "out", {3, 128, 128});
      }
      add("light.concat", {384, 64, 64});
      add("light.c1", {128, 64, 64});
      add("light.pool", {128});
      add("light.fc", {27});
      break;
    case nets::Architecture::kSkipNet:
      add("enc.c1", {64, 64, 64});
      add("enc.c2", {128, 32, 32});
      add("enc.c3", {256, 16, 16});
      add("enc.c4", {256, 8, 8});
      add("enc.c5", {256, 4, 4});
      add("enc.fc", {256});
      add("mlp.normal", {256});
      add("mlp.albedo", {256});
      add("mlp.light", {256});
      for (const char* b : {"normal", "albedo"}) {
        const std::string p = std::string(b) + ".dec.";
        add(p + "tile", {256, 4, 4});
        add(p + "cd1", {256, 8, 8});
        add(p + "cd2", {256, 16, 16});
        add(p + "cd3", {256, 32, 32});
        add(p + "cd4", {128, 64, 64});
        add(p + "cd5", {64, 128, 128});
        add(p + "out", {3, 128, 128});
      }
      add("light.fc", {27});
      break;
    case nets::Architecture::kSkipNetPlus: {
      const int ch[] = {64, 64, 64, 64, 128, 128, 256, 256, 256, 256, 256};
      const int sz[] = {128, 128, 64, 64, 32, 32, 16, 16, 8, 8, 4};
      for (int i = 0; i < 11; ++i) add("enc.l" + std::to_string(i + 1), {ch[i], sz[i], sz[i]});
      for (const char* b : {"normal", "albedo"}) {
        const std::string p = std::string(b) + ".dec.";
        add(p + "c1", {256, 4, 4});
        add(p + "cd1", {256, 8, 8});
        add(p + "cd2", {256, 16, 16});
        add(p + "cd3", {256, 32, 32});
        add(p + "cd4", {128, 64, 64});
        add(p + "cd5", {64, 128, 128});
        add(p + "out", {3, 128, 128});
      }
      add("light.pool", {256});
      add("light.fc", {27});
      break;
    }
  }
  return e;
}

Outcome architecture_fidelity() {
  std::size_t checked = 0;
  std::vector<std::string> problems;
  for (auto arch : {nets::Architecture::kSfsNet, nets::Architecture::kSkipNet,
                    nets::Architecture::kSkipNetPlus}) {
    auto model = nets::build_model(arch, {128, 1.0, 5, 1});
    ad::Tensor<float> images({1, 3, 128, 128}, 0.5f);
    nets::ShapeAudit executed;
    {
      ad::NoGradScope no_grad;
      model->forward(images, ad::NormMode::kEval, &executed);
    }
    const Expected want = expected_shapes(arch);
    if (executed != model->declared_shapes(1)) {
      problems.push_back(nets::to_string(arch) + ": executed shapes differ from declared");
    }
    if (executed.size() != want.size()) {
      problems.push_back(nets::to_string(arch) + ": " + std::to_string(executed.size()) +
                         " audited layers, expected " + std::to_string(want.size()));
    }
    for (std::size_t i = 0; i < std::min(executed.size(), want.size()); ++i) {
      ++checked;
      if (executed[i].layer != want[i].first || executed[i].shape != want[i].second) {
        problems.push_back(nets::to_string(arch) + ": " + executed[i].layer + " " +
                           ad::shape_str(executed[i].shape) + ", expected " + want[i].first + " " +
                           ad::shape_str(want[i].second));
      }
    }
  }
  std::string detail = std::to_string(checked) + " layer shapes checked at 128 px / width 1.0";
  if (!problems.empty()) detail += "; " + problems.front();
  return {problems.empty(), detail};
}

Outcome metric_sanity() {
  const auto [same_p, same_g] = fixture::rotated_fields(64, 64, 0.0, 11);
  const NormalErrorStats id = angular_error_stats(same_g, same_g, Mask::full(64, 64));
  const auto [rot_p, rot_g] = fixture::rotated_fields(64, 64, 25.0, 12);
  const NormalErrorStats r25 = angular_error_stats(rot_p, rot_g, Mask::full(64, 64));

  ColorMap image(32, 32, ColorRole::kImage), shifted(32, 32, ColorRole::kImage);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<float> u(0.0f, 0.8f);
  for (std::size_t i = 0; i < image.values().size(); ++i) {
    image.values()[i] = u(rng);
    shifted.values()[i] = image.values()[i] + 0.1f;
  }
  const ReconErrorStats rec = recon_error_stats(image, shifted, Mask::full(32, 32));

  const bool identical = id.mean_deg == 0.0 && id.pct_under_20 == 100.0 &&
                         id.pct_under_25 == 100.0 && id.pct_under_30 == 100.0;
  // Normals are stored in float, so the constructed 25 degrees carries
  // float rounding in the mean.
  const bool rotated = std::fabs(r25.mean_deg - 25.0) < 1e-4 && r25.pct_under_20 == 0.0 &&
                       r25.pct_under_25 == 0.0 && r25.pct_under_30 == 100.0;
  const bool offset = std::fabs(rec.mae - 25.5) < 1e-4 && std::fabs(rec.rmse - 25.5) < 1e-4;
  return {identical && rotated && offset,
          "identical (" + fmt("%.3g", id.mean_deg) + ", " + fmt("%.0f", id.pct_under_20) + ", " +
              fmt("%.0f", id.pct_under_25) + ", " + fmt("%.0f", id.pct_under_30) + "), rotated (" +
              fmt("%.6f", r25.mean_deg) + ", " + fmt("%.0f", r25.pct_under_20) + ", " +
              fmt("%.0f", r25.pct_under_25) + ", " + fmt("%.0f", r25.pct_under_30) + "), offset MAE " +
              fmt("%.5f", rec.mae) + " RMSE " + fmt("%.5f", rec.rmse)};
}

// ---------------------------------------------------------------- trainability

Outcome trainability(nets::Architecture arch) {
  const auto one = datagen::make_dataset(1, 3, datagen::Family::kSynthetic);
  auto model = nets::build_model(arch, {64, 0.5, 5, 1});
  trainer::TrainConfig tc;
  tc.batch_size = 1;
  tc.steps = 2000;
  const auto r = trainer::train_stage_a(*model, one, tc);
  long long first = -1;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < r.step_losses.size(); ++i) {
    best = std::min(best, r.step_losses[i].total);
    if (first < 0 && r.step_losses[i].total < 0.01) first = static_cast<long long>(i) + 1;
  }
  return {first > 0 && first <= 2000,
          first > 0 ? "total loss below 0.01 at step " + std::to_string(first) + ", best " + fmt("%.5f", best)
                    : "never below 0.01 in 2000 steps, best " + fmt("%.5f", best)};
}

// ---------------------------------------------------------------- ordering

void ordering(long long stage_a_steps, long long stage_c_steps) {
  trainer::ParadigmConfig pc = trainer::default_paradigm_config();
  pc.stage_a.steps = stage_a_steps;
  pc.stage_c.steps = stage_c_steps;
  pc.stage_a.log_every = pc.stage_c.log_every = 250;
  const auto t0 = Clock::now();
  pc.log = [&](const std::string& line) {
    std::fprintf(stderr, "[%8.1f s] %s\n", seconds_since(t0), line.c_str());
  };
  trainer::ParadigmRunner runner(pc);
  std::printf("# ordering: 2000 synthetic + 2000 pseudo-real at 64 px, width 0.5, seed %llu, "
              "stage A %lld steps, stage C %lld steps\n",
              static_cast<unsigned long long>(pc.seed), stage_a_steps, stage_c_steps);

  std::map<trainer::Paradigm, ParadigmRow> rows;
  ReconErrorStats residual;
  criterion("sfs-supervision-ordering", 2.0 * 3600, [&]() -> Outcome {
    residual = runner.pseudo_label_residual();
    rows[trainer::Paradigm::kSfsNetSyn] = runner.run(trainer::Paradigm::kSfsNetSyn);
    rows[trainer::Paradigm::kSfsNetFull] = runner.run(trainer::Paradigm::kSfsNetFull);
    const double full = rows[trainer::Paradigm::kSfsNetFull].recon.mae;
    const double syn = rows[trainer::Paradigm::kSfsNetSyn].recon.mae;
    const bool ok = full <= 0.9 * residual.mae && full <= 0.9 * syn;
    return {ok, "held-out MAE sfsnet-full " + fmt("%.3f", full) + ", pseudo-label residual " +
                    fmt("%.3f", residual.mae) + " (" + fmt("%+.1f", 100.0 * (full / residual.mae - 1.0)) +
                    "%), sfsnet-syn " + fmt("%.3f", syn) + " (" + fmt("%+.1f", 100.0 * (full / syn - 1.0)) +
                    "%); need <= -10%"};
  });

  // The lighting budget covers both trainings, including the shared stage A.
  criterion("lighting-architecture-ordering", 2.5 * 3600 - seconds_since(t0), [&]() -> Outcome {
    const LightClassReport ideal = trainer::eval_light_classification_ideal(runner.benchmark());
    if (rows.count(trainer::Paradigm::kSfsNetFull) == 0) {
      rows[trainer::Paradigm::kSfsNetFull] = runner.run(trainer::Paradigm::kSfsNetFull);
    }
    rows[trainer::Paradigm::kSkipNetPlusFull] = runner.run(trainer::Paradigm::kSkipNetPlusFull);
    const double sfs = rows[trainer::Paradigm::kSfsNetFull].light.top1;
    const double skip = rows[trainer::Paradigm::kSkipNetPlusFull].light.top1;
    return {sfs >= skip && ideal.top1 == 100.0,
            "top-1 sfsnet-full " + fmt("%.2f", sfs) + "%, skipnet-plus-full " + fmt("%.2f", skip) +
                "%, ideal estimator " + fmt("%.2f", ideal.top1) + "% (19 lights x 40 shapes)"};
  });

  std::vector<ParadigmRow> table;
  for (const auto& [p, row] : rows) table.push_back(row);
  std::printf("%s", format_paradigm_table(table).c_str());
}

// ---------------------------------------------------------------- cli

int run_in(const fs::path& dir, const std::vector<std::string>& args) {
  std::string cmd = "cd '" + dir.string() + "' && SFSKIT_THREADS=0 '" + std::string(SFSKIT_CLI_PATH) + "'";
  for (const auto& a : args) cmd += " '" + a + "'";
  cmd += " >>stdout.txt 2>>stderr.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::vector<std::string>> cli_pipeline() {
  const std::vector<std::string> tiny = {
      "--set", "data.n_synthetic=8", "--set", "data.n_pseudo_real=6", "--set", "data.n_heldout=3",
      "--set", "data.size=32", "--set", "net.width_scale=0.125", "--set", "net.n_resblocks=1",
      "--set", "stage_a.steps=3", "--set", "stage_a.batch_size=2", "--set", "stage_c.steps=3",
      "--set", "stage_c.batch_size=2", "--set", "benchmark.subjects=2", "--set",
      "benchmark.lights=4"};
  std::vector<std::string> train = {"train", "--paradigm", "all", "--out", "run"};
  train.insert(train.end(), tiny.begin(), tiny.end());
  return {
      {"gen-data", "--n", "3", "--seed", "4", "--size", "32", "--out", "syn"},
      {"gen-data", "--n", "3", "--seed", "5", "--size", "32", "--family", "pseudo-real", "--out", "real"},
      train,
      {"pseudo-label", "--model", "run/models/skipnet-stage-a.model", "--data", "real", "--out", "labelled"},
      {"decompose", "--model", "run/models/sfsnet-full.model", "--image", "real/00000.image.fmap",
       "--mask", "real/00000.mask.fmap", "--out", "dec"},
      {"decompose", "--model", "run/models/skipnet-plus-full.model", "--image", "real/00001.image.fmap",
       "--out", "dec2"},
      {"relight", "--decomp-dir", "dec", "--light-dir", "0.3,0.2,1", "--out", "relit"},
      {"transfer-light", "--source-dir", "dec2", "--target-dir", "dec", "--out", "transfer"},
      {"eval", "--task", "normals", "--pred", "dec", "--gt", "real/00000.normal.fmap", "--out", "ev_n"},
      {"eval", "--task", "recon", "--pred", "dec", "--gt", "real/00000.image.fmap", "--out", "ev_r"},
      {"gradcheck", "--seeds", "1", "--out", "gc"},
  };
}

Outcome cli_reproducibility() {
  testing::TempDir root("acceptance_cli");
  const auto steps = cli_pipeline();
  for (const char* run : {"a", "b"}) {
    fs::create_directories(root / run);
    for (const auto& args : steps) {
      const int code = run_in(root / run, args);
      if (code != 0) {
        return {false, "`sfskit " + args.front() + "` exited with " + std::to_string(code) + " in run " + run};
      }
    }
  }
  std::size_t compared = 0, fmaps = 0;
  std::vector<std::string> differ;
  const fs::path a = root / "a";
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    // Wall-clock timings only.
    if (rel.filename() == "train.log" || rel.filename() == "stderr.txt") continue;
    const fs::path other = root / "b" / rel;
    std::ifstream fa(e.path(), std::ios::binary), fb(other, std::ios::binary);
    const std::string ba((std::istreambuf_iterator<char>(fa)), {});
    const std::string bb((std::istreambuf_iterator<char>(fb)), {});
    ++compared;
    fmaps += rel.extension() == ".fmap";
    if (!fs::exists(other) || ba != bb) differ.push_back(rel.string());
  }
  std::string detail = std::to_string(steps.size()) + " commands twice with SFSKIT_THREADS=0; " +
                       std::to_string(compared) + " files compared (" + std::to_string(fmaps) +
                       " FMAP), " + std::to_string(differ.size()) + " differ";
  if (!differ.empty()) detail += ", first " + differ.front();
  return {differ.empty() && fmaps > 0, detail};
}

}  // namespace
}  // namespace sfskit

int main(int argc, char** argv) {
  CLI::App app{"sfskit acceptance suite"};
  std::string group = "fast";
  long long stage_a_steps = 1000, stage_c_steps = 1000;
  app.add_option("--group", group, "fast, trainability, ordering, cli or all")->capture_default_str();
  app.add_option("--stage-a-steps", stage_a_steps, "Stage A steps for the ordering runs")->capture_default_str();
  app.add_option("--stage-c-steps", stage_c_steps, "Stage C steps for the ordering runs")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  using namespace sfskit;
  const bool all = group == "all";
  bool known = all;
  if (all || group == "fast") {
    known = true;
    criterion("sh-correctness", 1, sh_correctness);
    criterion("rendering-identity", 10, rendering_identity);
    criterion("lighting-solve", 30, lighting_solve);
    criterion("autodiff", 300, autodiff);
    criterion("architecture-fidelity", 60, architecture_fidelity);
    criterion("metric-sanity", 1, metric_sanity);
  }
  if (all || group == "trainability") {
    known = true;
    const auto t0 = Clock::now();
    for (auto arch : {nets::Architecture::kSfsNet, nets::Architecture::kSkipNet,
                      nets::Architecture::kSkipNetPlus}) {
      const double left = 1200.0 - seconds_since(t0);
      criterion("trainability-" + nets::to_string(arch), left, [arch] { return trainability(arch); });
    }
  }
  if (all || group == "ordering") {
    known = true;
    ordering(stage_a_steps, stage_c_steps);
  }
  if (all || group == "cli") {
    known = true;
    criterion("pipeline-reproducibility", 600, cli_reproducibility);
  }
  if (!known) {
    std::fprintf(stderr, "unknown group '%s'\n", group.c_str());
    return 2;
  }
  return g_failures == 0 ? 0 : 1;
}
