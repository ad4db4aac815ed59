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

#include "sfskit/ad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "sfskit/parallel.hpp"
#include "sfskit/sh.hpp"

namespace sfskit::ad {

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

[[noreturn]] void fail(const std::string& op, const std::string& msg) {
  throw std::invalid_argument(op + ": " + msg);
}

template <typename T>
bool tracking(std::initializer_list<const Tensor<T>*> inputs) {
  if (active_tape() == nullptr) return false;
  for (const Tensor<T>* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
void require_rank(const Tensor<T>& x, int rank, const char* op) {
  if (!x.defined()) fail(op, "undefined input");
  if (x.rank() != rank) {
    fail(op, "expected rank " + std::to_string(rank) + ", got " + shape_str(x.shape()));
  }
}

// Sum in double with independent partial accumulators; deterministic for a
// given length.
template <typename T>
double sum_double(const T* p, std::size_t n) {
  double acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; ++l) acc[l] += p[i + l];
  }
  for (; i < n; ++i) acc[0] += p[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
double centered_sq_sum(const T* p, std::size_t n, double mean) {
  double acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; ++l) acc[l] += (p[i + l] - mean) * (p[i + l] - mean);
  }
  for (; i < n; ++i) acc[0] += (p[i] - mean) * (p[i] - mean);
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
double dot_double(const T* a, const T* b, std::size_t n) {
  double acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; ++l) acc[l] += static_cast<double>(a[i + l]) * b[i + l];
  }
  for (; i < n; ++i) acc[0] += static_cast<double>(a[i]) * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

// Output columns [lo, hi) whose tap j lands inside a row of width w.
std::pair<int, int> valid_columns(int w, int wo, int stride, int pad, int j) {
  const int lo = std::clamp(floor_div(pad - j + stride - 1, stride), 0, wo);
  const int hi = std::clamp(floor_div(w - 1 + pad - j, stride) + 1, lo, wo);
  return {lo, hi};
}

// cols[(c*k + i)*k + j][oy*wo + ox] = src[c][oy*s - p + i][ox*s - p + j]
template <typename T>
void im2col(const T* src, int channels, int h, int w, int k, int stride, int pad,
            int ho, int wo, T* cols) {
  for (int c = 0; c < channels; ++c) {
    const T* plane = src + static_cast<std::size_t>(c) * h * w;
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) {
        T* row = cols + (static_cast<std::size_t>(c) * k * k + i * k + j) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + i;
          T* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* srow = plane + static_cast<std::size_t>(iy) * w;
          // Valid output columns satisfy 0 <= ox * stride - pad + j < w.
          const auto [lo, hi] = valid_columns(w, wo, stride, pad, j);
          std::fill(dst, dst + lo, T(0));
          if (hi > lo) {
            const T* s0 = srow + lo * stride - pad + j;
            if (stride == 1) {
              std::copy(s0, s0 + (hi - lo), dst + lo);
            } else {
              for (int ox = lo; ox < hi; ++ox) dst[ox] = s0[(ox - lo) * stride];
            }
          }
          std::fill(dst + hi, dst + wo, T(0));
        }
      }
    }
  }
}

// Adjoint of im2col: scatters cols back onto dst (accumulating).
template <typename T>
void col2im(const T* cols, int channels, int h, int w, int k, int stride, int pad,
            int ho, int wo, T* dst) {
  for (int c = 0; c < channels; ++c) {
    T* plane = dst + static_cast<std::size_t>(c) * h * w;
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) {
        const T* row = cols + (static_cast<std::size_t>(c) * k * k + i * k + j) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + i;
          if (iy < 0 || iy >= h) continue;
          T* drow = plane + static_cast<std::size_t>(iy) * w;
          const T* srow = row + static_cast<std::size_t>(oy) * wo;
          const auto [lo, hi] = valid_columns(w, wo, stride, pad, j);
          T* d0 = drow + lo * stride - pad + j;
          if (stride == 1) {
            for (int ox = lo; ox < hi; ++ox) d0[ox - lo] += srow[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) d0[(ox - lo) * stride] += srow[ox];
          }
        }
      }
    }
  }
}

void check_kernel(int k, int stride, const char* op) {
  if (k != 1 && k != 3 && k != 4 && k != 7) {
    fail(op, "kernel size " + std::to_string(k) + " not in {1,3,4,7}");
  }
  if (stride != 1 && stride != 2) fail(op, "stride must be 1 or 2");
  if (k == 4 && stride != 2) fail(op, "4x4 kernels are only used with stride 2");
}

}  // namespace

int conv_padding(int kernel, int stride) {
  (void)stride;
  return kernel == 4 ? 1 : (kernel - 1) / 2;
}

int conv_output_extent(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride) {
  require_rank(x, 4, "conv2d");
  require_rank(weight, 4, "conv2d");
  const int batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != cin) {
    fail("conv2d", "input has " + std::to_string(cin) + " channels, weight expects " +
                       std::to_string(weight.dim(1)));
  }
  if (weight.dim(3) != k) fail("conv2d", "non-square kernel");
  check_kernel(k, stride, "conv2d");
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    fail("conv2d", "bias shape " + shape_str(bias.shape()));
  }
  const int pad = conv_padding(k, stride);
  const int ho = conv_output_extent(h, k, stride, pad);
  const int wo = conv_output_extent(w, k, stride, pad);
  if (ho <= 0 || wo <= 0) fail("conv2d", "input too small for kernel");

  const bool direct = (k == 1 && stride == 1);
  const int ckk = cin * k * k;
  const std::size_t in_sz = static_cast<std::size_t>(cin) * h * w;
  const std::size_t out_sz = static_cast<std::size_t>(cout) * ho * wo;
  const std::size_t hw = static_cast<std::size_t>(ho) * wo;

  Tensor<T> out({batch, cout, ho, wo});
  {
    const T* xp = x.ptr();
    const T* wp = weight.ptr();
    T* op = out.ptr();
    const T* bp = bias.defined() ? bias.ptr() : nullptr;
    parallel_for(static_cast<std::size_t>(batch), [&](std::size_t b) {
      std::vector<T> cols;
      const T* colp = xp + b * in_sz;
      if (!direct) {
        cols.resize(static_cast<std::size_t>(ckk) * hw);
        im2col(xp + b * in_sz, cin, h, w, k, stride, pad, ho, wo, cols.data());
        colp = cols.data();
      }
      MapRM<T> o(op + b * out_sz, cout, static_cast<Eigen::Index>(hw));
      o.noalias() = CMapRM<T>(wp, cout, ckk) * CMapRM<T>(colp, ckk, static_cast<Eigen::Index>(hw));
      if (bp != nullptr) {
        for (int c = 0; c < cout; ++c) o.row(c).array() += bp[c];
      }
    });
  }

  if (tracking<T>({&x, &weight, &bias})) {
    out.set_requires_grad(true);
    active_tape()->record([x, weight, bias, out, stride, pad, k, direct, batch, cin, h, w,
                           cout, ho, wo, ckk, in_sz, out_sz, hw]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      if (x.requires_grad()) {
        T* gx = x.grad_mut().data();
        const T* wp = weight.ptr();
        parallel_for(static_cast<std::size_t>(batch), [&](std::size_t b) {
          CMapRM<T> dy(gy + b * out_sz, cout, static_cast<Eigen::Index>(hw));
          if (direct) {
            MapRM<T>(gx + b * in_sz, cin, static_cast<Eigen::Index>(hw)).noalias() +=
                CMapRM<T>(wp, cout, ckk).transpose() * dy;
          } else {
            std::vector<T> dcols(static_cast<std::size_t>(ckk) * hw);
            MapRM<T>(dcols.data(), ckk, static_cast<Eigen::Index>(hw)).noalias() =
                CMapRM<T>(wp, cout, ckk).transpose() * dy;
            col2im(dcols.data(), cin, h, w, k, stride, pad, ho, wo, gx + b * in_sz);
          }
        });
      }
      if (weight.requires_grad()) {
        MapRM<T> dw(weight.grad_mut().data(), cout, ckk);
        std::vector<T> cols;
        for (int b = 0; b < batch; ++b) {
          const T* colp = x.ptr() + b * in_sz;
          if (!direct) {
            cols.resize(static_cast<std::size_t>(ckk) * hw);
            im2col(x.ptr() + b * in_sz, cin, h, w, k, stride, pad, ho, wo, cols.data());
            colp = cols.data();
          }
          dw.noalias() += CMapRM<T>(gy + b * out_sz, cout, static_cast<Eigen::Index>(hw)) *
                          CMapRM<T>(colp, ckk, static_cast<Eigen::Index>(hw)).transpose();
        }
      }
      if (bias.defined() && bias.requires_grad()) {
        T* gb = bias.grad_mut().data();
        for (int b = 0; b < batch; ++b) {
          for (int c = 0; c < cout; ++c) {
            const T* row = gy + b * out_sz + static_cast<std::size_t>(c) * hw;
            T acc = 0;
            for (std::size_t i = 0; i < hw; ++i) acc += row[i];
            gb[c] += acc;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(x, 4, "conv_transpose2d");
  require_rank(weight, 4, "conv_transpose2d");
  const int batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int cout = weight.dim(1), k = weight.dim(2);
  if (weight.dim(0) != cin) fail("conv_transpose2d", "weight/input channel mismatch");
  if (k != 4 || weight.dim(3) != 4) fail("conv_transpose2d", "only 4x4 kernels are supported");
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    fail("conv_transpose2d", "bias shape " + shape_str(bias.shape()));
  }
  constexpr int stride = 2, pad = 1;
  const int ho = 2 * h, wo = 2 * w;
  const int ckk = cout * k * k;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const std::size_t in_sz = static_cast<std::size_t>(cin) * hw;
  const std::size_t out_sz = static_cast<std::size_t>(cout) * ho * wo;

  Tensor<T> out({batch, cout, ho, wo});
  {
    const T* xp = x.ptr();
    const T* wp = weight.ptr();
    T* op = out.ptr();
    parallel_for(static_cast<std::size_t>(batch), [&](std::size_t b) {
      std::vector<T> cols(static_cast<std::size_t>(ckk) * hw);
      MapRM<T>(cols.data(), ckk, static_cast<Eigen::Index>(hw)).noalias() =
          CMapRM<T>(wp, cin, ckk).transpose() *
          CMapRM<T>(xp + b * in_sz, cin, static_cast<Eigen::Index>(hw));
      col2im(cols.data(), cout, ho, wo, k, stride, pad, h, w, op + b * out_sz);
    });
    if (bias.defined()) {
      const std::size_t plane = static_cast<std::size_t>(ho) * wo;
      for (int b = 0; b < batch; ++b) {
        for (int c = 0; c < cout; ++c) {
          T* p = op + b * out_sz + c * plane;
          const T v = bias.ptr()[c];
          for (std::size_t i = 0; i < plane; ++i) p[i] += v;
        }
      }
    }
  }

  if (tracking<T>({&x, &weight, &bias})) {
    out.set_requires_grad(true);
    active_tape()->record([x, weight, bias, out, batch, cin, h, w, cout, ho, wo, ckk, hw,
                           in_sz, out_sz]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      const auto dy_cols = [&](std::size_t b, std::vector<T>& cols) {
        cols.resize(static_cast<std::size_t>(ckk) * hw);
        im2col(gy + b * out_sz, cout, ho, wo, 4, stride, pad, h, w, cols.data());
      };
      if (x.requires_grad()) {
        T* gx = x.grad_mut().data();
        const T* wp = weight.ptr();
        parallel_for(static_cast<std::size_t>(batch), [&](std::size_t b) {
          std::vector<T> cols;
          dy_cols(b, cols);
          MapRM<T>(gx + b * in_sz, cin, static_cast<Eigen::Index>(hw)).noalias() +=
              CMapRM<T>(wp, cin, ckk) * CMapRM<T>(cols.data(), ckk, static_cast<Eigen::Index>(hw));
        });
      }
      if (weight.requires_grad()) {
        MapRM<T> dw(weight.grad_mut().data(), cin, ckk);
        std::vector<T> cols;
        for (int b = 0; b < batch; ++b) {
          dy_cols(static_cast<std::size_t>(b), cols);
          dw.noalias() += CMapRM<T>(x.ptr() + b * in_sz, cin, static_cast<Eigen::Index>(hw)) *
                          CMapRM<T>(cols.data(), ckk, static_cast<Eigen::Index>(hw)).transpose();
        }
      }
      if (bias.defined() && bias.requires_grad()) {
        T* gb = bias.grad_mut().data();
        const std::size_t plane = static_cast<std::size_t>(ho) * wo;
        for (int b = 0; b < batch; ++b) {
          for (int c = 0; c < cout; ++c) {
            const T* p = gy + b * out_sz + c * plane;
            T acc = 0;
            for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            gb[c] += acc;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormStats<T>& stats, NormMode mode, double momentum, double eps) {
  if (!x.defined() || x.rank() < 2) fail("batch_norm", "expected rank >= 2 input");
  const int batch = x.dim(0), ch = x.dim(1);
  std::size_t inner = 1;
  for (int i = 2; i < x.rank(); ++i) inner *= static_cast<std::size_t>(x.dim(i));
  if (gamma.numel() != static_cast<std::size_t>(ch) || beta.numel() != static_cast<std::size_t>(ch) ||
      stats.mean.numel() != static_cast<std::size_t>(ch)) {
    fail("batch_norm", "parameter size does not match " + std::to_string(ch) + " channels");
  }
  const std::size_t count = static_cast<std::size_t>(batch) * inner;
  const bool train = mode == NormMode::kTrain;
  if (train && count < 2) fail("batch_norm", "training mode needs more than one value per channel");

  Tensor<T> out(x.shape());
  Tensor<T> xhat(x.shape());
  std::vector<T> inv_std(ch);
  const T* xp = x.ptr();
  for (int c = 0; c < ch; ++c) {
    double mean, var;
    if (train) {
      double s = 0.0;
      for (int b = 0; b < batch; ++b) {
        const T* p = xp + (static_cast<std::size_t>(b) * ch + c) * inner;
        s += sum_double(p, inner);
      }
      mean = s / count;
      double v = 0.0;
      for (int b = 0; b < batch; ++b) {
        const T* p = xp + (static_cast<std::size_t>(b) * ch + c) * inner;
        v += centered_sq_sum(p, inner, mean);
      }
      var = v / count;
      T& rm = stats.mean.data()[c];
      T& rv = stats.var.data()[c];
      rm = static_cast<T>((1.0 - momentum) * rm + momentum * mean);
      rv = static_cast<T>((1.0 - momentum) * rv + momentum * var * count / (count - 1));
    } else {
      mean = stats.mean.data()[c];
      var = stats.var.data()[c];
    }
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[c] = static_cast<T>(is);
    const T g = gamma.data()[c], bt = beta.data()[c];
    for (int b = 0; b < batch; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * ch + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const T nh = static_cast<T>((xp[off + i] - mean) * is);
        xhat.ptr()[off + i] = nh;
        out.ptr()[off + i] = g * nh + bt;
      }
    }
  }

  if (tracking<T>({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    active_tape()->record([x, gamma, beta, out, xhat, inv_std, batch, ch, inner, count,
                           train]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      const T* xh = xhat.ptr();
      for (int c = 0; c < ch; ++c) {
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (int b = 0; b < batch; ++b) {
          const std::size_t off = (static_cast<std::size_t>(b) * ch + c) * inner;
          sum_dy += sum_double(gy + off, inner);
          sum_dy_xh += dot_double(gy + off, xh + off, inner);
        }
        if (gamma.requires_grad()) gamma.grad_mut()[c] += static_cast<T>(sum_dy_xh);
        if (beta.requires_grad()) beta.grad_mut()[c] += static_cast<T>(sum_dy);
        if (x.requires_grad()) {
          T* gx = x.grad_mut().data();
          const double g = gamma.data()[c];
          const double is = inv_std[c];
          const double mdy = sum_dy / count, mdyx = sum_dy_xh / count;
          for (int b = 0; b < batch; ++b) {
            const std::size_t off = (static_cast<std::size_t>(b) * ch + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              const double d = train ? g * is * (gy[off + i] - mdy - xh[off + i] * mdyx)
                                     : g * is * gy[off + i];
              gx[off + i] += static_cast<T>(d);
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, double slope) {
  Tensor<T> out(x.shape());
  const T s = static_cast<T>(slope);
  const T* xp = x.ptr();
  T* op = out.ptr();
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) op[i] = xp[i] > T(0) ? xp[i] : s * xp[i];
  if (tracking<T>({&x})) {
    out.set_requires_grad(true);
    active_tape()->record([x, out, s, n]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      const T* xp = x.ptr();
      T* gx = x.grad_mut().data();
      for (std::size_t i = 0; i < n; ++i) gx[i] += xp[i] > T(0) ? gy[i] : s * gy[i];
    });
  }
  return out;
}

namespace {

struct UpsampleTap {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<UpsampleTap> upsample_taps(int in) {
  std::vector<UpsampleTap> taps(2 * static_cast<std::size_t>(in));
  for (int o = 0; o < 2 * in; ++o) {
    double src = (o + 0.5) / 2.0 - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_upsample2x(const Tensor<T>& x) {
  require_rank(x, 4, "bilinear_upsample2x");
  const int planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const int ho = 2 * h, wo = 2 * w;
  const auto ty = upsample_taps(h), tx = upsample_taps(w);
  Tensor<T> out({x.dim(0), x.dim(1), ho, wo});
  for (int p = 0; p < planes; ++p) {
    const T* src = x.ptr() + static_cast<std::size_t>(p) * h * w;
    T* dst = out.ptr() + static_cast<std::size_t>(p) * ho * wo;
    for (int oy = 0; oy < ho; ++oy) {
      const auto& a = ty[oy];
      for (int ox = 0; ox < wo; ++ox) {
        const auto& b = tx[ox];
        const double top = (1 - b.w1) * src[a.i0 * w + b.i0] + b.w1 * src[a.i0 * w + b.i1];
        const double bot = (1 - b.w1) * src[a.i1 * w + b.i0] + b.w1 * src[a.i1 * w + b.i1];
        dst[oy * wo + ox] = static_cast<T>((1 - a.w1) * top + a.w1 * bot);
      }
    }
  }
  if (tracking<T>({&x})) {
    out.set_requires_grad(true);
    active_tape()->record([x, out, planes, h, w, ho, wo, ty, tx]() mutable {
      if (!out.has_grad()) return;
      T* gx = x.grad_mut().data();
      const T* gy = out.grad().data();
      for (int p = 0; p < planes; ++p) {
        T* g = gx + static_cast<std::size_t>(p) * h * w;
        const T* d = gy + static_cast<std::size_t>(p) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const auto& a = ty[oy];
          for (int ox = 0; ox < wo; ++ox) {
            const auto& b = tx[ox];
            const double v = d[oy * wo + ox];
            g[a.i0 * w + b.i0] += static_cast<T>(v * (1 - a.w1) * (1 - b.w1));
            g[a.i0 * w + b.i1] += static_cast<T>(v * (1 - a.w1) * b.w1);
            g[a.i1 * w + b.i0] += static_cast<T>(v * a.w1 * (1 - b.w1));
            g[a.i1 * w + b.i1] += static_cast<T>(v * a.w1 * b.w1);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank(x, 4, "global_avg_pool");
  const int b = x.dim(0), c = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor<T> out({b, c});
  for (std::size_t p = 0; p < static_cast<std::size_t>(b) * c; ++p) {
    double s = 0.0;
    const T* src = x.ptr() + p * plane;
    for (std::size_t i = 0; i < plane; ++i) s += src[i];
    out.ptr()[p] = static_cast<T>(s / plane);
  }
  if (tracking<T>({&x})) {
    out.set_requires_grad(true);
    active_tape()->record([x, out, plane]() mutable {
      if (!out.has_grad()) return;
      T* gx = x.grad_mut().data();
      const T* gy = out.grad().data();
      for (std::size_t p = 0; p < out.numel(); ++p) {
        const T g = static_cast<T>(gy[p] / static_cast<double>(plane));
        for (std::size_t i = 0; i < plane; ++i) gx[p * plane + i] += g;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(x, 2, "fully_connected");
  require_rank(weight, 2, "fully_connected");
  const int batch = x.dim(0), in = x.dim(1), outf = weight.dim(0);
  if (weight.dim(1) != in) {
    fail("fully_connected", "input width " + std::to_string(in) + " vs weight " +
                                shape_str(weight.shape()));
  }
  if (bias.defined() && bias.numel() != static_cast<std::size_t>(outf)) {
    fail("fully_connected", "bias shape " + shape_str(bias.shape()));
  }
  Tensor<T> out({batch, outf});
  MapRM<T> y(out.ptr(), batch, outf);
  y.noalias() = CMapRM<T>(x.ptr(), batch, in) * CMapRM<T>(weight.ptr(), outf, in).transpose();
  if (bias.defined()) {
    for (int b = 0; b < batch; ++b) {
      for (int o = 0; o < outf; ++o) y(b, o) += bias.ptr()[o];
    }
  }
  if (tracking<T>({&x, &weight, &bias})) {
    out.set_requires_grad(true);
    active_tape()->record([x, weight, bias, out, batch, in, outf]() mutable {
      if (!out.has_grad()) return;
      CMapRM<T> dy(out.grad().data(), batch, outf);
      if (x.requires_grad()) {
        MapRM<T>(x.grad_mut().data(), batch, in).noalias() +=
            dy * CMapRM<T>(weight.ptr(), outf, in);
      }
      if (weight.requires_grad()) {
        MapRM<T>(weight.grad_mut().data(), outf, in).noalias() +=
            dy.transpose() * CMapRM<T>(x.ptr(), batch, in);
      }
      if (bias.defined() && bias.requires_grad()) {
        T* gb = bias.grad_mut().data();
        for (int b = 0; b < batch; ++b) {
          for (int o = 0; o < outf; ++o) gb[o] += dy(b, o);
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) fail("concat_channels", "no inputs");
  const Tensor<T>& first = xs.front();
  if (!first.defined() || first.rank() < 2) fail("concat_channels", "inputs need rank >= 2");
  const int batch = first.dim(0);
  std::size_t inner = 1;
  for (int i = 2; i < first.rank(); ++i) inner *= static_cast<std::size_t>(first.dim(i));
  int total = 0;
  for (const auto& t : xs) {
    if (t.rank() != first.rank() || t.dim(0) != batch) fail("concat_channels", "shape mismatch");
    for (int i = 2; i < first.rank(); ++i) {
      if (t.dim(i) != first.dim(i)) {
        fail("concat_channels", shape_str(t.shape()) + " vs " + shape_str(first.shape()));
      }
    }
    total += t.dim(1);
  }
  Shape shape = first.shape();
  shape[1] = total;
  Tensor<T> out(shape);
  const std::size_t out_item = static_cast<std::size_t>(total) * inner;
  std::size_t offset = 0;
  for (const auto& t : xs) {
    const std::size_t chunk = static_cast<std::size_t>(t.dim(1)) * inner;
    for (int b = 0; b < batch; ++b) {
      std::copy_n(t.ptr() + b * chunk, chunk, out.ptr() + b * out_item + offset);
    }
    offset += chunk;
  }
  bool track = false;
  for (const auto& t : xs) track = track || tracking<T>({&t});
  if (track) {
    out.set_requires_grad(true);
    active_tape()->record([xs, out, batch, inner, out_item]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      std::size_t offset = 0;
      for (auto& t : xs) {
        const std::size_t chunk = static_cast<std::size_t>(t.dim(1)) * inner;
        if (t.requires_grad()) {
          T* gx = t.grad_mut().data();
          for (int b = 0; b < batch; ++b) {
            const T* src = gy + b * out_item + offset;
            T* dst = gx + b * chunk;
            for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
          }
        }
        offset += chunk;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    fail("reshape", shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  Tensor<T> out(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (tracking<T>({&x})) {
    out.set_requires_grad(true);
    active_tape()->record([x, out]() mutable {
      if (!out.has_grad()) return;
      T* gx = x.grad_mut().data();
      const T* gy = out.grad().data();
      for (std::size_t i = 0; i < out.numel(); ++i) gx[i] += gy[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> tile_spatial(const Tensor<T>& x, int height, int width) {
  require_rank(x, 2, "tile_spatial");
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  Tensor<T> out({x.dim(0), x.dim(1), height, width});
  for (std::size_t p = 0; p < x.numel(); ++p) {
    std::fill_n(out.ptr() + p * plane, plane, x.ptr()[p]);
  }
  if (tracking<T>({&x})) {
    out.set_requires_grad(true);
    active_tape()->record([x, out, plane]() mutable {
      if (!out.has_grad()) return;
      T* gx = x.grad_mut().data();
      const T* gy = out.grad().data();
      for (std::size_t p = 0; p < x.numel(); ++p) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += gy[p * plane + i];
        gx[p] += static_cast<T>(s);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) fail("add", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.ptr()[i] = a.ptr()[i] + b.ptr()[i];
  if (tracking<T>({&a, &b})) {
    out.set_requires_grad(true);
    active_tape()->record([a, b, out, n]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      if (a.requires_grad()) {
        T* g = a.grad_mut().data();
        for (std::size_t i = 0; i < n; ++i) g[i] += gy[i];
      }
      if (b.requires_grad()) {
        T* g = b.grad_mut().data();
        for (std::size_t i = 0; i < n; ++i) g[i] += gy[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) fail("mul", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.ptr()[i] = a.ptr()[i] * b.ptr()[i];
  if (tracking<T>({&a, &b})) {
    out.set_requires_grad(true);
    active_tape()->record([a, b, out, n]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      if (a.requires_grad()) {
        T* g = a.grad_mut().data();
        for (std::size_t i = 0; i < n; ++i) g[i] += gy[i] * b.ptr()[i];
      }
      if (b.requires_grad()) {
        T* g = b.grad_mut().data();
        for (std::size_t i = 0; i < n; ++i) g[i] += gy[i] * a.ptr()[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double s) {
  Tensor<T> out(a.shape());
  const std::size_t n = a.numel();
  const T f = static_cast<T>(s);
  for (std::size_t i = 0; i < n; ++i) out.ptr()[i] = f * a.ptr()[i];
  if (tracking<T>({&a})) {
    out.set_requires_grad(true);
    active_tape()->record([a, out, f, n]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      T* g = a.grad_mut().data();
      for (std::size_t i = 0; i < n; ++i) g[i] += f * gy[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> weighted_sum(const std::vector<Tensor<T>>& terms, const std::vector<double>& weights) {
  if (terms.size() != weights.size()) fail("weighted_sum", "terms/weights length mismatch");
  double acc = 0.0;
  bool track = false;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    acc += weights[i] * terms[i].item();
    track = track || tracking<T>({&terms[i]});
  }
  Tensor<T> out(Shape{1}, static_cast<T>(acc));
  if (track) {
    out.set_requires_grad(true);
    active_tape()->record([terms, weights, out]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      for (std::size_t i = 0; i < terms.size(); ++i) {
        if (terms[i].requires_grad()) terms[i].grad_mut()[0] += static_cast<T>(g * weights[i]);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> normalize_channels(const Tensor<T>& x, double eps) {
  require_rank(x, 4, "normalize_channels");
  if (x.dim(1) != 3) fail("normalize_channels", "expected 3 channels");
  const int batch = x.dim(0);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor<T> out(x.shape());
  std::vector<T> inv(static_cast<std::size_t>(batch) * plane);
  for (int b = 0; b < batch; ++b) {
    const T* v = x.ptr() + static_cast<std::size_t>(b) * 3 * plane;
    T* o = out.ptr() + static_cast<std::size_t>(b) * 3 * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      const double n = std::sqrt(static_cast<double>(v[p]) * v[p] +
                                 static_cast<double>(v[plane + p]) * v[plane + p] +
                                 static_cast<double>(v[2 * plane + p]) * v[2 * plane + p]);
      const double d = std::max(n, eps);
      inv[b * plane + p] = static_cast<T>(n > eps ? 1.0 / n : -1.0 / eps);
      for (int c = 0; c < 3; ++c) o[c * plane + p] = static_cast<T>(v[c * plane + p] / d);
    }
  }
  if (tracking<T>({&x})) {
    out.set_requires_grad(true);
    // inv < 0 marks pixels clamped by eps (gradient is g / eps there).
    active_tape()->record([x, out, inv, batch, plane]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      T* gx = x.grad_mut().data();
      for (int b = 0; b < batch; ++b) {
        const std::size_t off = static_cast<std::size_t>(b) * 3 * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          const double iv = inv[b * plane + p];
          if (iv < 0) {
            for (int c = 0; c < 3; ++c) gx[off + c * plane + p] += static_cast<T>(-iv * gy[off + c * plane + p]);
            continue;
          }
          double ng = 0.0;
          for (int c = 0; c < 3; ++c) {
            ng += static_cast<double>(out.ptr()[off + c * plane + p]) * gy[off + c * plane + p];
          }
          for (int c = 0; c < 3; ++c) {
            const std::size_t i = off + c * plane + p;
            gx[i] += static_cast<T>(iv * (gy[i] - out.ptr()[i] * ng));
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sh_shading(const Tensor<T>& normals, const Tensor<T>& light) {
  require_rank(normals, 4, "sh_shading");
  require_rank(light, 2, "sh_shading");
  const int batch = normals.dim(0);
  if (normals.dim(1) != 3) fail("sh_shading", "normals need 3 channels");
  if (light.dim(0) != batch || light.dim(1) != kLightCoeffs) {
    fail("sh_shading", "light shape " + shape_str(light.shape()));
  }
  const std::size_t plane = static_cast<std::size_t>(normals.dim(2)) * normals.dim(3);
  Tensor<T> out(normals.shape());
  for (int b = 0; b < batch; ++b) {
    const T* n = normals.ptr() + static_cast<std::size_t>(b) * 3 * plane;
    const T* l = light.ptr() + static_cast<std::size_t>(b) * kLightCoeffs;
    T* o = out.ptr() + static_cast<std::size_t>(b) * 3 * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      const auto y = sh_basis_unchecked<double>(n[p], n[plane + p], n[2 * plane + p]);
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int k = 0; k < kShBasisSize; ++k) s += y[k] * l[c * kShBasisSize + k];
        o[c * plane + p] = static_cast<T>(s);
      }
    }
  }
  if (tracking<T>({&normals, &light})) {
    out.set_requires_grad(true);
    active_tape()->record([normals, light, out, batch, plane]() mutable {
      if (!out.has_grad()) return;
      const double c1 = sh_const::kY1, c20 = sh_const::kY20, c2 = sh_const::kY2;
      const T* gy = out.grad().data();
      T* gl = light.requires_grad() ? light.grad_mut().data() : nullptr;
      T* gn = normals.requires_grad() ? normals.grad_mut().data() : nullptr;
      for (int b = 0; b < batch; ++b) {
        const std::size_t off = static_cast<std::size_t>(b) * 3 * plane;
        const T* n = normals.ptr() + off;
        const T* l = light.ptr() + static_cast<std::size_t>(b) * kLightCoeffs;
        const T* g = gy + off;
        double dl[kLightCoeffs] = {};
        for (std::size_t p = 0; p < plane; ++p) {
          const double x = n[p], y = n[plane + p], z = n[2 * plane + p];
          const double gc[3] = {g[p], g[plane + p], g[2 * plane + p]};
          if (gl != nullptr) {
            const auto basis = sh_basis_unchecked<double>(x, y, z);
            for (int c = 0; c < 3; ++c) {
              for (int k = 0; k < kShBasisSize; ++k) dl[c * kShBasisSize + k] += gc[c] * basis[k];
            }
          }
          if (gn != nullptr) {
            // dY_k/d(x, y, z)
            const double d[kShBasisSize][3] = {{0, 0, 0},
                                               {0, 0, c1},
                                               {c1, 0, 0},
                                               {0, c1, 0},
                                               {0, 0, 6 * c20 * z},
                                               {c2 * z, 0, c2 * x},
                                               {0, c2 * z, c2 * y},
                                               {c2 * x, -c2 * y, 0},
                                               {c2 * y, c2 * x, 0}};
            double acc[3] = {0, 0, 0};
            for (int c = 0; c < 3; ++c) {
              if (gc[c] == 0.0) continue;
              for (int k = 1; k < kShBasisSize; ++k) {
                const double w = gc[c] * l[c * kShBasisSize + k];
                acc[0] += w * d[k][0];
                acc[1] += w * d[k][1];
                acc[2] += w * d[k][2];
              }
            }
            for (int a = 0; a < 3; ++a) gn[off + a * plane + p] += static_cast<T>(acc[a]);
          }
        }
        if (gl != nullptr) {
          for (int i = 0; i < kLightCoeffs; ++i) {
            gl[static_cast<std::size_t>(b) * kLightCoeffs + i] += static_cast<T>(dl[i]);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> masked_l1(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& mask) {
  if (x.shape() != y.shape()) fail("masked_l1", shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  const bool broadcast = mask.shape() != x.shape();
  if (broadcast) {
    if (x.rank() != 4 || mask.rank() != 4 || mask.dim(0) != x.dim(0) || mask.dim(1) != 1 ||
        mask.dim(2) != x.dim(2) || mask.dim(3) != x.dim(3)) {
      fail("masked_l1", "mask shape " + shape_str(mask.shape()) + " incompatible with " +
                            shape_str(x.shape()));
    }
  }
  const int batch = x.dim(0);
  const int ch = broadcast ? x.dim(1) : 1;
  const std::size_t inner = broadcast ? static_cast<std::size_t>(x.dim(2)) * x.dim(3)
                                      : x.numel() / static_cast<std::size_t>(batch);
  double msum = 0.0;
  for (std::size_t i = 0; i < mask.numel(); ++i) msum += mask.ptr()[i];
  const double denom = msum * ch;
  if (denom <= 0.0) fail("masked_l1", "empty mask");
  double acc = 0.0;
  for (int b = 0; b < batch; ++b) {
    const T* m = mask.ptr() + static_cast<std::size_t>(b) * inner;
    for (int c = 0; c < ch; ++c) {
      const std::size_t off = (static_cast<std::size_t>(b) * ch + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        if (m[i] != T(0)) acc += m[i] * std::abs(static_cast<double>(x.ptr()[off + i]) - y.ptr()[off + i]);
      }
    }
  }
  Tensor<T> out(Shape{1}, static_cast<T>(acc / denom));
  if (tracking<T>({&x, &y})) {
    out.set_requires_grad(true);
    active_tape()->record([x, y, mask, out, batch, ch, inner, denom]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0] / denom;
      T* gx = x.requires_grad() ? x.grad_mut().data() : nullptr;
      T* gyp = y.requires_grad() ? y.grad_mut().data() : nullptr;
      for (int b = 0; b < batch; ++b) {
        const T* m = mask.ptr() + static_cast<std::size_t>(b) * inner;
        for (int c = 0; c < ch; ++c) {
          const std::size_t off = (static_cast<std::size_t>(b) * ch + c) * inner;
          for (std::size_t i = 0; i < inner; ++i) {
            if (m[i] == T(0)) continue;
            const double d = static_cast<double>(x.ptr()[off + i]) - y.ptr()[off + i];
            const double s = d > 0 ? g * m[i] : (d < 0 ? -g * m[i] : 0.0);
            if (gx != nullptr) gx[off + i] += static_cast<T>(s);
            if (gyp != nullptr) gyp[off + i] -= static_cast<T>(s);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mse(const Tensor<T>& x, const Tensor<T>& y) {
  if (x.shape() != y.shape()) fail("mse", shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  const std::size_t n = x.numel();
  if (n == 0) fail("mse", "empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(x.ptr()[i]) - y.ptr()[i];
    acc += d * d;
  }
  Tensor<T> out(Shape{1}, static_cast<T>(acc / n));
  if (tracking<T>({&x, &y})) {
    out.set_requires_grad(true);
    active_tape()->record([x, y, out, n]() mutable {
      if (!out.has_grad()) return;
      const double g = 2.0 * out.grad()[0] / n;
      T* gx = x.requires_grad() ? x.grad_mut().data() : nullptr;
      T* gyp = y.requires_grad() ? y.grad_mut().data() : nullptr;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = g * (static_cast<double>(x.ptr()[i]) - y.ptr()[i]);
        if (gx != nullptr) gx[i] += static_cast<T>(d);
        if (gyp != nullptr) gyp[i] -= static_cast<T>(d);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> dot_const(const Tensor<T>& x, const std::vector<T>& w) {
  if (w.size() != x.numel()) fail("dot_const", "weight length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) acc += static_cast<double>(x.ptr()[i]) * w[i];
  Tensor<T> out(Shape{1}, static_cast<T>(acc));
  if (tracking<T>({&x})) {
    out.set_requires_grad(true);
    active_tape()->record([x, w, out]() mutable {
      if (!out.has_grad()) return;
      const T g = out.grad()[0];
      T* gx = x.grad_mut().data();
      for (std::size_t i = 0; i < w.size(); ++i) gx[i] += g * w[i];
    });
  }
  return out;
}

#define SFSKIT_INSTANTIATE_OPS(T)                                                         \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int);   \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&,                 \
                                      const Tensor<T>&);                                  \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                BatchNormStats<T>&, NormMode, double, double);            \
  template Tensor<T> leaky_relu(const Tensor<T>&, double);                                \
  template Tensor<T> bilinear_upsample2x(const Tensor<T>&);                               \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                   \
  template Tensor<T> fully_connected(const Tensor<T>&, const Tensor<T>&,                  \
                                     const Tensor<T>&);                                   \
  template Tensor<T> concat_channels(const std::vector<Tensor<T>>&);                      \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                    \
  template Tensor<T> tile_spatial(const Tensor<T>&, int, int);                            \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> scale(const Tensor<T>&, double);                                     \
  template Tensor<T> weighted_sum(const std::vector<Tensor<T>>&,                          \
                                  const std::vector<double>&);                            \
  template Tensor<T> normalize_channels(const Tensor<T>&, double);                        \
  template Tensor<T> sh_shading(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> masked_l1(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> dot_const(const Tensor<T>&, const std::vector<T>&);

SFSKIT_INSTANTIATE_OPS(float)
SFSKIT_INSTANTIATE_OPS(double)

#undef SFSKIT_INSTANTIATE_OPS

}  // namespace sfskit::ad
