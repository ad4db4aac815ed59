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

// Dense tensors and the reverse-mode tape.
//
// A Tensor is a shared handle: copies alias the same storage. Operations in
// ops.hpp record a backward closure on the thread's active Tape whenever one
// is installed (see TapeScope) and at least one input requires a gradient.
// Tape::backward runs the closures in exact reverse execution order and every
// closure accumulates (+=) into its inputs' gradients.

#ifndef SFSKIT_AD_TENSOR_HPP_
#define SFSKIT_AD_TENSOR_HPP_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sfskit::ad {

using Shape = std::vector<int>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something accumulates into it
  bool requires_grad = false;
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  bool defined() const { return s_ != nullptr; }
  const Shape& shape() const { return s_->shape; }
  int rank() const { return static_cast<int>(s_->shape.size()); }
  int dim(int i) const { return s_->shape[static_cast<std::size_t>(i)]; }
  std::size_t numel() const { return s_->data.size(); }

  std::span<T> data() { return s_->data; }
  std::span<const T> data() const { return s_->data; }
  T* ptr() { return s_->data.data(); }
  const T* ptr() const { return s_->data.data(); }
  T item() const;

  bool requires_grad() const { return s_ != nullptr && s_->requires_grad; }
  void set_requires_grad(bool v) { s_->requires_grad = v; }

  bool has_grad() const { return s_ != nullptr && !s_->grad.empty(); }
  std::span<const T> grad() const { return s_->grad; }
  // Gradient buffer, zero-filled on first access.
  std::span<T> grad_mut() const;
  void zero_grad() const { s_->grad.clear(); }

  // New storage holding a copy of the values, detached from any graph.
  Tensor detach() const;

  bool same_storage(const Tensor& o) const { return s_ == o.s_; }

 private:
  std::shared_ptr<TensorStorage<T>> s_;
};

// Ordered record of backward closures for one forward pass.
class Tape {
 public:
  void record(std::function<void()> backward_fn);
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and runs the recorded closures newest first.
  // The tape is cleared afterwards.
  template <typename T>
  void backward(Tensor<T>& loss);

 private:
  std::vector<std::function<void()>> nodes_;
};

// The thread's active tape, or nullptr when gradients are not being recorded.
Tape* active_tape();

// Installs a tape as the active one for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Disables recording for the current thread.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

template <typename T>
void backward(Tensor<T>& loss, Tape& tape) {
  tape.backward(loss);
}

}  // namespace sfskit::ad

#endif  // SFSKIT_AD_TENSOR_HPP_
