/*
 * Copyright 2026 The mddpm Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mddpm {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when operand shapes are incompatible. The message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

struct TensorData {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;  // empty until the first accumulation
  bool requires_grad = false;

  float* grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0f);
    return grad.data();
  }
};

}  // namespace detail

/// Dense row-major f32 array with an optional gradient buffer.
///
/// A Tensor is a shared handle: copies alias the same storage, which is what
/// lets parameters collect gradients through the tape. Use clone() for a deep
/// copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor scalar(float v) { return Tensor(Shape{1}, v); }

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  std::size_t ndim() const { return d_->shape.size(); }
  std::size_t dim(std::size_t i) const { return d_->shape.at(i); }
  std::size_t numel() const { return d_->value.size(); }

  std::span<float> values() { return d_->value; }
  std::span<const float> values() const { return d_->value; }
  float* data() { return d_->value.data(); }
  const float* data() const { return d_->value.data(); }
  float& operator[](std::size_t i) { return d_->value[i]; }
  float operator[](std::size_t i) const { return d_->value[i]; }
  float item() const;

  bool requires_grad() const { return d_ && d_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);
  bool has_grad() const { return d_ && !d_->grad.empty(); }
  /// Gradient view; allocates a zero buffer on first access.
  std::span<float> grad();
  std::span<const float> grad() const;
  void zero_grad();

  /// Deep copy of the values, detached from any recorded graph.
  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return d_ == other.d_; }

  const std::shared_ptr<detail::TensorData>& impl() const { return d_; }

 private:
  std::shared_ptr<detail::TensorData> d_;
};

bool all_finite(const Tensor& t);

/// Ordered record of differentiable operations.
///
/// Operations append their backward closures in execution order, which is a
/// topological order of the graph; backward() replays them in reverse so each
/// node runs exactly once after all of its consumers.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(BackwardFn fn) { entries_.push_back(std::move(fn)); }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every leaf with
  /// requires_grad. The tape is consumed.
  void backward(const Tensor& loss);

 private:
  std::vector<BackwardFn> entries_;
};

/// The tape operations record onto for the current thread, or nullptr.
Tape* active_tape();

/// Installs a tape as the thread's active tape for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Runs backward on the thread's active tape.
void backward(const Tensor& loss);

}  // namespace mddpm
