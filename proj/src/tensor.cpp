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

#include "mddpm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mddpm {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, float fill) : d_(std::make_shared<detail::TensorData>()) {
  d_->value.assign(shape_numel(shape), fill);
  d_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : d_(std::make_shared<detail::TensorData>()) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  d_->shape = std::move(shape);
  d_->value = std::move(values);
}

float Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return d_->value[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  d_->requires_grad = on;
  return *this;
}

std::span<float> Tensor::grad() {
  d_->grad_buffer();
  return d_->grad;
}

std::span<const float> Tensor::grad() const {
  d_->grad_buffer();
  return d_->grad;
}

void Tensor::zero_grad() {
  if (d_ && !d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0f);
}

Tensor Tensor::clone() const {
  return Tensor(d_->shape, d_->value);
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(),
                     [](float v) { return std::isfinite(v); });
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward() requires a scalar loss, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw std::logic_error("backward() on a loss that does not require grad");
  }
  loss.impl()->grad_buffer()[0] = 1.0f;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  entries_.clear();
}

void backward(const Tensor& loss) {
  Tape* tape = active_tape();
  if (tape == nullptr) throw std::logic_error("backward() without an active tape");
  tape->backward(loss);
}

}  // namespace mddpm
