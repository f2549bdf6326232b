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

#include "mddpm/optim.hpp"

#include <cmath>
#include <utility>

namespace mddpm {

void adam_step(std::vector<NamedParam>& params, AdamState& state) {
  for (auto& p : params) {
    if (!p.value.has_grad()) continue;
    for (float g : std::as_const(p.value).grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  if (state.m.empty()) {
    for (auto& p : params) {
      state.m.emplace_back(p.value.numel(), 0.0f);
      state.v.emplace_back(p.value.numel(), 0.0f);
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("Adam state holds " + std::to_string(state.m.size()) +
                                " moment buffers for " + std::to_string(params.size()) +
                                " parameters");
  }
  ++state.step;
  const auto& o = state.options;
  const double bc1 = 1.0 - std::pow(static_cast<double>(o.beta1), static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(static_cast<double>(o.beta2), static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& w = params[k].value;
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != w.numel()) {
      throw ShapeError("Adam moment buffer size " + std::to_string(m.size()) +
                       " does not match parameter '" + params[k].name + "' " +
                       shape_str(w.shape()));
    }
    const bool has = w.has_grad();
    const std::span<const float> grad = has ? std::as_const(w).grad() : std::span<const float>{};
    for (std::size_t i = 0; i < w.numel(); ++i) {
      const float g = has ? grad[i] : 0.0f;
      m[i] = o.beta1 * m[i] + (1.0f - o.beta1) * g;
      v[i] = o.beta2 * v[i] + (1.0f - o.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= static_cast<float>(o.lr * mhat / (std::sqrt(vhat) + o.eps));
    }
  }
}

void zero_grads(std::vector<NamedParam>& params) {
  for (auto& p : params) p.value.zero_grad();
}

}  // namespace mddpm
