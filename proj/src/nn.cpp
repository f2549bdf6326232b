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

#include "mddpm/nn.hpp"

#include <cmath>

namespace mddpm::nn {

namespace {

// Kaiming fan-in normal initialization.
Tensor kaiming(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

Tensor param(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

}  // namespace

Conv2d::Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::mt19937_64& rng,
               bool zero_init)
    : padding(kernel / 2) {
  if (kernel % 2 == 0) throw std::invalid_argument("Conv2d kernel size must be odd");
  weight = zero_init ? Tensor(Shape{out, in, kernel, kernel})
                     : kaiming(Shape{out, in, kernel, kernel}, in * kernel * kernel, rng);
  weight.set_requires_grad(true);
  bias = param(Tensor(Shape{out}));
}

void Conv2d::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

std::size_t norm_groups(std::size_t channels) {
  std::size_t g = channels < 8 ? channels : 8;
  while (g > 1 && channels % g != 0) --g;
  return g == 0 ? 1 : g;
}

GroupNorm::GroupNorm(std::size_t channels)
    : gamma(param(Tensor(Shape{channels}, 1.0f))),
      beta(param(Tensor(Shape{channels}))),
      groups(norm_groups(channels)) {}

void GroupNorm::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

Linear::Linear(std::size_t in, std::size_t out, std::mt19937_64& rng)
    : weight(param(kaiming(Shape{out, in}, in, rng))), bias(param(Tensor(Shape{out}))) {}

void Linear::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

}  // namespace mddpm::nn
