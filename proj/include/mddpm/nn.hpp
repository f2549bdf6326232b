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

#include <random>
#include <string>
#include <vector>

#include "mddpm/ops.hpp"
#include "mddpm/optim.hpp"

namespace mddpm::nn {

// Parameterized layers. Each layer registers its tensors under
// "<prefix>.<field>" so checkpoints can address them by name.

struct Conv2d {
  Tensor weight;  // [out, in, k, k]
  Tensor bias;    // [out]
  std::size_t padding = 0;

  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::mt19937_64& rng,
         bool zero_init = false);
  Tensor operator()(const Tensor& x) const { return ops::conv2d(x, weight, bias, 1, padding); }
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct GroupNorm {
  Tensor gamma;
  Tensor beta;
  std::size_t groups = 1;

  GroupNorm() = default;
  explicit GroupNorm(std::size_t channels);
  Tensor operator()(const Tensor& x) const { return ops::group_norm(x, gamma, beta, groups); }
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct Linear {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const { return ops::linear(x, weight, bias); }
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

/// min(8, channels), lowered to the nearest divisor of `channels`.
std::size_t norm_groups(std::size_t channels);

}  // namespace mddpm::nn
