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

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mddpm/tensor.hpp"

namespace mddpm {

struct NamedParam {
  std::string name;
  Tensor value;
};

/// Raised when an optimizer sees a non-finite gradient.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamOptions {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
};

/// One Adam update over `params` using their accumulated gradients. A
/// parameter without a gradient buffer is treated as having a zero gradient.
/// Throws NumericError naming the first parameter with a non-finite gradient;
/// nothing is updated in that case.
void adam_step(std::vector<NamedParam>& params, AdamState& state);

void zero_grads(std::vector<NamedParam>& params);

}  // namespace mddpm
