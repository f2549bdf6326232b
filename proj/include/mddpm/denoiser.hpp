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
#include <memory>
#include <span>
#include <vector>

#include "mddpm/nn.hpp"

namespace mddpm {

struct DenoiserConfig {
  std::size_t channels = 1;
  std::size_t base_width = 16;
  std::size_t depth = 2;
  std::size_t time_dim = 32;
};

/// Anything that maps a noised batch z_t [N,C,H,W] and its timesteps to an
/// estimate of the clean image z'_0 of the same shape.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Tensor forward(const Tensor& z_t, std::span<const int> t) = 0;
};

/// Sinusoidal embedding of integer timesteps, [N, dim].
Tensor timestep_embedding(std::span<const int> t, std::size_t dim);

/// Small U-Net predicting z'_0 directly.
///
/// Each resolution level holds one residual block (GroupNorm, SiLU, 3x3 conv,
/// twice) with the projected time embedding added per channel right after the
/// second GroupNorm. Downsampling is 2x2 average pooling; upsampling is nearest
/// neighbour followed by the block's convolution, with encoder features joined
/// by channel concatenation. The output head is zero-initialized, so an untrained
/// network predicts an all-zero image.
class UNet final : public Denoiser {
 public:
  /// Throws std::invalid_argument if height/width are not divisible by
  /// 2^depth.
  UNet(const DenoiserConfig& cfg, std::uint64_t seed, std::size_t height, std::size_t width);
  ~UNet() override;
  UNet(UNet&&) noexcept;
  UNet& operator=(UNet&&) noexcept;

  Tensor forward(const Tensor& z_t, std::span<const int> t) override;

  const DenoiserConfig& config() const { return cfg_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }

  /// Named parameter handles in a fixed order; they alias the network's
  /// storage.
  std::vector<NamedParam>& parameters() { return params_; }
  const std::vector<NamedParam>& parameters() const { return params_; }
  std::size_t parameter_count() const;

 private:
  struct Layers;
  DenoiserConfig cfg_;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::unique_ptr<Layers> layers_;
  std::vector<NamedParam> params_;
};

}  // namespace mddpm
