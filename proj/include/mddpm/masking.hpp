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
#include <string>
#include <vector>

#include <json.hpp>

#include "mddpm/tensor.hpp"

namespace mddpm {

// Patch masking augmentations applied to healthy training images before they
// enter the forward diffusion process:
//   image patch masking      z0 * M
//   frequency patch masking  IDFT(M_f * DFT(z0))
//   frequency cutmix         z0 * M + fpm(z0) * (1 - M)

enum class MaskDomain { kPixel, kFrequency };

std::string to_string(MaskDomain d);
MaskDomain mask_domain_from_string(const std::string& s);

/// Axis-aligned rectangle; x runs along the width axis, y along the height
/// axis. In the frequency domain (y, x) address spectrum bin (x_freq, y_freq)
/// in ComplexSpectrum order.
struct PatchRegion {
  std::size_t x0 = 0;
  std::size_t y0 = 0;
  std::size_t w = 1;
  std::size_t h = 1;

  std::size_t area() const { return w * h; }
  bool contains(std::size_t y, std::size_t x) const {
    return y >= y0 && y < y0 + h && x >= x0 && x < x0 + w;
  }
  bool operator==(const PatchRegion&) const = default;
};

struct MaskConfig {
  double ratio_min = 0.10;
  double ratio_max = 0.90;
  std::size_t n_min = 1;
  std::size_t n_max = 8;
  std::size_t side_min = 2;
  std::size_t side_max = 0;  // 0 selects min(H, W) / 2
  std::size_t max_attempts = 100;
  bool mask_dc = false;  // frequency masks only
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on inconsistent bounds.
  void validate() const;
};

/// Regions plus the binary mask they induce: 0 on covered positions, 1
/// elsewhere, replicated over channels.
struct PatchMaskSet {
  std::vector<PatchRegion> regions;
  Tensor mask;  // [C,H,W]
  MaskDomain domain = MaskDomain::kPixel;
  std::uint64_t seed = 0;
  /// Fraction of eligible positions (foreground pixels or spectrum bins) that
  /// are masked.
  double masked_fraction = 0.0;
  /// Set when no sample within the attempt budget met the ratio bounds and
  /// the closest attempt was returned instead.
  bool ratio_warning = false;

  /// Rasterizes `regions`. Pixel masks are clipped to `foreground` ([H,W],
  /// nonzero = foreground; undefined = everything). Frequency masks are made
  /// conjugate-symmetric and keep the DC bin unless `mask_dc`.
  static PatchMaskSet from_regions(std::vector<PatchRegion> regions, MaskDomain domain,
                                   std::size_t channels, std::size_t height, std::size_t width,
                                   const Tensor& foreground = Tensor(), bool mask_dc = false);

  nlohmann::json to_json() const;
  /// Rebuilds the exact mask from a serialized record.
  static PatchMaskSet from_json(const nlohmann::json& j, std::size_t channels, std::size_t height,
                                std::size_t width, const Tensor& foreground = Tensor(),
                                bool mask_dc = false);
};

/// Samples pixel-domain patches restricted to `foreground` ([H,W]). The masked
/// foreground fraction lands in [ratio_min, ratio_max] unless ratio_warning
/// is set. Deterministic in `seed`. Throws std::invalid_argument on an empty
/// foreground.
PatchMaskSet sample_patch_mask(const MaskConfig& cfg, const Tensor& foreground,
                               std::size_t channels, std::uint64_t seed);

/// Samples spectrum patches over all H*W bins; the ratio bounds apply after
/// conjugate symmetrization.
PatchMaskSet sample_frequency_mask(const MaskConfig& cfg, std::size_t channels, std::size_t height,
                                   std::size_t width, std::uint64_t seed);

Tensor apply_ipm(const Tensor& z0, const PatchMaskSet& m);
Tensor apply_fpm(const Tensor& z0, const PatchMaskSet& m);
Tensor apply_fpm_cutmix(const Tensor& z0, const PatchMaskSet& m_pix, const PatchMaskSet& m_freq);

}  // namespace mddpm
