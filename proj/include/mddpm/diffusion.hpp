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
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "mddpm/denoiser.hpp"
#include "mddpm/masking.hpp"
#include "mddpm/tensor.hpp"

namespace mddpm {

enum class ScheduleKind { kLinear, kCosine };
enum class NoiseKind { kGaussian, kSimplex };
enum class MaskingMode { kNone, kIpm, kFpm, kFpmCutmix };

std::string to_string(ScheduleKind k);
std::string to_string(NoiseKind k);
std::string to_string(MaskingMode m);
ScheduleKind schedule_kind_from_string(const std::string& s);
NoiseKind noise_kind_from_string(const std::string& s);
MaskingMode masking_mode_from_string(const std::string& s);

/// beta_1..beta_T and alpha_bar_t = prod_{s=1..t} (1 - beta_s). Timesteps are
/// 1-based throughout.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  /// Linear: beta interpolated from beta_start to beta_end. Cosine: the
  /// squared-cosine alpha_bar curve with offset 0.008, betas clamped to
  /// [1e-8, 0.999]. Throws std::invalid_argument on T == 0 or betas
  /// outside 0 < start <= end < 1.
  static NoiseSchedule build(ScheduleKind kind, std::size_t steps, double beta_start,
                             double beta_end);

  ScheduleKind kind() const { return kind_; }
  std::size_t steps() const { return betas_.size(); }
  double beta(std::size_t t) const { return betas_.at(t - 1); }
  double alpha_bar(std::size_t t) const { return alpha_bars_.at(t - 1); }
  double beta_start() const { return beta_start_; }
  double beta_end() const { return beta_end_; }

  /// "t,beta,alpha_bar" header plus one row per step.
  void write_csv(std::ostream& os) const;

 private:
  ScheduleKind kind_ = ScheduleKind::kLinear;
  double beta_start_ = 0.0;
  double beta_end_ = 0.0;
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

struct SimplexParams {
  std::size_t octaves = 6;
  double base_wavelength = 0.0;  // pixels; 0 selects width / 4
  double persistence = 0.8;
};

struct DiffusionConfig {
  NoiseSchedule schedule;
  std::size_t t_fix = 0;
  NoiseKind noise = NoiseKind::kSimplex;
  SimplexParams simplex;
  /// Independent noise draws averaged at inference; 1 = single draw.
  std::size_t inference_draws = 1;

  void validate() const;
};

struct NoiseField {
  Tensor values;
  NoiseKind kind = NoiseKind::kGaussian;
};

/// 2D simplex gradient noise over a seeded permutation table.
class SimplexNoise {
 public:
  explicit SimplexNoise(std::mt19937_64& rng);
  /// Single-octave value, within [-1, 1].
  double operator()(double x, double y) const;

 private:
  std::vector<int> perm_;  // 512 entries
};

/// Noise with the same shape as `shape`. Gaussian: i.i.d. N(0,1). Simplex:
/// multi-octave simplex noise per [H,W] plane, standardized to zero mean and
/// unit variance within each plane.
NoiseField sample_noise(const DiffusionConfig& cfg, const Shape& shape, std::mt19937_64& rng);

/// Multi-octave simplex field in [-1, 1] for one [H,W] plane, before
/// standardization.
std::vector<float> simplex_field(std::size_t height, std::size_t width, const SimplexParams& p,
                                 std::mt19937_64& rng);

/// z_t = sqrt(alpha_bar) z0 + sqrt(1 - alpha_bar) eps.
Tensor forward_diffuse(const Tensor& z0, double alpha_bar, const Tensor& eps);
/// Same, with alpha_bar taken from `schedule` at step t in [1, T].
Tensor forward_diffuse(const Tensor& z0, std::size_t t, const NoiseSchedule& schedule,
                       const NoiseField& noise);

/// Per-step trace, filled in when requested.
struct StepTrace {
  std::vector<int> timesteps;
  std::vector<PatchMaskSet> pixel_masks;
  std::vector<PatchMaskSet> frequency_masks;
  Tensor masked_input;  // z_M, [N,C,H,W]
};

/// Builds z_M for one [C,H,W] image according to `mode`. Draws nothing from
/// the generator for kNone; mask sampling otherwise derives from `mask_seed`.
Tensor mask_input(const Tensor& z0, const Tensor& foreground, MaskingMode mode,
                  const MaskConfig& mask_cfg, std::uint64_t mask_seed,
                  PatchMaskSet* pixel_mask = nullptr, PatchMaskSet* freq_mask = nullptr);

/// One training objective evaluation with gradients: mask each image, draw
/// t ~ U{1..T}, diffuse, denoise, and return mean |z0 - z'_0| measured against
/// the unmasked z0. `batch` is [N,C,H,W]; `foregrounds` holds N [H,W] masks.
/// Gradients are accumulated into the denoiser's parameters.
float training_step(const Tensor& batch, const std::vector<Tensor>& foregrounds,
                    MaskingMode mode, const MaskConfig& mask_cfg, Denoiser& denoiser,
                    const DiffusionConfig& cfg, std::mt19937_64& rng, StepTrace* trace = nullptr);

/// z'_0 estimated from a single noising of `z` at t_fix. No masking.
Tensor reconstruct(const Tensor& z, Denoiser& denoiser, const DiffusionConfig& cfg,
                   std::mt19937_64& rng);

}  // namespace mddpm
