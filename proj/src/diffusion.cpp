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

#include "mddpm/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <stdexcept>

#include "mddpm/ops.hpp"

namespace mddpm {

std::string to_string(ScheduleKind k) { return k == ScheduleKind::kLinear ? "linear" : "cosine"; }
std::string to_string(NoiseKind k) { return k == NoiseKind::kGaussian ? "gaussian" : "simplex"; }

std::string to_string(MaskingMode m) {
  switch (m) {
    case MaskingMode::kNone: return "none";
    case MaskingMode::kIpm: return "ipm";
    case MaskingMode::kFpm: return "fpm";
    case MaskingMode::kFpmCutmix: return "fpm-cm";
  }
  return "none";
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "linear") return ScheduleKind::kLinear;
  if (s == "cosine") return ScheduleKind::kCosine;
  throw std::invalid_argument("unknown schedule kind '" + s + "'");
}

NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "gaussian") return NoiseKind::kGaussian;
  if (s == "simplex") return NoiseKind::kSimplex;
  throw std::invalid_argument("unknown noise kind '" + s + "'");
}

MaskingMode masking_mode_from_string(const std::string& s) {
  if (s == "none") return MaskingMode::kNone;
  if (s == "ipm") return MaskingMode::kIpm;
  if (s == "fpm") return MaskingMode::kFpm;
  if (s == "fpm-cm") return MaskingMode::kFpmCutmix;
  throw std::invalid_argument("unknown masking mode '" + s + "' (expected none|ipm|fpm|fpm-cm)");
}

NoiseSchedule NoiseSchedule::build(ScheduleKind kind, std::size_t steps, double beta_start,
                                   double beta_end) {
  if (steps == 0) throw std::invalid_argument("noise schedule needs T >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::invalid_argument("noise schedule needs 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.kind_ = kind;
  s.beta_start_ = beta_start;
  s.beta_end_ = beta_end;
  s.betas_.resize(steps);
  if (kind == ScheduleKind::kLinear) {
    for (std::size_t i = 0; i < steps; ++i) {
      const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
      s.betas_[i] = beta_start + (beta_end - beta_start) * frac;
    }
  } else {
    constexpr double kOffset = 0.008;
    auto f = [&](double t) {
      const double c = std::cos((t / static_cast<double>(steps) + kOffset) / (1.0 + kOffset) *
                                std::numbers::pi / 2.0);
      return c * c;
    };
    for (std::size_t i = 0; i < steps; ++i) {
      const double b = 1.0 - f(static_cast<double>(i + 1)) / f(static_cast<double>(i));
      s.betas_[i] = std::clamp(b, 1e-8, 0.999);
    }
  }
  s.alpha_bars_.resize(steps);
  double acc = 1.0;
  for (std::size_t i = 0; i < steps; ++i) {
    acc *= 1.0 - s.betas_[i];
    s.alpha_bars_[i] = acc;
  }
  return s;
}

void NoiseSchedule::write_csv(std::ostream& os) const {
  os << "t,beta,alpha_bar\n" << std::setprecision(17);
  for (std::size_t t = 1; t <= steps(); ++t) os << t << ',' << beta(t) << ',' << alpha_bar(t) << '\n';
}

void DiffusionConfig::validate() const {
  if (schedule.steps() == 0) throw std::invalid_argument("diffusion config has no schedule");
  if (t_fix < 1 || t_fix > schedule.steps()) {
    throw std::invalid_argument("t_fix " + std::to_string(t_fix) + " outside [1, " +
                                std::to_string(schedule.steps()) + "]");
  }
  if (inference_draws == 0) throw std::invalid_argument("inference_draws must be positive");
  if (noise == NoiseKind::kSimplex && simplex.octaves == 0) {
    throw std::invalid_argument("simplex noise needs at least one octave");
  }
}

namespace {

constexpr double kF2 = 0.36602540378443864676;  // (sqrt(3) - 1) / 2
constexpr double kG2 = 0.21132486540518711775;  // (3 - sqrt(3)) / 6
constexpr int kGrad[12][2] = {{1, 1}, {-1, 1}, {1, -1}, {-1, -1}, {1, 0}, {-1, 0},
                              {1, 0}, {-1, 0}, {0, 1}, {0, -1}, {0, 1}, {0, -1}};

}  // namespace

SimplexNoise::SimplexNoise(std::mt19937_64& rng) : perm_(512) {
  std::vector<int> p(256);
  for (int i = 0; i < 256; ++i) p[i] = i;
  // Fisher-Yates with explicit draws so the table does not depend on the
  // standard library's shuffle implementation.
  for (int i = 255; i > 0; --i) {
    const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(p[i], p[j]);
  }
  for (int i = 0; i < 512; ++i) perm_[i] = p[i & 255];
}

double SimplexNoise::operator()(double x, double y) const {
  const double s = (x + y) * kF2;
  const double fi = std::floor(x + s);
  const double fj = std::floor(y + s);
  const double t = (fi + fj) * kG2;
  const double x0 = x - (fi - t);
  const double y0 = y - (fj - t);
  const int i1 = x0 > y0 ? 1 : 0;
  const int j1 = x0 > y0 ? 0 : 1;
  const double x1 = x0 - i1 + kG2, y1 = y0 - j1 + kG2;
  const double x2 = x0 - 1.0 + 2.0 * kG2, y2 = y0 - 1.0 + 2.0 * kG2;
  const int ii = static_cast<int>(static_cast<long long>(fi) & 255);
  const int jj = static_cast<int>(static_cast<long long>(fj) & 255);
  auto corner = [&](int gi, double dx, double dy) {
    double tt = 0.5 - dx * dx - dy * dy;
    if (tt < 0.0) return 0.0;
    tt *= tt;
    return tt * tt * (kGrad[gi][0] * dx + kGrad[gi][1] * dy);
  };
  const double n0 = corner(perm_[ii + perm_[jj]] % 12, x0, y0);
  const double n1 = corner(perm_[ii + i1 + perm_[jj + j1]] % 12, x1, y1);
  const double n2 = corner(perm_[ii + 1 + perm_[jj + 1]] % 12, x2, y2);
  return std::clamp(70.0 * (n0 + n1 + n2), -1.0, 1.0);
}

std::vector<float> simplex_field(std::size_t height, std::size_t width, const SimplexParams& p,
                                 std::mt19937_64& rng) {
  const SimplexNoise noise(rng);
  std::uniform_real_distribution<double> offset(0.0, 4096.0);
  const double wavelength = p.base_wavelength > 0.0 ? p.base_wavelength : static_cast<double>(width) / 4.0;
  std::vector<double> ox(p.octaves), oy(p.octaves), freq(p.octaves), amp(p.octaves);
  double amp_total = 0.0;
  for (std::size_t o = 0; o < p.octaves; ++o) {
    ox[o] = offset(rng);
    oy[o] = offset(rng);
    freq[o] = std::ldexp(1.0, static_cast<int>(o)) / wavelength;
    amp[o] = std::pow(p.persistence, static_cast<double>(o));
    amp_total += amp[o];
  }
  std::vector<float> out(height * width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double v = 0.0;
      for (std::size_t o = 0; o < p.octaves; ++o) {
        v += amp[o] * noise(static_cast<double>(x) * freq[o] + ox[o],
                            static_cast<double>(y) * freq[o] + oy[o]);
      }
      out[y * width + x] = static_cast<float>(v / amp_total);
    }
  }
  return out;
}

NoiseField sample_noise(const DiffusionConfig& cfg, const Shape& shape, std::mt19937_64& rng) {
  NoiseField field{Tensor(shape), cfg.noise};
  if (cfg.noise == NoiseKind::kGaussian) {
    std::normal_distribution<float> normal(0.0f, 1.0f);
    for (auto& v : field.values.values()) v = normal(rng);
    return field;
  }
  if (shape.size() < 2) throw ShapeError("simplex noise needs at least [H,W], got " + shape_str(shape));
  const std::size_t h = shape[shape.size() - 2], w = shape[shape.size() - 1];
  const std::size_t planes = shape_numel(shape) / (h * w);
  for (std::size_t p = 0; p < planes; ++p) {
    std::vector<float> plane = simplex_field(h, w, cfg.simplex, rng);
    double mean = 0.0;
    for (float v : plane) mean += v;
    mean /= static_cast<double>(plane.size());
    double var = 0.0;
    for (float v : plane) var += (v - mean) * (v - mean);
    var /= static_cast<double>(plane.size());
    const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
    float* dst = field.values.data() + p * h * w;
    for (std::size_t i = 0; i < plane.size(); ++i) dst[i] = static_cast<float>((plane[i] - mean) * inv);
  }
  return field;
}

Tensor forward_diffuse(const Tensor& z0, double alpha_bar, const Tensor& eps) {
  if (z0.shape() != eps.shape()) {
    throw ShapeError("forward_diffuse: image " + shape_str(z0.shape()) + " vs noise " +
                     shape_str(eps.shape()));
  }
  const float a = static_cast<float>(std::sqrt(alpha_bar));
  const float b = static_cast<float>(std::sqrt(1.0 - alpha_bar));
  Tensor out(z0.shape());
  for (std::size_t i = 0; i < z0.numel(); ++i) out[i] = a * z0[i] + b * eps[i];
  return out;
}

Tensor forward_diffuse(const Tensor& z0, std::size_t t, const NoiseSchedule& schedule,
                       const NoiseField& noise) {
  if (t < 1 || t > schedule.steps()) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [1, " +
                            std::to_string(schedule.steps()) + "]");
  }
  return forward_diffuse(z0, schedule.alpha_bar(t), noise.values);
}

Tensor mask_input(const Tensor& z0, const Tensor& foreground, MaskingMode mode,
                  const MaskConfig& mask_cfg, std::uint64_t mask_seed, PatchMaskSet* pixel_mask,
                  PatchMaskSet* freq_mask) {
  if (mode == MaskingMode::kNone) return z0.clone();
  const std::size_t c = z0.dim(0), h = z0.dim(1), w = z0.dim(2);
  std::mt19937_64 seeds(mask_seed);
  const std::uint64_t pix_seed = seeds();
  const std::uint64_t freq_seed = seeds();
  switch (mode) {
    case MaskingMode::kIpm: {
      PatchMaskSet m = sample_patch_mask(mask_cfg, foreground, c, pix_seed);
      Tensor out = apply_ipm(z0, m);
      if (pixel_mask) *pixel_mask = std::move(m);
      return out;
    }
    case MaskingMode::kFpm: {
      PatchMaskSet m = sample_frequency_mask(mask_cfg, c, h, w, freq_seed);
      Tensor out = apply_fpm(z0, m);
      if (freq_mask) *freq_mask = std::move(m);
      return out;
    }
    case MaskingMode::kFpmCutmix: {
      PatchMaskSet mp = sample_patch_mask(mask_cfg, foreground, c, pix_seed);
      PatchMaskSet mf = sample_frequency_mask(mask_cfg, c, h, w, freq_seed);
      Tensor out = apply_fpm_cutmix(z0, mp, mf);
      if (pixel_mask) *pixel_mask = std::move(mp);
      if (freq_mask) *freq_mask = std::move(mf);
      return out;
    }
    case MaskingMode::kNone:
      break;
  }
  return z0.clone();
}

float training_step(const Tensor& batch, const std::vector<Tensor>& foregrounds,
                    MaskingMode mode, const MaskConfig& mask_cfg, Denoiser& denoiser,
                    const DiffusionConfig& cfg, std::mt19937_64& rng, StepTrace* trace) {
  if (batch.ndim() != 4) throw ShapeError("training batch must be [N,C,H,W], got " + shape_str(batch.shape()));
  const std::size_t n = batch.dim(0);
  const std::size_t per = batch.numel() / n;
  if (foregrounds.size() != n) {
    throw ShapeError("training_step got " + std::to_string(foregrounds.size()) +
                     " foregrounds for batch " + shape_str(batch.shape()));
  }
  // Masking and diffusion draw from separate streams so that the diffusion
  // noise does not depend on how many numbers the mask sampler consumed.
  const std::uint64_t mask_seed = rng();
  const std::uint64_t diffusion_seed = rng();
  std::mt19937_64 mask_rng(mask_seed);
  std::mt19937_64 diff_rng(diffusion_seed);

  const Shape image_shape(batch.shape().begin() + 1, batch.shape().end());
  Tensor masked(batch.shape());
  if (trace) *trace = StepTrace{};
  for (std::size_t i = 0; i < n; ++i) {
    Tensor z0(image_shape, std::vector<float>(batch.data() + i * per, batch.data() + (i + 1) * per));
    PatchMaskSet pm, fm;
    Tensor zm = mask_input(z0, foregrounds[i], mode, mask_cfg, mask_rng(), &pm, &fm);
    std::copy(zm.values().begin(), zm.values().end(), masked.data() + i * per);
    if (trace) {
      trace->pixel_masks.push_back(std::move(pm));
      trace->frequency_masks.push_back(std::move(fm));
    }
  }

  std::uniform_int_distribution<int> pick_t(1, static_cast<int>(cfg.schedule.steps()));
  std::vector<int> ts(n);
  for (auto& t : ts) t = pick_t(diff_rng);
  const NoiseField noise = sample_noise(cfg, batch.shape(), diff_rng);
  Tensor z_t(batch.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double ab = cfg.schedule.alpha_bar(static_cast<std::size_t>(ts[i]));
    const float a = static_cast<float>(std::sqrt(ab));
    const float b = static_cast<float>(std::sqrt(1.0 - ab));
    for (std::size_t k = i * per; k < (i + 1) * per; ++k) z_t[k] = a * masked[k] + b * noise.values[k];
  }
  if (trace) {
    trace->timesteps = ts;
    trace->masked_input = masked;
  }

  Tape tape;
  TapeScope scope(tape);
  Tensor pred = denoiser.forward(z_t, ts);
  Tensor loss = ops::l1_loss(pred, batch);
  const float value = loss.item();
  if (loss.requires_grad()) tape.backward(loss);
  return value;
}

Tensor reconstruct(const Tensor& z, Denoiser& denoiser, const DiffusionConfig& cfg,
                   std::mt19937_64& rng) {
  cfg.validate();
  if (z.ndim() != 4) throw ShapeError("reconstruct expects [N,C,H,W], got " + shape_str(z.shape()));
  const std::vector<int> ts(z.dim(0), static_cast<int>(cfg.t_fix));
  Tensor acc(z.shape());
  for (std::size_t d = 0; d < cfg.inference_draws; ++d) {
    const NoiseField noise = sample_noise(cfg, z.shape(), rng);
    Tensor zt = forward_diffuse(z, cfg.t_fix, cfg.schedule, noise);
    Tensor est = denoiser.forward(zt, ts);
    for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += est[i];
  }
  if (cfg.inference_draws > 1) {
    const float inv = 1.0f / static_cast<float>(cfg.inference_draws);
    for (auto& v : acc.values()) v *= inv;
  }
  return acc;
}

}  // namespace mddpm
