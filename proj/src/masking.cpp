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

#include "mddpm/masking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "mddpm/spectral.hpp"

namespace mddpm {

std::string to_string(MaskDomain d) { return d == MaskDomain::kPixel ? "pixel" : "frequency"; }

MaskDomain mask_domain_from_string(const std::string& s) {
  if (s == "pixel") return MaskDomain::kPixel;
  if (s == "frequency") return MaskDomain::kFrequency;
  throw std::invalid_argument("unknown mask domain '" + s + "'");
}

void MaskConfig::validate() const {
  if (!(ratio_min >= 0.0 && ratio_min <= ratio_max && ratio_max < 1.0)) {
    throw std::invalid_argument("mask ratio bounds must satisfy 0 <= min <= max < 1");
  }
  if (n_min < 1 || n_max < n_min) throw std::invalid_argument("mask patch count bounds invalid");
  if (side_min < 1 || (side_max != 0 && side_max < side_min)) {
    throw std::invalid_argument("mask patch side bounds invalid");
  }
  if (max_attempts == 0) throw std::invalid_argument("mask max_attempts must be positive");
}

namespace {

bool is_fg(const Tensor& fg, std::size_t i) { return !fg.defined() || fg[i] != 0.0f; }

void check_foreground(const Tensor& fg, std::size_t h, std::size_t w) {
  if (fg.defined() && fg.numel() != h * w) {
    throw ShapeError("foreground " + shape_str(fg.shape()) + " does not match image plane [" +
                     std::to_string(h) + "," + std::to_string(w) + "]");
  }
}

// Builds the single-plane 0/1 mask and the count of masked eligible positions.
std::vector<float> rasterize(const std::vector<PatchRegion>& regions, MaskDomain domain,
                             std::size_t h, std::size_t w, const Tensor& fg, bool mask_dc,
                             std::size_t& masked) {
  std::vector<float> plane(h * w, 1.0f);
  for (const auto& r : regions) {
    for (std::size_t y = r.y0; y < r.y0 + r.h; ++y) {
      for (std::size_t x = r.x0; x < r.x0 + r.w; ++x) {
        const std::size_t i = y * w + x;
        if (domain == MaskDomain::kPixel && !is_fg(fg, i)) continue;
        plane[i] = 0.0f;
        if (domain == MaskDomain::kFrequency) plane[((h - y) % h) * w + (w - x) % w] = 0.0f;
      }
    }
  }
  if (domain == MaskDomain::kFrequency && !mask_dc) plane[0] = 1.0f;
  masked = 0;
  for (float v : plane) masked += v == 0.0f ? 1 : 0;
  return plane;
}

PatchMaskSet assemble(std::vector<PatchRegion> regions, MaskDomain domain, std::size_t c,
                      std::size_t h, std::size_t w, const Tensor& fg, bool mask_dc) {
  for (const auto& r : regions) {
    if (r.w == 0 || r.h == 0 || r.x0 + r.w > w || r.y0 + r.h > h) {
      throw std::invalid_argument("patch region out of bounds");
    }
  }
  std::size_t masked = 0;
  std::vector<float> plane = rasterize(regions, domain, h, w, fg, mask_dc, masked);
  std::size_t eligible = h * w;
  if (domain == MaskDomain::kPixel && fg.defined()) {
    eligible = 0;
    for (std::size_t i = 0; i < h * w; ++i) eligible += is_fg(fg, i) ? 1 : 0;
  }
  PatchMaskSet m;
  m.regions = std::move(regions);
  m.domain = domain;
  m.mask = Tensor(Shape{c, h, w});
  for (std::size_t ch = 0; ch < c; ++ch) std::copy(plane.begin(), plane.end(), m.mask.data() + ch * h * w);
  m.masked_fraction =
      eligible == 0 ? 0.0 : static_cast<double>(masked) / static_cast<double>(eligible);
  return m;
}

PatchMaskSet sample_regions(const MaskConfig& cfg, MaskDomain domain, std::size_t c,
                            std::size_t h, std::size_t w, const Tensor& fg, std::uint64_t seed) {
  cfg.validate();
  std::vector<std::size_t> centers;
  for (std::size_t i = 0; i < h * w; ++i) {
    if (domain == MaskDomain::kFrequency || is_fg(fg, i)) centers.push_back(i);
  }
  if (centers.empty()) throw std::invalid_argument("cannot sample patches: foreground is empty");

  if (cfg.ratio_max == 0.0) {
    PatchMaskSet m = assemble({}, domain, c, h, w, fg, cfg.mask_dc);
    m.seed = seed;
    return m;
  }

  std::mt19937_64 rng(seed);
  const std::size_t side_cap = std::max<std::size_t>(cfg.side_min, std::min(h, w) / 2);
  const std::size_t side_max = cfg.side_max == 0 ? side_cap : cfg.side_max;
  std::uniform_int_distribution<std::size_t> count(cfg.n_min, cfg.n_max);
  std::uniform_real_distribution<double> log_side(std::log(static_cast<double>(cfg.side_min)),
                                                  std::log(static_cast<double>(side_max) + 1.0));
  std::uniform_int_distribution<std::size_t> pick(0, centers.size() - 1);
  auto draw_side = [&](std::size_t limit) {
    auto s = static_cast<std::size_t>(std::floor(std::exp(log_side(rng))));
    return std::clamp<std::size_t>(s, cfg.side_min, std::min(side_max, limit));
  };

  PatchMaskSet best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    const std::size_t n = count(rng);
    std::vector<PatchRegion> regions;
    std::size_t area_sum = 0;
    for (std::size_t k = 0; k < n; ++k) {
      PatchRegion r;
      r.h = draw_side(h);
      r.w = draw_side(w);
      const std::size_t center = centers[pick(rng)];
      const std::size_t cy = center / w, cx = center % w;
      r.y0 = std::min(cy >= r.h / 2 ? cy - r.h / 2 : 0, h - r.h);
      r.x0 = std::min(cx >= r.w / 2 ? cx - r.w / 2 : 0, w - r.w);
      area_sum += r.area();
      regions.push_back(r);
    }
    if (area_sum >= h * w) continue;  // sum of patch areas must stay below the image area
    PatchMaskSet m = assemble(std::move(regions), domain, c, h, w, fg, cfg.mask_dc);
    const double f = m.masked_fraction;
    const double gap = f < cfg.ratio_min ? cfg.ratio_min - f : (f > cfg.ratio_max ? f - cfg.ratio_max : 0.0);
    if (gap == 0.0) {
      m.seed = seed;
      return m;
    }
    if (gap < best_gap) {
      best_gap = gap;
      best = std::move(m);
    }
  }
  if (!best.mask.defined()) best = assemble({}, domain, c, h, w, fg, cfg.mask_dc);
  best.seed = seed;
  best.ratio_warning = true;
  return best;
}

void require_domain(const PatchMaskSet& m, MaskDomain d, const char* op) {
  if (m.domain != d) {
    throw std::invalid_argument(std::string(op) + " expects a " + to_string(d) +
                                "-domain mask, got " + to_string(m.domain));
  }
}

void require_same_shape(const Tensor& z, const PatchMaskSet& m, const char* op) {
  if (z.ndim() != 3 || z.shape() != m.mask.shape()) {
    throw ShapeError(std::string(op) + ": image " + shape_str(z.shape()) + " vs mask " +
                     shape_str(m.mask.shape()));
  }
}

}  // namespace

PatchMaskSet PatchMaskSet::from_regions(std::vector<PatchRegion> regions, MaskDomain domain,
                                        std::size_t channels, std::size_t height,
                                        std::size_t width, const Tensor& foreground,
                                        bool mask_dc) {
  check_foreground(foreground, height, width);
  return assemble(std::move(regions), domain, channels, height, width, foreground, mask_dc);
}

nlohmann::json PatchMaskSet::to_json() const {
  nlohmann::json regs = nlohmann::json::array();
  for (const auto& r : regions) regs.push_back({{"x0", r.x0}, {"y0", r.y0}, {"w", r.w}, {"h", r.h}});
  return {{"domain", to_string(domain)},
          {"seed", seed},
          {"regions", regs},
          {"masked_fraction", masked_fraction},
          {"ratio_warning", ratio_warning}};
}

PatchMaskSet PatchMaskSet::from_json(const nlohmann::json& j, std::size_t channels,
                                     std::size_t height, std::size_t width,
                                     const Tensor& foreground, bool mask_dc) {
  std::vector<PatchRegion> regions;
  for (const auto& r : j.at("regions")) {
    regions.push_back({r.at("x0").get<std::size_t>(), r.at("y0").get<std::size_t>(),
                       r.at("w").get<std::size_t>(), r.at("h").get<std::size_t>()});
  }
  PatchMaskSet m = from_regions(std::move(regions), mask_domain_from_string(j.at("domain")),
                                channels, height, width, foreground, mask_dc);
  m.seed = j.at("seed").get<std::uint64_t>();
  m.ratio_warning = j.value("ratio_warning", false);
  return m;
}

PatchMaskSet sample_patch_mask(const MaskConfig& cfg, const Tensor& foreground,
                               std::size_t channels, std::uint64_t seed) {
  if (!foreground.defined() || foreground.ndim() != 2) {
    throw ShapeError("sample_patch_mask expects an [H,W] foreground");
  }
  return sample_regions(cfg, MaskDomain::kPixel, channels, foreground.dim(0), foreground.dim(1),
                        foreground, seed);
}

PatchMaskSet sample_frequency_mask(const MaskConfig& cfg, std::size_t channels, std::size_t height,
                                   std::size_t width, std::uint64_t seed) {
  return sample_regions(cfg, MaskDomain::kFrequency, channels, height, width, Tensor(), seed);
}

Tensor apply_ipm(const Tensor& z0, const PatchMaskSet& m) {
  require_domain(m, MaskDomain::kPixel, "apply_ipm");
  require_same_shape(z0, m, "apply_ipm");
  Tensor out(z0.shape());
  for (std::size_t i = 0; i < z0.numel(); ++i) out[i] = z0[i] * m.mask[i];
  return out;
}

Tensor apply_fpm(const Tensor& z0, const PatchMaskSet& m) {
  require_domain(m, MaskDomain::kFrequency, "apply_fpm");
  require_same_shape(z0, m, "apply_fpm");
  ComplexSpectrum s = dft2(z0);
  for (std::size_t i = 0; i < s.re.size(); ++i) {
    s.re[i] *= m.mask[i];
    s.im[i] *= m.mask[i];
  }
  return idft2(s);
}

Tensor apply_fpm_cutmix(const Tensor& z0, const PatchMaskSet& m_pix, const PatchMaskSet& m_freq) {
  require_domain(m_pix, MaskDomain::kPixel, "apply_fpm_cutmix");
  require_domain(m_freq, MaskDomain::kFrequency, "apply_fpm_cutmix");
  require_same_shape(z0, m_pix, "apply_fpm_cutmix");
  const Tensor zf = apply_fpm(z0, m_freq);
  Tensor out(z0.shape());
  for (std::size_t i = 0; i < z0.numel(); ++i) {
    out[i] = m_pix.mask[i] != 0.0f ? z0[i] : zf[i];
  }
  return out;
}

}  // namespace mddpm
