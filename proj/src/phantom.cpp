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

#include "mddpm/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "mddpm/diffusion.hpp"

namespace mddpm {

void PhantomSpec::validate() const {
  if (height == 0 || width == 0 || height % 4 != 0 || width % 4 != 0) {
    throw std::invalid_argument("phantom size must be a positive multiple of 4");
  }
  if (ellipses_min > ellipses_max || ellipses_max > kMaxStructures) {
    throw std::invalid_argument("phantom structure count range must lie in [0, " + std::to_string(kMaxStructures) + "]");
  }
  if (!(0.0 <= tissue_min && tissue_min <= tissue_max && tissue_max <= 1.0) ||
      !(0.0 <= rim_intensity && rim_intensity <= 1.0)) {
    throw std::invalid_argument("phantom intensity bands must lie in [0,1]");
  }
  if (!(0.0 <= structure_jitter && structure_jitter <= 0.2)) {
    throw std::invalid_argument("phantom structure jitter must lie in [0, 0.2]");
  }
  if (texture_amplitude < 0.0) throw std::invalid_argument("texture amplitude must be >= 0");
}

nlohmann::json PhantomSpec::to_json() const {
  return {{"height", height},
          {"width", width},
          {"ellipses_min", ellipses_min},
          {"ellipses_max", ellipses_max},
          {"tissue_min", tissue_min},
          {"tissue_max", tissue_max},
          {"structure_jitter", structure_jitter},
          {"rim_intensity", rim_intensity},
          {"texture_amplitude", texture_amplitude},
          {"seed", seed}};
}

void AnomalySpec::validate() const {
  if (blobs_min < 1 || blobs_max < blobs_min) throw std::invalid_argument("anomaly blob count range invalid");
  if (!(radius_min > 0.0 && radius_min <= radius_max)) throw std::invalid_argument("anomaly radius range invalid");
  if (!(offset_min >= 0.0 && offset_min <= offset_max)) throw std::invalid_argument("anomaly offset range invalid");
}

nlohmann::json AnomalySpec::to_json() const {
  return {{"blobs_min", blobs_min},   {"blobs_max", blobs_max},   {"radius_min", radius_min},
          {"radius_max", radius_max}, {"offset_min", offset_min}, {"offset_max", offset_max},
          {"allow_hypo", allow_hypo}, {"margin", margin},         {"seed", seed}};
}

bool Sample::healthy() const {
  return std::all_of(anomaly_mask.values().begin(), anomaly_mask.values().end(),
                     [](float v) { return v == 0.0f; });
}

namespace {

struct Ellipse {
  double cy, cx, ry, rx, theta;

  // Normalized radius; <= 1 inside.
  double rho(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double c = std::cos(theta), s = std::sin(theta);
    const double u = (dx * c + dy * s) / rx;
    const double v = (-dx * s + dy * c) / ry;
    return std::sqrt(u * u + v * v);
  }
};

// Interior anatomy shared by every phantom: mirrored dark and grey pairs, a
// bright central band and a posterior band. Centre (u, v) and semi-axes
// (su, sv) are relative to the inner head ellipse.
struct Structure {
  double u, v, su, sv, theta, level;
};

constexpr std::array<Structure, 6> kAnatomy{{
    {-0.20, -0.05, 0.10, 0.30, 0.15, 0.18},
    {0.20, -0.05, 0.10, 0.30, -0.15, 0.18},
    {0.00, 0.40, 0.28, 0.12, 0.00, 0.78},
    {-0.48, 0.25, 0.12, 0.18, 0.30, 0.27},
    {0.48, 0.25, 0.12, 0.18, -0.30, 0.27},
    {0.00, -0.55, 0.30, 0.10, 0.00, 0.68},
}};

}  // namespace

PhantomRender render_phantom(const PhantomSpec& spec, std::size_t index) {
  spec.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * u01(rng); };

  const std::size_t h = spec.height, w = spec.width;
  const double hh = static_cast<double>(h), ww = static_cast<double>(w);
  const Ellipse head{hh / 2.0 - 0.5 + uni(-2.0, 2.0), ww / 2.0 - 0.5 + uni(-2.0, 2.0),
                     uni(0.30, 0.42) * hh, uni(0.30, 0.42) * ww, uni(-0.3, 0.3)};
  const double rim_px = 2.0;
  const Ellipse inner{head.cy, head.cx, head.ry - rim_px, head.rx - rim_px, head.theta};
  const double tissue = uni(spec.tissue_min, spec.tissue_max);

  const std::size_t n_struct =
      std::uniform_int_distribution<std::size_t>(spec.ellipses_min, spec.ellipses_max)(rng);
  // Template coordinates are in units of the inner semi-axes, in the head's
  // rotated frame.
  const double c = std::cos(head.theta), sn = std::sin(head.theta);
  const double j = spec.structure_jitter;
  std::vector<Ellipse> structs;
  std::vector<double> levels;
  for (std::size_t k = 0; k < n_struct; ++k) {
    const Structure& t = kAnatomy[k];
    const double u = (t.u + uni(-j, j)) * inner.rx, v = (t.v + uni(-j, j)) * inner.ry;
    structs.push_back({head.cy + u * sn + v * c, head.cx + u * c - v * sn,
                       t.sv * inner.ry * uni(1.0 - 2.0 * j, 1.0 + 2.0 * j),
                       t.su * inner.rx * uni(1.0 - 2.0 * j, 1.0 + 2.0 * j),
                       head.theta + t.theta + uni(-2.0 * j, 2.0 * j)});
    levels.push_back(std::clamp(t.level + uni(-0.04, 0.04), 0.0, 1.0));
  }

  PhantomRender out;
  Sample& s = out.sample;
  char id[32];
  std::snprintf(id, sizeof id, "phantom-%06zu", index);
  s.id = id;
  s.seed = spec.seed;
  s.image = Tensor(Shape{1, h, w});
  s.foreground = Tensor(Shape{h, w});
  s.anomaly_mask = Tensor(Shape{h, w});
  out.labels.assign(h * w, 0);

  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double py = static_cast<double>(y), px = static_cast<double>(x);
      const std::size_t i = y * w + x;
      if (head.rho(py, px) > 1.0) continue;
      s.foreground[i] = 1.0f;
      if (inner.rho(py, px) > 1.0) {
        s.image[i] = static_cast<float>(spec.rim_intensity);
        out.labels[i] = 2;
        continue;
      }
      double v = tissue;
      int label = 1;
      for (std::size_t k = 0; k < structs.size(); ++k) {
        if (structs[k].rho(py, px) <= 1.0) {
          v = levels[k];
          label = static_cast<int>(k) + 3;
        }
      }
      s.image[i] = static_cast<float>(v);
      out.labels[i] = label;
    }
  }

  // The texture field is drawn unconditionally so the generator stream, and
  // with it the geometry, does not depend on the amplitude.
  const SimplexParams texture{3, ww / 8.0, 0.5};
  const std::vector<float> tex = simplex_field(h, w, texture, rng);
  for (std::size_t i = 0; i < h * w; ++i) {
    if (s.foreground[i] == 0.0f) continue;
    const double v = s.image[i] + spec.texture_amplitude * tex[i];
    s.image[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

std::vector<Sample> generate_healthy(const PhantomSpec& spec, std::size_t n, std::size_t first_index) {
  if (n == 0) throw std::invalid_argument("generate_healthy needs n >= 1");
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(render_phantom(spec, first_index + i).sample);
  return out;
}

std::vector<std::size_t> disc_pixels(std::size_t height, std::size_t width, double cy, double cx,
                                     double radius) {
  std::vector<std::size_t> px;
  const double r2 = radius * radius;
  const auto y_lo = static_cast<long>(std::max(0.0, std::floor(cy - radius)));
  const auto y_hi = static_cast<long>(std::min(static_cast<double>(height) - 1.0, std::ceil(cy + radius)));
  const auto x_lo = static_cast<long>(std::max(0.0, std::floor(cx - radius)));
  const auto x_hi = static_cast<long>(std::min(static_cast<double>(width) - 1.0, std::ceil(cx + radius)));
  for (long y = y_lo; y <= y_hi; ++y) {
    for (long x = x_lo; x <= x_hi; ++x) {
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      if (dy * dy + dx * dx <= r2) px.push_back(static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x));
    }
  }
  return px;
}

Sample add_blob(const Sample& s, double cy, double cx, double radius, double offset) {
  Sample out{s.id, s.seed, s.image.clone(), s.foreground.clone(), s.anomaly_mask.clone()};
  const std::size_t h = s.foreground.dim(0), w = s.foreground.dim(1);
  const double r2 = radius * radius;
  for (std::size_t i : disc_pixels(h, w, cy, cx, radius)) {
    const double dy = static_cast<double>(i / w) - cy, dx = static_cast<double>(i % w) - cx;
    const double feather = 0.25 + 0.75 * (1.0 - (dy * dy + dx * dx) / r2);
    out.image[i] = static_cast<float>(std::clamp(out.image[i] + offset * feather, 0.0, 1.0));
    out.anomaly_mask[i] = 1.0f;
  }
  return out;
}

Sample inject_anomaly(const Sample& s, const AnomalySpec& spec, std::mt19937_64& rng, bool* warning) {
  spec.validate();
  const std::size_t h = s.foreground.dim(0), w = s.foreground.dim(1);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * u01(rng); };
  const std::size_t n = spec.blobs_min +
                        std::min<std::size_t>(spec.blobs_max - spec.blobs_min,
                                              static_cast<std::size_t>(u01(rng) * static_cast<double>(spec.blobs_max - spec.blobs_min + 1)));
  const double sign = spec.allow_hypo && u01(rng) < 0.5 ? -1.0 : 1.0;
  Sample out = s;
  bool degenerate = false;
  for (std::size_t b = 0; b < n; ++b) {
    const double radius = uni(spec.radius_min, spec.radius_max);
    const double offset = sign * uni(spec.offset_min, spec.offset_max);
    const double reach = radius + static_cast<double>(spec.margin);
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const double cy = uni(reach, static_cast<double>(h) - 1.0 - reach);
      const double cx = uni(reach, static_cast<double>(w) - 1.0 - reach);
      const auto support = disc_pixels(h, w, cy, cx, reach);
      const bool inside = std::all_of(support.begin(), support.end(),
                                      [&](std::size_t i) { return s.foreground[i] != 0.0f; });
      if (!inside) continue;
      out = add_blob(out, cy, cx, radius, offset);
      placed = true;
    }
    if (!placed) {
      throw AnomalyPlacementError("could not place an anomaly of radius " + std::to_string(radius) +
                                  " inside the foreground of " + s.id);
    }
    degenerate = degenerate || offset == 0.0;
  }
  if (warning) *warning = degenerate;
  return out;
}

}  // namespace mddpm
