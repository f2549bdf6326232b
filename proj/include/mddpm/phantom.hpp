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
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mddpm/tensor.hpp"

namespace mddpm {

inline constexpr std::size_t kMaxStructures = 6;

/// Healthy head-like phantom: an elliptical foreground at tissue intensity,
/// a brighter rim, interior elliptical structures laid out from a fixed
/// anatomical template with per-subject jitter, and a low-amplitude simplex
/// texture.
struct PhantomSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  /// Number of template structures drawn, in template order.
  std::size_t ellipses_min = 4;
  std::size_t ellipses_max = 6;
  double tissue_min = 0.35;
  double tissue_max = 0.55;
  /// Relative jitter of structure position, size and orientation.
  double structure_jitter = 0.06;
  double rim_intensity = 0.75;
  double texture_amplitude = 0.03;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Disc-shaped hyper- or hypo-intense lesions.
struct AnomalySpec {
  std::size_t blobs_min = 1;
  std::size_t blobs_max = 2;
  double radius_min = 3.0;
  double radius_max = 7.0;
  double offset_min = 0.25;  // magnitude of the intensity change at the centre
  double offset_max = 0.45;
  bool allow_hypo = true;
  /// Blobs keep this many pixels of foreground around them.
  std::size_t margin = 3;
  std::uint64_t seed = 2;

  void validate() const;
  nlohmann::json to_json() const;
};

struct Sample {
  std::string id;
  std::uint64_t seed = 0;
  Tensor image;         // [1,H,W] in [0,1]
  Tensor foreground;    // [H,W] 0/1
  Tensor anomaly_mask;  // [H,W] 0/1, empty for healthy samples

  bool healthy() const;
};

/// Integer label per pixel of the phantom structure that painted it:
/// 0 background, 1 tissue, 2 rim, 3.. interior ellipses.
struct PhantomRender {
  Sample sample;
  std::vector<int> labels;
};

PhantomRender render_phantom(const PhantomSpec& spec, std::size_t index);

/// Samples index, index+1, ... ; each is a pure function of (spec, index).
std::vector<Sample> generate_healthy(const PhantomSpec& spec, std::size_t n,
                                     std::size_t first_index = 0);

class AnomalyPlacementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Euclidean disc raster: pixel (y, x) belongs iff (y-cy)^2 + (x-cx)^2 <= r^2.
std::vector<std::size_t> disc_pixels(std::size_t height, std::size_t width, double cy, double cx,
                                     double radius);

/// Adds one feathered disc with the given signed centre offset. The mask
/// records the full disc support.
Sample add_blob(const Sample& s, double cy, double cx, double radius, double offset);

/// Injects blobs_min..blobs_max discs fully inside the foreground (with the
/// configured margin). `warning` is set when the result is degenerate (zero
/// offset, so the image is unchanged). Throws AnomalyPlacementError after 100
/// failed placements of a blob.
Sample inject_anomaly(const Sample& s, const AnomalySpec& spec, std::mt19937_64& rng,
                      bool* warning = nullptr);

}  // namespace mddpm
