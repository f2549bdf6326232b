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
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mddpm/denoiser.hpp"
#include "mddpm/diffusion.hpp"
#include "mddpm/evaluation.hpp"
#include "mddpm/masking.hpp"
#include "mddpm/phantom.hpp"

namespace mddpm {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every tunable of a run. Files use INI sections:
//
//   [run]        seed, mode
//   [data]       split sizes, phantom_* and anomaly_* generator fields
//   [diffusion]  schedule, steps, beta_start, beta_end, t_fix, noise, simplex_*,
//                inference_draws
//   [denoiser]   base_width, depth, time_dim
//   [masking]    ratio_min, ratio_max, n_min, n_max, side_min, side_max,
//                max_attempts, mask_dc
//   [train]      steps, batch_size, lr, log_every, val_every
//   [eval]       median_kernel, erosion_iterations, grid, grid_size,
//                empty_pairs, threshold_source
//
// Precedence, lowest first: built-in defaults, --config file, --set
// overrides, dedicated flags (--seed, --mode).
struct RunConfig {
  std::uint64_t seed = 7;
  MaskingMode mode = MaskingMode::kFpmCutmix;

  std::size_t n_train = 256;
  std::size_t n_val_healthy = 8;
  std::size_t n_val_anomalous = 16;
  std::size_t n_test_anomalous = 50;
  std::size_t n_test_healthy = 16;
  PhantomSpec phantom;
  AnomalySpec anomaly;

  ScheduleKind schedule = ScheduleKind::kLinear;
  std::size_t diffusion_steps = 300;
  double beta_start = 1e-4 * 1000.0 / 300.0;
  double beta_end = 0.02 * 1000.0 / 300.0;
  std::size_t t_fix = 150;
  NoiseKind noise = NoiseKind::kSimplex;
  SimplexParams simplex;
  std::size_t inference_draws = 1;

  DenoiserConfig denoiser;
  MaskConfig masking;

  std::size_t train_steps = 5000;
  std::size_t batch_size = 2;
  double lr = 1e-3;
  std::size_t log_every = 100;
  std::size_t val_every = 1000;

  EvalConfig eval;
  /// "val" selects the operating threshold on the validation split; "test"
  /// is the oracle protocol that selects it on the test split itself.
  std::string threshold_source = "val";

  /// Throws ConfigError naming the offending key.
  void validate() const;

  /// Builds the schedule and packs the diffusion fields.
  DiffusionConfig diffusion() const;

  /// Sets one "section.key" entry from its textual value.
  void set(const std::string& dotted_key, const std::string& value);
  std::string get(const std::string& dotted_key) const;
  static std::vector<std::string> keys();

  /// Reads an INI file on top of the current values.
  void merge_file(const std::filesystem::path& path);
  void merge_ini(const std::string& text);
  /// Every key, grouped by section, in a fixed order.
  std::string to_ini() const;
};

}  // namespace mddpm
