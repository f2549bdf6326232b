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

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mddpm/tensor.hpp"

namespace mddpm {

struct AnomalyMap {
  Tensor scores;  // [H,W], >= 0
  bool postprocessed = false;
  std::string source_id;
};

enum class ThresholdGrid {
  kUniform,   // grid_size evenly spaced values from the global min to max
  kDistinct,  // every distinct score value
};

enum class EmptyPairPolicy {
  kScoreOne,  // prediction and truth both empty count as Dice 1
  kSkip,      // such pairs are left out of the mean
};

std::string to_string(ThresholdGrid g);
ThresholdGrid threshold_grid_from_string(const std::string& s);
std::string to_string(EmptyPairPolicy p);
EmptyPairPolicy empty_pair_policy_from_string(const std::string& s);

struct EvalConfig {
  std::size_t median_kernel = 5;
  std::size_t erosion_iterations = 3;
  ThresholdGrid grid = ThresholdGrid::kUniform;
  std::size_t grid_size = 100;
  EmptyPairPolicy empty_pairs = EmptyPairPolicy::kScoreOne;

  void validate() const;
};

/// |z - z_rec| per pixel; [C,H,W] inputs are averaged over channels.
AnomalyMap anomaly_map(const Tensor& z, const Tensor& z_rec, std::string source_id = {});

/// K x K median with symmetric reflection at the border (edge pixel repeated).
Tensor median_filter(const Tensor& map, std::size_t kernel);

/// Binary erosion with a 3x3 square; pixels outside the image are background.
Tensor erode(const Tensor& mask, std::size_t iterations);

/// Median filter, then zero every score outside the eroded foreground.
AnomalyMap postprocess(const AnomalyMap& m, const Tensor& foreground, const EvalConfig& cfg);

/// 2|P n T| / (|P| + |T|), 1.0 when both are empty.
double dice(const Tensor& pred, const Tensor& truth);

/// Binary prediction: score >= threshold inside `region` (undefined = all).
Tensor binarize(const Tensor& scores, float threshold, const Tensor& region = Tensor());

struct DiceSummary {
  double threshold = 0.0;
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::vector<double> per_sample;
  std::size_t n_scored = 0;
};

/// One evaluation set. `regions` may be empty, otherwise one mask per map.
struct ScoredSet {
  std::vector<Tensor> scores;
  std::vector<Tensor> truths;
  std::vector<Tensor> regions;
};

std::vector<float> threshold_grid(const ScoredSet& set, const EvalConfig& cfg);

DiceSummary dice_at_threshold(const ScoredSet& set, float threshold, const EvalConfig& cfg);

/// Sweeps the grid built from `set`; the best mean Dice wins, ties go to the
/// lower threshold. Throws std::invalid_argument on an empty set or when no
/// truth mask is nonempty.
DiceSummary best_threshold_dice(const ScoredSet& set, const EvalConfig& cfg);

/// Step-integrated area under the precision-recall curve, sweeping distinct
/// scores in descending order with ties grouped. Throws std::invalid_argument
/// without positives.
double auprc(std::span<const float> scores, std::span<const float> truth);

/// Pools the pixels of every sample inside its region.
double auprc(const ScoredSet& set);

struct MetricsRow {
  std::string variant;
  std::string split;
  double dice_mean = 0.0;
  double dice_std = 0.0;
  double auprc = 0.0;
  double threshold = 0.0;
  std::size_t n_samples = 0;

  nlohmann::json to_json() const;
  static MetricsRow from_json(const nlohmann::json& j);
};

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

}  // namespace mddpm
