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
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mddpm/config.hpp"
#include "mddpm/denoiser.hpp"
#include "mddpm/evaluation.hpp"
#include "mddpm/phantom.hpp"

namespace mddpm {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitIo = 2,
  kExitMissingInput = 3,
  kExitNumeric = 4,
  kExitIncompatible = 5,
};

class PipelineError : public std::runtime_error {
 public:
  PipelineError(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const { return code_; }

 private:
  ExitCode code_;
};

/// Independent 64-bit stream seed for (base, purpose).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t purpose);

// ---- dataset ---------------------------------------------------------------

struct DatasetEntry {
  std::string id;
  std::string split;  // train | val | test
  bool healthy = true;
  std::size_t index = 0;  // generator index
  std::string image;
  std::string foreground;
  std::string mask;
  std::string clean;  // unmodified base image, anomalous samples only
};

struct Dataset {
  std::filesystem::path root;
  nlohmann::json manifest;
  std::vector<DatasetEntry> entries;

  /// Throws PipelineError(kExitMissingInput) if the manifest is absent.
  static Dataset load(const std::filesystem::path& root);
  std::vector<DatasetEntry> select(const std::string& split) const;
  Sample load_sample(const DatasetEntry& e) const;
  Tensor load_clean(const DatasetEntry& e) const;
  /// Test entry ids plus generator specs; equal fingerprints mean equal test
  /// splits.
  nlohmann::json test_fingerprint() const;
};

/// Writes manifest.json, run_config.ini and per-sample tensors and previews.
void generate_dataset(const RunConfig& cfg, const std::filesystem::path& out);

// ---- training --------------------------------------------------------------

struct TrainSummary {
  std::vector<float> losses;
  std::vector<std::pair<std::size_t, double>> val_errors;
};

/// Trains one denoiser and writes a checkpoint directory: checkpoint.json,
/// params/<name>.mtsr, loss.csv, val.csv and run_config.ini.
TrainSummary train(const RunConfig& cfg, const std::filesystem::path& dataset,
                   const std::filesystem::path& out, std::ostream* log = nullptr);

struct Checkpoint {
  nlohmann::json meta;
  RunConfig config;  // the configuration the network was trained with
};

Checkpoint read_checkpoint_meta(const std::filesystem::path& dir);
UNet load_checkpoint(const std::filesystem::path& dir, const RunConfig& cfg);

// ---- evaluation ------------------------------------------------------------

/// Returns z'_0 [1,C,H,W] for one sample image [1,C,H,W].
using Reconstructor = std::function<Tensor(const DatasetEntry&, const Tensor&)>;

struct EvalReport {
  MetricsRow val;
  MetricsRow test;
  double healthy_mean_score = 0.0;
  double lesion_mean_score = 0.0;
  nlohmann::json summary;
};

/// Scores val and test samples, selects the threshold on the configured
/// split, and writes maps/, metrics.csv, metrics.json and run_config.ini.
EvalReport evaluate(const RunConfig& cfg, const std::filesystem::path& dataset,
                    const std::filesystem::path& out, const std::string& variant,
                    const Reconstructor& reconstruct, std::ostream* log = nullptr);

/// Loads a checkpoint and evaluates it. Throws PipelineError(kExitIncompatible)
/// when `cfg` disagrees with the checkpoint's schedule length or architecture.
EvalReport evaluate_checkpoint(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                               const std::filesystem::path& dataset,
                               const std::filesystem::path& out, std::ostream* log = nullptr);

/// Merges the metrics of several evaluation directories into
/// comparison.csv / comparison.json, sorted by test Dice, best first.
std::vector<MetricsRow> compare(const std::vector<std::filesystem::path>& runs,
                                const std::filesystem::path& out);

}  // namespace mddpm
