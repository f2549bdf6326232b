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

#include "mddpm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>

#include "mddpm/diffusion.hpp"
#include "mddpm/optim.hpp"
#include "mddpm/tensor_io.hpp"

namespace fs = std::filesystem;

namespace mddpm {

namespace {

constexpr int kCheckpointFormat = 1;

// Stream purposes for derive_seed.
enum : std::uint64_t {
  kSeedPhantom = 1,
  kSeedAnomaly = 2,
  kSeedInit = 3,
  kSeedBatches = 4,
  kSeedSteps = 5,
  kSeedValidation = 6,
  kSeedInference = 7,
};

void make_dirs(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw PipelineError(kExitIo, "cannot create directory " + p.string());
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw PipelineError(kExitIo, "cannot write " + p.string());
  os << text;
  if (!os) throw PipelineError(kExitIo, "write failed for " + p.string());
}

std::string read_text(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw PipelineError(kExitMissingInput, "cannot read " + p.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& p) {
  try {
    return nlohmann::json::parse(read_text(p));
  } catch (const nlohmann::json::exception& e) {
    throw PipelineError(kExitMissingInput, "malformed JSON in " + p.string() + ": " + e.what());
  }
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

Tensor as_batch(const Tensor& image) {
  Shape s{1};
  s.insert(s.end(), image.shape().begin(), image.shape().end());
  return Tensor(s, std::vector<float>(image.values().begin(), image.values().end()));
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t purpose) {
  // splitmix64 finalizer over a combined key.
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (purpose + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---- dataset ---------------------------------------------------------------

Dataset Dataset::load(const fs::path& root) {
  const fs::path manifest = root / "manifest.json";
  if (!fs::exists(manifest)) throw PipelineError(kExitMissingInput, "no dataset manifest at " + manifest.string());
  Dataset d;
  d.root = root;
  d.manifest = read_json(manifest);
  try {
    for (const auto& j : d.manifest.at("samples")) {
      DatasetEntry e;
      e.id = j.at("id").get<std::string>();
      e.split = j.at("split").get<std::string>();
      e.healthy = j.at("healthy").get<bool>();
      e.index = j.at("index").get<std::size_t>();
      e.image = j.at("image").get<std::string>();
      e.foreground = j.at("foreground").get<std::string>();
      e.mask = j.at("mask").get<std::string>();
      e.clean = j.value("clean", std::string());
      d.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw PipelineError(kExitMissingInput, "malformed manifest " + manifest.string() + ": " + e.what());
  }
  return d;
}

std::vector<DatasetEntry> Dataset::select(const std::string& split) const {
  std::vector<DatasetEntry> out;
  for (const auto& e : entries) {
    if (e.split == split) out.push_back(e);
  }
  return out;
}

Sample Dataset::load_sample(const DatasetEntry& e) const {
  Sample s;
  s.id = e.id;
  s.seed = e.index;
  try {
    s.image = read_tensor(root / e.image);
    s.foreground = read_tensor(root / e.foreground);
    s.anomaly_mask = read_tensor(root / e.mask);
  } catch (const TensorFileError& err) {
    throw PipelineError(err.kind() == TensorFileError::Kind::kIo ? kExitMissingInput : kExitIo, err.what());
  }
  return s;
}

Tensor Dataset::load_clean(const DatasetEntry& e) const {
  if (e.clean.empty()) return load_sample(e).image;
  return read_tensor(root / e.clean);
}

nlohmann::json Dataset::test_fingerprint() const {
  nlohmann::json ids = nlohmann::json::array();
  for (const auto& e : entries) {
    if (e.split == "test") ids.push_back(e.id);
  }
  return {{"ids", ids},
          {"phantom", manifest.value("phantom", nlohmann::json())},
          {"anomaly", manifest.value("anomaly", nlohmann::json())},
          {"seed", manifest.value("seed", nlohmann::json())}};
}

void generate_dataset(const RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  make_dirs(out);
  PhantomSpec phantom = cfg.phantom;
  phantom.seed = derive_seed(cfg.seed, derive_seed(cfg.phantom.seed, kSeedPhantom));
  const std::uint64_t anomaly_seed = derive_seed(cfg.seed, derive_seed(cfg.anomaly.seed, kSeedAnomaly));

  struct Plan {
    const char* split;
    bool healthy;
    std::size_t count;
  };
  const Plan plan[] = {{"train", true, cfg.n_train},
                       {"val", true, cfg.n_val_healthy},
                       {"val", false, cfg.n_val_anomalous},
                       {"test", false, cfg.n_test_anomalous},
                       {"test", true, cfg.n_test_healthy}};

  nlohmann::json samples = nlohmann::json::array();
  std::size_t index = 0;
  for (const auto& p : plan) {
    const fs::path dir = out / p.split;
    if (p.count > 0) make_dirs(dir);
    for (std::size_t k = 0; k < p.count; ++k, ++index) {
      const Sample base = render_phantom(phantom, index).sample;
      Sample s = base;
      char id[48];
      std::snprintf(id, sizeof id, "%s-%s-%04zu", p.split, p.healthy ? "healthy" : "anomalous", k);
      s.id = id;
      if (!p.healthy) {
        std::mt19937_64 rng(derive_seed(anomaly_seed, index));
        bool warning = false;
        s = inject_anomaly(base, cfg.anomaly, rng, &warning);
        s.id = id;
        if (warning) std::fprintf(stderr, "warning: %s has a zero-offset anomaly\n", id);
      }
      const std::string stem = std::string(p.split) + "/" + s.id;
      nlohmann::json j = {{"id", s.id},
                          {"split", p.split},
                          {"healthy", p.healthy},
                          {"index", index},
                          {"image", stem + "_image.mtsr"},
                          {"foreground", stem + "_foreground.mtsr"},
                          {"mask", stem + "_mask.mtsr"},
                          {"preview", stem + "_image.pgm"}};
      try {
        write_tensor(out / (stem + "_image.mtsr"), s.image);
        write_tensor(out / (stem + "_foreground.mtsr"), s.foreground);
        write_tensor(out / (stem + "_mask.mtsr"), s.anomaly_mask);
        write_pgm(out / (stem + "_image.pgm"), s.image);
        if (!p.healthy) {
          write_tensor(out / (stem + "_clean.mtsr"), base.image);
          write_pgm(out / (stem + "_mask.pgm"), s.anomaly_mask);
          j["clean"] = stem + "_clean.mtsr";
          j["mask_preview"] = stem + "_mask.pgm";
        }
      } catch (const TensorFileError& e) {
        throw PipelineError(kExitIo, e.what());
      }
      samples.push_back(std::move(j));
    }
  }
  const nlohmann::json manifest = {{"format", 1},
                                   {"seed", cfg.seed},
                                   {"phantom", phantom.to_json()},
                                   {"anomaly", cfg.anomaly.to_json()},
                                   {"anomaly_stream_seed", anomaly_seed},
                                   {"samples", samples}};
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
  write_text(out / "run_config.ini", cfg.to_ini());
}

// ---- training --------------------------------------------------------------

namespace {

double validation_error(UNet& net, const std::vector<Tensor>& images, const DiffusionConfig& dcfg,
                        std::uint64_t seed) {
  if (images.empty()) return 0.0;
  std::mt19937_64 rng(seed);
  double total = 0.0;
  std::size_t count = 0;
  for (const Tensor& img : images) {
    const Tensor z = as_batch(img);
    const Tensor rec = reconstruct(z, net, dcfg, rng);
    for (std::size_t i = 0; i < z.numel(); ++i) total += std::fabs(z[i] - rec[i]);
    count += z.numel();
  }
  return total / static_cast<double>(count);
}

void save_parameters(const fs::path& dir, const std::vector<NamedParam>& params, nlohmann::json& listing) {
  make_dirs(dir / "params");
  listing = nlohmann::json::array();
  for (const auto& p : params) {
    const std::string file = "params/" + p.name + ".mtsr";
    try {
      write_tensor(dir / file, p.value);
    } catch (const TensorFileError& e) {
      throw PipelineError(kExitIo, e.what());
    }
    listing.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"file", file}});
  }
}

}  // namespace

TrainSummary train(const RunConfig& cfg, const fs::path& dataset_dir, const fs::path& out, std::ostream* log) {
  cfg.validate();
  const Dataset data = Dataset::load(dataset_dir);
  const auto train_entries = data.select("train");
  if (train_entries.empty()) throw PipelineError(kExitMissingInput, "dataset has no train split: " + dataset_dir.string());

  std::vector<Tensor> images, foregrounds, val_images;
  for (const auto& e : train_entries) {
    Sample s = data.load_sample(e);
    if (!s.healthy()) throw PipelineError(kExitIncompatible, "train sample " + e.id + " carries an anomaly mask");
    images.push_back(s.image);
    foregrounds.push_back(s.foreground);
  }
  for (const auto& e : data.select("val")) {
    if (e.healthy) val_images.push_back(data.load_sample(e).image);
  }
  const std::size_t c = images[0].dim(0), h = images[0].dim(1), w = images[0].dim(2);
  if (h != cfg.phantom.height || w != cfg.phantom.width) {
    throw PipelineError(kExitIncompatible, "dataset image size " + shape_str(images[0].shape()) +
                                               " differs from the configured phantom size");
  }

  make_dirs(out);
  write_text(out / "run_config.ini", cfg.to_ini());
  DenoiserConfig dn = cfg.denoiser;
  dn.channels = c;
  UNet net(dn, derive_seed(cfg.seed, kSeedInit), h, w);
  const DiffusionConfig dcfg = cfg.diffusion();
  AdamState adam;
  adam.options.lr = static_cast<float>(cfg.lr);
  std::mt19937_64 batch_rng(derive_seed(cfg.seed, kSeedBatches));
  std::mt19937_64 step_rng(derive_seed(cfg.seed, kSeedSteps));
  std::uniform_int_distribution<std::size_t> pick(0, images.size() - 1);
  const std::uint64_t val_seed = derive_seed(cfg.seed, kSeedValidation);

  TrainSummary summary;
  std::string loss_csv = "step,loss\n";
  std::string val_csv = "step,val_l1\n";
  auto record_val = [&](std::size_t step) {
    if (val_images.empty()) return;
    const double err = validation_error(net, val_images, dcfg, val_seed);
    summary.val_errors.emplace_back(step, err);
    val_csv += std::to_string(step) + "," + fmt_g(err) + "\n";
    if (log) *log << "step " << step << " val_l1 " << fmt_g(err) << "\n";
  };
  record_val(0);

  const std::size_t n = cfg.batch_size;
  for (std::size_t step = 1; step <= cfg.train_steps; ++step) {
    Tensor batch(Shape{n, c, h, w});
    std::vector<Tensor> fgs;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t k = pick(batch_rng);
      std::copy(images[k].values().begin(), images[k].values().end(), batch.data() + b * c * h * w);
      fgs.push_back(foregrounds[k]);
    }
    const float loss = training_step(batch, fgs, cfg.mode, cfg.masking, net, dcfg, step_rng);
    if (!std::isfinite(loss)) {
      throw PipelineError(kExitNumeric, "non-finite training loss at step " + std::to_string(step));
    }
    try {
      adam_step(net.parameters(), adam);
    } catch (const NumericError& e) {
      throw PipelineError(kExitNumeric, "at step " + std::to_string(step) + ": " + e.what());
    }
    zero_grads(net.parameters());
    summary.losses.push_back(loss);
    loss_csv += std::to_string(step) + "," + fmt_g(loss) + "\n";
    if (log && cfg.log_every > 0 && step % cfg.log_every == 0) {
      *log << "step " << step << " loss " << fmt_g(loss) << "\n";
    }
    if (cfg.val_every > 0 && step % cfg.val_every == 0 && step != cfg.train_steps) record_val(step);
  }
  if (cfg.train_steps > 0) record_val(cfg.train_steps);

  nlohmann::json listing;
  save_parameters(out, net.parameters(), listing);
  const nlohmann::json meta = {{"format", kCheckpointFormat},
                               {"mode", to_string(cfg.mode)},
                               {"steps_done", cfg.train_steps},
                               {"diffusion_steps", cfg.diffusion_steps},
                               {"channels", c},
                               {"height", h},
                               {"width", w},
                               {"parameter_count", net.parameter_count()},
                               {"parameters", listing},
                               {"config", cfg.to_ini()}};
  write_text(out / "checkpoint.json", meta.dump(2) + "\n");
  write_text(out / "loss.csv", loss_csv);
  write_text(out / "val.csv", val_csv);
  return summary;
}

Checkpoint read_checkpoint_meta(const fs::path& dir) {
  const fs::path p = dir / "checkpoint.json";
  if (!fs::exists(p)) throw PipelineError(kExitMissingInput, "no checkpoint at " + p.string());
  Checkpoint ck;
  ck.meta = read_json(p);
  if (ck.meta.value("format", 0) != kCheckpointFormat) {
    throw PipelineError(kExitIncompatible, "unsupported checkpoint format in " + p.string());
  }
  ck.config.merge_ini(ck.meta.at("config").get<std::string>());
  return ck;
}

UNet load_checkpoint(const fs::path& dir, const RunConfig& cfg) {
  const Checkpoint ck = read_checkpoint_meta(dir);
  const std::size_t t_ckpt = ck.meta.at("diffusion_steps").get<std::size_t>();
  if (t_ckpt != cfg.diffusion_steps) {
    throw PipelineError(kExitIncompatible, "checkpoint was trained with T = " + std::to_string(t_ckpt) +
                                               " but the configuration sets T = " +
                                               std::to_string(cfg.diffusion_steps));
  }
  const DenoiserConfig& a = ck.config.denoiser;
  const DenoiserConfig& b = cfg.denoiser;
  if (a.base_width != b.base_width || a.depth != b.depth || a.time_dim != b.time_dim) {
    throw PipelineError(kExitIncompatible, "denoiser architecture differs from checkpoint " + dir.string());
  }
  DenoiserConfig dn = a;
  dn.channels = ck.meta.at("channels").get<std::size_t>();
  UNet net(dn, 0, ck.meta.at("height").get<std::size_t>(), ck.meta.at("width").get<std::size_t>());
  for (auto& p : net.parameters()) {
    Tensor stored;
    try {
      stored = read_tensor(dir / "params" / (p.name + ".mtsr"));
    } catch (const TensorFileError& e) {
      throw PipelineError(kExitMissingInput, e.what());
    }
    if (stored.shape() != p.value.shape()) {
      throw PipelineError(kExitIncompatible, "parameter " + p.name + " has shape " + shape_str(stored.shape()) +
                                                 ", expected " + shape_str(p.value.shape()));
    }
    std::copy(stored.values().begin(), stored.values().end(), p.value.data());
  }
  return net;
}

// ---- evaluation ------------------------------------------------------------

EvalReport evaluate(const RunConfig& cfg, const fs::path& dataset_dir, const fs::path& out,
                    const std::string& variant, const Reconstructor& reconstruct_fn, std::ostream* log) {
  cfg.validate();
  const Dataset data = Dataset::load(dataset_dir);
  make_dirs(out / "maps");
  write_text(out / "run_config.ini", cfg.to_ini());

  struct Scored {
    DatasetEntry entry;
    Sample sample;
    Tensor scores;
  };
  auto score_split = [&](const std::string& split) {
    std::vector<Scored> v;
    for (const auto& e : data.select(split)) {
      Sample s = data.load_sample(e);
      const Tensor rec = reconstruct_fn(e, as_batch(s.image));
      Tensor rec_img(s.image.shape(), std::vector<float>(rec.values().begin(), rec.values().end()));
      const AnomalyMap raw = anomaly_map(s.image, rec_img, e.id);
      const AnomalyMap post = postprocess(raw, s.foreground, cfg.eval);
      try {
        write_tensor(out / "maps" / (e.id + "_score.mtsr"), post.scores);
        write_pgm(out / "maps" / (e.id + "_score.pgm"), post.scores);
        write_tensor(out / "maps" / (e.id + "_recon.mtsr"), rec_img);
        write_pgm(out / "maps" / (e.id + "_recon.pgm"), rec_img);
      } catch (const TensorFileError& err) {
        throw PipelineError(kExitIo, err.what());
      }
      v.push_back({e, std::move(s), post.scores});
    }
    if (log) *log << "scored " << v.size() << " " << split << " samples\n";
    return v;
  };
  const auto val = score_split("val");
  const auto test = score_split("test");

  auto anomalous_set = [](const std::vector<Scored>& v) {
    ScoredSet set;
    for (const auto& s : v) {
      if (s.entry.healthy) continue;
      set.scores.push_back(s.scores);
      set.truths.push_back(s.sample.anomaly_mask);
      set.regions.push_back(s.sample.foreground);
    }
    return set;
  };
  const ScoredSet val_set = anomalous_set(val);
  const ScoredSet test_set = anomalous_set(test);
  if (test_set.scores.empty()) throw PipelineError(kExitMissingInput, "dataset has no anomalous test samples");
  const ScoredSet& selection = cfg.threshold_source == "test" ? test_set : val_set;
  if (selection.scores.empty()) {
    throw PipelineError(kExitMissingInput, "no anomalous samples in the " + cfg.threshold_source + " split");
  }
  const DiceSummary chosen = best_threshold_dice(selection, cfg.eval);
  const auto threshold = static_cast<float>(chosen.threshold);
  const DiceSummary test_dice = dice_at_threshold(test_set, threshold, cfg.eval);

  EvalReport r;
  r.test = {variant, "test", test_dice.mean, test_dice.stddev, auprc(test_set), chosen.threshold, test_dice.n_scored};
  if (!val_set.scores.empty()) {
    const DiceSummary val_dice = dice_at_threshold(val_set, threshold, cfg.eval);
    r.val = {variant, "val", val_dice.mean, val_dice.stddev, auprc(val_set), chosen.threshold, val_dice.n_scored};
  }

  double healthy_sum = 0.0, lesion_sum = 0.0;
  std::size_t healthy_n = 0, lesion_n = 0;
  nlohmann::json per_sample = nlohmann::json::array();
  std::size_t anomalous_k = 0;
  for (const auto& s : test) {
    if (s.entry.healthy) {
      const Tensor region = erode(s.sample.foreground, cfg.eval.erosion_iterations);
      for (std::size_t i = 0; i < region.numel(); ++i) {
        if (region[i] != 0.0f) {
          healthy_sum += s.scores[i];
          ++healthy_n;
        }
      }
      per_sample.push_back({{"id", s.entry.id}, {"healthy", true}});
    } else {
      for (std::size_t i = 0; i < s.scores.numel(); ++i) {
        if (s.sample.anomaly_mask[i] != 0.0f) {
          lesion_sum += s.scores[i];
          ++lesion_n;
        }
      }
      nlohmann::json j = {{"id", s.entry.id}, {"healthy", false}};
      if (anomalous_k < test_dice.per_sample.size()) j["dice"] = test_dice.per_sample[anomalous_k];
      ++anomalous_k;
      per_sample.push_back(std::move(j));
    }
  }
  r.healthy_mean_score = healthy_n ? healthy_sum / static_cast<double>(healthy_n) : 0.0;
  r.lesion_mean_score = lesion_n ? lesion_sum / static_cast<double>(lesion_n) : 0.0;

  std::vector<MetricsRow> rows;
  if (!val_set.scores.empty()) rows.push_back(r.val);
  rows.push_back(r.test);
  try {
    write_metrics_csv(out / "metrics.csv", rows);
  } catch (const std::runtime_error& e) {
    throw PipelineError(kExitIo, e.what());
  }
  r.summary = {{"variant", variant},
               {"threshold_source", cfg.threshold_source},
               {"threshold", chosen.threshold},
               {"selection_dice", chosen.mean},
               {"test", r.test.to_json()},
               {"healthy_mean_score", r.healthy_mean_score},
               {"lesion_mean_score", r.lesion_mean_score},
               {"healthy_test_samples", healthy_n ? nlohmann::json(true) : nlohmann::json(false)},
               {"per_sample", per_sample},
               {"test_split", data.test_fingerprint()}};
  if (!val_set.scores.empty()) r.summary["val"] = r.val.to_json();
  write_text(out / "metrics.json", r.summary.dump(2) + "\n");
  return r;
}

EvalReport evaluate_checkpoint(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& dataset,
                               const fs::path& out, std::ostream* log) {
  UNet net = load_checkpoint(checkpoint, cfg);
  const Checkpoint ck = read_checkpoint_meta(checkpoint);
  const DiffusionConfig dcfg = cfg.diffusion();
  const std::uint64_t base = derive_seed(cfg.seed, kSeedInference);
  Reconstructor rec = [&](const DatasetEntry& e, const Tensor& z) {
    std::mt19937_64 rng(derive_seed(base, e.index));
    return reconstruct(z, net, dcfg, rng);
  };
  return evaluate(cfg, dataset, out, ck.meta.at("mode").get<std::string>(), rec, log);
}

std::vector<MetricsRow> compare(const std::vector<fs::path>& runs, const fs::path& out) {
  if (runs.size() < 2) throw PipelineError(kExitUsage, "compare needs at least two evaluated runs");
  std::vector<MetricsRow> rows;
  nlohmann::json fingerprint;
  for (const auto& dir : runs) {
    const fs::path p = dir / "metrics.json";
    if (!fs::exists(p)) throw PipelineError(kExitMissingInput, "no evaluation results at " + p.string());
    const nlohmann::json j = read_json(p);
    if (fingerprint.is_null()) {
      fingerprint = j.at("test_split");
    } else if (j.at("test_split") != fingerprint) {
      throw PipelineError(kExitIncompatible, "test split of " + dir.string() + " differs from " + runs[0].string());
    }
    rows.push_back(MetricsRow::from_json(j.at("test")));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const MetricsRow& a, const MetricsRow& b) { return a.dice_mean > b.dice_mean; });
  make_dirs(out);
  try {
    write_metrics_csv(out / "comparison.csv", rows);
  } catch (const std::runtime_error& e) {
    throw PipelineError(kExitIo, e.what());
  }
  nlohmann::json table = nlohmann::json::array();
  for (const auto& r : rows) {
    table.push_back({{"variant", r.variant}, {"DICE", r.dice_mean}, {"DICE_std", r.dice_std}, {"AUPRC", r.auprc}});
  }
  write_text(out / "comparison.json", nlohmann::json{{"rows", table}, {"test_split", fingerprint}}.dump(2) + "\n");
  return rows;
}

}  // namespace mddpm
