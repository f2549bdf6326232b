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

#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "mddpm/pipeline.hpp"
#include "mddpm/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace mddpm;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_seed = true) {
  cmd->add_option("--config", f.config, "INI configuration file");
  if (with_seed) cmd->add_option("--seed", f.seed, "global seed");
  cmd->add_option("--out", f.out, "output directory")->required();
  cmd->add_option("--set", f.overrides, "override, section.key=value (repeatable)");
}

void apply(RunConfig& cfg, const CommonFlags& f) {
  if (!f.config.empty()) cfg.merge_file(f.config);
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed) cfg.seed = *f.seed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked diffusion anomaly detection on synthetic phantoms"};
  app.require_subcommand(1);

  CommonFlags gen_f, train_f, eval_f;
  std::string mode, train_data, eval_data, checkpoint, compare_out;
  std::vector<std::string> runs;

  auto* gen = app.add_subcommand("generate", "write a phantom dataset");
  add_common(gen, gen_f);

  auto* trn = app.add_subcommand("train", "train a denoiser on the healthy split");
  add_common(trn, train_f);
  trn->add_option("--dataset", train_data, "dataset directory")->required();
  trn->add_option("--mode", mode, "masking mode")->check(CLI::IsMember({"none", "ipm", "fpm", "fpm-cm"}));

  auto* ev = app.add_subcommand("evaluate", "score val/test samples and report metrics");
  add_common(ev, eval_f);
  ev->add_option("--dataset", eval_data, "dataset directory")->required();
  ev->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();

  auto* cmp = app.add_subcommand("compare", "merge evaluation results into one table");
  cmp->add_option("--out", compare_out, "output directory")->required();
  cmp->add_option("runs", runs, "evaluation directories")->required()->expected(2, -1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    RunConfig cfg;
    if (gen->parsed()) {
      apply(cfg, gen_f);
      cfg.validate();
      generate_dataset(cfg, gen_f.out);
      std::cerr << "dataset written to " << gen_f.out << "\n";
    } else if (trn->parsed()) {
      apply(cfg, train_f);
      if (!mode.empty()) cfg.mode = masking_mode_from_string(mode);
      cfg.validate();
      train(cfg, train_data, train_f.out, &std::cerr);
      std::cerr << "checkpoint written to " << train_f.out << "\n";
    } else if (ev->parsed()) {
      cfg = read_checkpoint_meta(checkpoint).config;
      apply(cfg, eval_f);
      cfg.validate();
      const EvalReport r = evaluate_checkpoint(cfg, checkpoint, eval_data, eval_f.out, &std::cerr);
      std::cerr << "test dice " << r.test.dice_mean << " auprc " << r.test.auprc << "\n";
    } else if (cmp->parsed()) {
      std::vector<fs::path> dirs(runs.begin(), runs.end());
      compare(dirs, compare_out);
      std::cerr << "comparison written to " << compare_out << "\n";
    }
  } catch (const PipelineError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TensorFileError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}
