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

#include "mddpm/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace mddpm {

namespace {

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

double parse_double(const std::string& key, const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + s + "'");
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

template <typename E, typename F>
E parse_enum(const std::string& key, const std::string& s, F&& from) {
  try {
    return from(s);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

#define SIZE_FIELD(name, member)                                                          \
  Field {                                                                                 \
    name, [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.member)); },   \
        [](RunConfig& c, const std::string& v) { c.member = parse_u64(name, v); }         \
  }
#define DOUBLE_FIELD(name, member)                                                    \
  Field {                                                                             \
    name, [](const RunConfig& c) { return fmt(static_cast<double>(c.member)); },      \
        [](RunConfig& c, const std::string& v) { c.member = parse_double(name, v); }  \
  }
#define BOOL_FIELD(name, member)                                                    \
  Field {                                                                           \
    name, [](const RunConfig& c) { return fmt(c.member); },                         \
        [](RunConfig& c, const std::string& v) { c.member = parse_bool(name, v); }  \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      SIZE_FIELD("run.seed", seed),
      Field{"run.mode", [](const RunConfig& c) { return to_string(c.mode); },
            [](RunConfig& c, const std::string& v) {
              c.mode = parse_enum<MaskingMode>("run.mode", v, masking_mode_from_string);
            }},

      SIZE_FIELD("data.n_train", n_train),
      SIZE_FIELD("data.n_val_healthy", n_val_healthy),
      SIZE_FIELD("data.n_val_anomalous", n_val_anomalous),
      SIZE_FIELD("data.n_test_anomalous", n_test_anomalous),
      SIZE_FIELD("data.n_test_healthy", n_test_healthy),
      SIZE_FIELD("data.phantom_height", phantom.height),
      SIZE_FIELD("data.phantom_width", phantom.width),
      SIZE_FIELD("data.phantom_ellipses_min", phantom.ellipses_min),
      SIZE_FIELD("data.phantom_ellipses_max", phantom.ellipses_max),
      DOUBLE_FIELD("data.phantom_tissue_min", phantom.tissue_min),
      DOUBLE_FIELD("data.phantom_tissue_max", phantom.tissue_max),
      DOUBLE_FIELD("data.phantom_structure_jitter", phantom.structure_jitter),
      DOUBLE_FIELD("data.phantom_rim_intensity", phantom.rim_intensity),
      DOUBLE_FIELD("data.phantom_texture_amplitude", phantom.texture_amplitude),
      SIZE_FIELD("data.phantom_seed", phantom.seed),
      SIZE_FIELD("data.anomaly_blobs_min", anomaly.blobs_min),
      SIZE_FIELD("data.anomaly_blobs_max", anomaly.blobs_max),
      DOUBLE_FIELD("data.anomaly_radius_min", anomaly.radius_min),
      DOUBLE_FIELD("data.anomaly_radius_max", anomaly.radius_max),
      DOUBLE_FIELD("data.anomaly_offset_min", anomaly.offset_min),
      DOUBLE_FIELD("data.anomaly_offset_max", anomaly.offset_max),
      BOOL_FIELD("data.anomaly_allow_hypo", anomaly.allow_hypo),
      SIZE_FIELD("data.anomaly_margin", anomaly.margin),
      SIZE_FIELD("data.anomaly_seed", anomaly.seed),

      Field{"diffusion.schedule", [](const RunConfig& c) { return to_string(c.schedule); },
            [](RunConfig& c, const std::string& v) {
              c.schedule = parse_enum<ScheduleKind>("diffusion.schedule", v, schedule_kind_from_string);
            }},
      SIZE_FIELD("diffusion.steps", diffusion_steps),
      DOUBLE_FIELD("diffusion.beta_start", beta_start),
      DOUBLE_FIELD("diffusion.beta_end", beta_end),
      SIZE_FIELD("diffusion.t_fix", t_fix),
      Field{"diffusion.noise", [](const RunConfig& c) { return to_string(c.noise); },
            [](RunConfig& c, const std::string& v) {
              c.noise = parse_enum<NoiseKind>("diffusion.noise", v, noise_kind_from_string);
            }},
      SIZE_FIELD("diffusion.simplex_octaves", simplex.octaves),
      DOUBLE_FIELD("diffusion.simplex_wavelength", simplex.base_wavelength),
      DOUBLE_FIELD("diffusion.simplex_persistence", simplex.persistence),
      SIZE_FIELD("diffusion.inference_draws", inference_draws),

      SIZE_FIELD("denoiser.base_width", denoiser.base_width),
      SIZE_FIELD("denoiser.depth", denoiser.depth),
      SIZE_FIELD("denoiser.time_dim", denoiser.time_dim),

      DOUBLE_FIELD("masking.ratio_min", masking.ratio_min),
      DOUBLE_FIELD("masking.ratio_max", masking.ratio_max),
      SIZE_FIELD("masking.n_min", masking.n_min),
      SIZE_FIELD("masking.n_max", masking.n_max),
      SIZE_FIELD("masking.side_min", masking.side_min),
      SIZE_FIELD("masking.side_max", masking.side_max),
      SIZE_FIELD("masking.max_attempts", masking.max_attempts),
      BOOL_FIELD("masking.mask_dc", masking.mask_dc),

      SIZE_FIELD("train.steps", train_steps),
      SIZE_FIELD("train.batch_size", batch_size),
      DOUBLE_FIELD("train.lr", lr),
      SIZE_FIELD("train.log_every", log_every),
      SIZE_FIELD("train.val_every", val_every),

      SIZE_FIELD("eval.median_kernel", eval.median_kernel),
      SIZE_FIELD("eval.erosion_iterations", eval.erosion_iterations),
      Field{"eval.grid", [](const RunConfig& c) { return to_string(c.eval.grid); },
            [](RunConfig& c, const std::string& v) {
              c.eval.grid = parse_enum<ThresholdGrid>("eval.grid", v, threshold_grid_from_string);
            }},
      SIZE_FIELD("eval.grid_size", eval.grid_size),
      Field{"eval.empty_pairs", [](const RunConfig& c) { return to_string(c.eval.empty_pairs); },
            [](RunConfig& c, const std::string& v) {
              c.eval.empty_pairs = parse_enum<EmptyPairPolicy>("eval.empty_pairs", v, empty_pair_policy_from_string);
            }},
      Field{"eval.threshold_source", [](const RunConfig& c) { return c.threshold_source; },
            [](RunConfig& c, const std::string& v) {
              if (v != "val" && v != "test") throw ConfigError("eval.threshold_source: expected val or test, got '" + v + "'");
              c.threshold_source = v;
            }},
  };
  return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (key == f.key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::set(const std::string& dotted_key, const std::string& value) {
  find_field(dotted_key).set(*this, value);
}

std::string RunConfig::get(const std::string& dotted_key) const { return find_field(dotted_key).get(*this); }

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.key);
  return out;
}

void RunConfig::merge_ini(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config key '" + section + "' is outside any section");
    for (const auto& [key, value] : body) set(section + "." + key, value.data());
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  merge_ini(ss.str());
}

std::string RunConfig::to_ini() const {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    const std::string key = f.key;
    const auto dot = key.find('.');
    if (key.substr(0, dot) != section) {
      if (!section.empty()) out += "\n";
      section = key.substr(0, dot);
      out += "[" + section + "]\n";
    }
    out += key.substr(dot + 1) + " = " + f.get(*this) + "\n";
  }
  return out;
}

void RunConfig::validate() const {
  auto wrap = [](const char* key, auto&& check) {
    try {
      check();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string(key) + ": " + e.what());
    }
  };
  wrap("data", [&] {
    phantom.validate();
    anomaly.validate();
  });
  if (n_train == 0) throw ConfigError("data.n_train must be >= 1");
  if (n_test_anomalous == 0) throw ConfigError("data.n_test_anomalous must be >= 1");
  if (threshold_source == "val" && n_val_anomalous == 0) {
    throw ConfigError("data.n_val_anomalous must be >= 1 when eval.threshold_source = val");
  }
  wrap("diffusion", [&] { diffusion().validate(); });
  wrap("masking", [&] { masking.validate(); });
  wrap("eval", [&] { eval.validate(); });
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  const std::size_t stride = std::size_t{1} << denoiser.depth;
  if (phantom.height % stride != 0 || phantom.width % stride != 0) {
    throw ConfigError("denoiser.depth: image size must be divisible by 2^depth");
  }
}

DiffusionConfig RunConfig::diffusion() const {
  DiffusionConfig d;
  try {
    d.schedule = NoiseSchedule::build(schedule, diffusion_steps, beta_start, beta_end);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("diffusion: ") + e.what());
  }
  d.t_fix = t_fix;
  d.noise = noise;
  d.simplex = simplex;
  d.inference_draws = inference_draws;
  return d;
}

}  // namespace mddpm
