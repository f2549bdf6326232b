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

#include "mddpm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mddpm {

std::string to_string(ThresholdGrid g) { return g == ThresholdGrid::kUniform ? "uniform" : "distinct"; }

ThresholdGrid threshold_grid_from_string(const std::string& s) {
  if (s == "uniform") return ThresholdGrid::kUniform;
  if (s == "distinct") return ThresholdGrid::kDistinct;
  throw std::invalid_argument("unknown threshold grid '" + s + "'");
}

std::string to_string(EmptyPairPolicy p) { return p == EmptyPairPolicy::kScoreOne ? "one" : "skip"; }

EmptyPairPolicy empty_pair_policy_from_string(const std::string& s) {
  if (s == "one") return EmptyPairPolicy::kScoreOne;
  if (s == "skip") return EmptyPairPolicy::kSkip;
  throw std::invalid_argument("unknown empty-pair policy '" + s + "'");
}

void EvalConfig::validate() const {
  if (median_kernel == 0 || median_kernel % 2 == 0) {
    throw std::invalid_argument("median kernel must be odd, got " + std::to_string(median_kernel));
  }
  if (grid == ThresholdGrid::kUniform && grid_size == 0) throw std::invalid_argument("grid size must be >= 1");
}

namespace {

void require_2d(const Tensor& t, const char* what) {
  if (t.ndim() != 2) throw ShapeError(std::string(what) + " expects [H,W], got " + shape_str(t.shape()));
}

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// Symmetric reflection: -1 -> 0, n -> n-1.
std::size_t reflect(long i, std::size_t n) {
  const long m = static_cast<long>(n);
  if (m == 1) return 0;
  const long period = 2 * m;
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < m ? i : period - 1 - i);
}

}  // namespace

AnomalyMap anomaly_map(const Tensor& z, const Tensor& z_rec, std::string source_id) {
  require_same(z, z_rec, "anomaly_map");
  if (z.ndim() != 2 && z.ndim() != 3) throw ShapeError("anomaly_map expects [H,W] or [C,H,W]");
  const std::size_t c = z.ndim() == 3 ? z.dim(0) : 1;
  const std::size_t h = z.dim(z.ndim() - 2), w = z.dim(z.ndim() - 1);
  Tensor out(Shape{h, w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h * w; ++i) out[i] += std::fabs(z[ch * h * w + i] - z_rec[ch * h * w + i]);
  }
  if (c > 1) {
    for (float& v : out.values()) v /= static_cast<float>(c);
  }
  return {out, false, std::move(source_id)};
}

Tensor median_filter(const Tensor& map, std::size_t kernel) {
  require_2d(map, "median_filter");
  if (kernel % 2 == 0) throw std::invalid_argument("median kernel must be odd");
  const std::size_t h = map.dim(0), w = map.dim(1);
  const long r = static_cast<long>(kernel / 2);
  Tensor out(Shape{h, w});
  std::vector<float> window(kernel * kernel);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      std::size_t k = 0;
      for (long dy = -r; dy <= r; ++dy) {
        const std::size_t yy = reflect(static_cast<long>(y) + dy, h);
        for (long dx = -r; dx <= r; ++dx) window[k++] = map[yy * w + reflect(static_cast<long>(x) + dx, w)];
      }
      auto mid = window.begin() + static_cast<long>(window.size() / 2);
      std::nth_element(window.begin(), mid, window.end());
      out[y * w + x] = *mid;
    }
  }
  return out;
}

Tensor erode(const Tensor& mask, std::size_t iterations) {
  require_2d(mask, "erode");
  const std::size_t h = mask.dim(0), w = mask.dim(1);
  Tensor cur = mask.clone();
  for (float& v : cur.values()) v = v != 0.0f ? 1.0f : 0.0f;
  for (std::size_t it = 0; it < iterations; ++it) {
    Tensor next(Shape{h, w});
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        bool keep = true;
        for (int dy = -1; dy <= 1 && keep; ++dy) {
          for (int dx = -1; dx <= 1 && keep; ++dx) {
            const long yy = static_cast<long>(y) + dy, xx = static_cast<long>(x) + dx;
            keep = yy >= 0 && xx >= 0 && yy < static_cast<long>(h) && xx < static_cast<long>(w) &&
                   cur[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)] != 0.0f;
          }
        }
        next[y * w + x] = keep ? 1.0f : 0.0f;
      }
    }
    cur = next;
  }
  return cur;
}

AnomalyMap postprocess(const AnomalyMap& m, const Tensor& foreground, const EvalConfig& cfg) {
  cfg.validate();
  require_2d(m.scores, "postprocess");
  require_same(m.scores, foreground, "postprocess");
  Tensor filtered = median_filter(m.scores, cfg.median_kernel);
  const Tensor region = erode(foreground, cfg.erosion_iterations);
  for (std::size_t i = 0; i < filtered.numel(); ++i) {
    if (region[i] == 0.0f) filtered[i] = 0.0f;
  }
  return {filtered, true, m.source_id};
}

double dice(const Tensor& pred, const Tensor& truth) {
  require_same(pred, truth, "dice");
  std::size_t p = 0, t = 0, both = 0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const bool a = pred[i] != 0.0f, b = truth[i] != 0.0f;
    p += a;
    t += b;
    both += a && b;
  }
  if (p + t == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + t);
}

Tensor binarize(const Tensor& scores, float threshold, const Tensor& region) {
  if (region.defined()) require_same(scores, region, "binarize");
  Tensor out(scores.shape());
  for (std::size_t i = 0; i < scores.numel(); ++i) {
    const bool inside = !region.defined() || region[i] != 0.0f;
    out[i] = inside && scores[i] >= threshold ? 1.0f : 0.0f;
  }
  return out;
}

namespace {

void check_set(const ScoredSet& set) {
  if (set.scores.empty()) throw std::invalid_argument("evaluation set is empty");
  if (set.truths.size() != set.scores.size()) throw std::invalid_argument("scores and truths differ in count");
  if (!set.regions.empty() && set.regions.size() != set.scores.size()) {
    throw std::invalid_argument("regions and scores differ in count");
  }
  for (std::size_t k = 0; k < set.scores.size(); ++k) {
    require_same(set.scores[k], set.truths[k], "evaluation set");
    if (!set.regions.empty()) require_same(set.scores[k], set.regions[k], "evaluation set");
  }
}

Tensor region_of(const ScoredSet& set, std::size_t k) {
  return set.regions.empty() ? Tensor() : set.regions[k];
}

template <typename F>
void for_each_scored_pixel(const ScoredSet& set, F&& f) {
  for (std::size_t k = 0; k < set.scores.size(); ++k) {
    const Tensor& s = set.scores[k];
    for (std::size_t i = 0; i < s.numel(); ++i) {
      if (set.regions.empty() || set.regions[k][i] != 0.0f) f(s[i], set.truths[k][i]);
    }
  }
}

}  // namespace

std::vector<float> threshold_grid(const ScoredSet& set, const EvalConfig& cfg) {
  check_set(set);
  std::vector<float> values;
  for_each_scored_pixel(set, [&](float s, float) { values.push_back(s); });
  if (values.empty()) return {0.0f};
  std::sort(values.begin(), values.end());
  if (cfg.grid == ThresholdGrid::kDistinct) {
    values.erase(std::unique(values.begin(), values.end()), values.end());
    return values;
  }
  const double lo = values.front(), hi = values.back();
  if (cfg.grid_size == 1 || lo == hi) return {static_cast<float>(lo)};
  std::vector<float> grid(cfg.grid_size);
  for (std::size_t k = 0; k < cfg.grid_size; ++k) {
    grid[k] = static_cast<float>(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(cfg.grid_size - 1));
  }
  grid.back() = static_cast<float>(hi);
  return grid;
}

DiceSummary dice_at_threshold(const ScoredSet& set, float threshold, const EvalConfig& cfg) {
  check_set(set);
  DiceSummary out;
  out.threshold = threshold;
  for (std::size_t k = 0; k < set.scores.size(); ++k) {
    const Tensor pred = binarize(set.scores[k], threshold, region_of(set, k));
    const bool empty_pair = std::none_of(pred.values().begin(), pred.values().end(), [](float v) { return v != 0.0f; }) &&
                            std::none_of(set.truths[k].values().begin(), set.truths[k].values().end(),
                                         [](float v) { return v != 0.0f; });
    if (empty_pair && cfg.empty_pairs == EmptyPairPolicy::kSkip) continue;
    out.per_sample.push_back(dice(pred, set.truths[k]));
  }
  out.n_scored = out.per_sample.size();
  if (out.n_scored == 0) return out;
  double sum = 0.0;
  for (double d : out.per_sample) sum += d;
  out.mean = sum / static_cast<double>(out.n_scored);
  double var = 0.0;
  for (double d : out.per_sample) var += (d - out.mean) * (d - out.mean);
  out.stddev = std::sqrt(var / static_cast<double>(out.n_scored));
  return out;
}

DiceSummary best_threshold_dice(const ScoredSet& set, const EvalConfig& cfg) {
  check_set(set);
  const bool any_truth = std::any_of(set.truths.begin(), set.truths.end(), [](const Tensor& t) {
    return std::any_of(t.values().begin(), t.values().end(), [](float v) { return v != 0.0f; });
  });
  if (!any_truth) throw std::invalid_argument("best_threshold_dice needs at least one nonempty truth mask");
  DiceSummary best;
  bool have = false;
  for (float thr : threshold_grid(set, cfg)) {
    DiceSummary cur = dice_at_threshold(set, thr, cfg);
    if (!have || cur.mean > best.mean) {
      best = std::move(cur);
      have = true;
    }
  }
  return best;
}

double auprc(std::span<const float> scores, std::span<const float> truth) {
  if (scores.size() != truth.size()) throw std::invalid_argument("auprc: scores and truth differ in length");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t positives = 0;
  for (float t : truth) positives += t != 0.0f;
  if (positives == 0) throw std::invalid_argument("auprc needs at least one positive pixel");
  const double p = static_cast<double>(positives);
  double area = 0.0;
  std::size_t tp = 0, fp = 0, tp_prev = 0;
  for (std::size_t i = 0; i < order.size();) {
    const float v = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == v; ++i) {
      if (truth[order[i]] != 0.0f) ++tp; else ++fp;
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += precision * (static_cast<double>(tp - tp_prev) / p);
    tp_prev = tp;
  }
  return area;
}

double auprc(const ScoredSet& set) {
  check_set(set);
  std::vector<float> s, t;
  for_each_scored_pixel(set, [&](float score, float truth) {
    s.push_back(score);
    t.push_back(truth);
  });
  return auprc(s, t);
}

nlohmann::json MetricsRow::to_json() const {
  return {{"variant", variant},     {"split", split},         {"dice_mean", dice_mean}, {"dice_std", dice_std},
          {"auprc", auprc},         {"threshold", threshold}, {"n_samples", n_samples}};
}

MetricsRow MetricsRow::from_json(const nlohmann::json& j) {
  MetricsRow r;
  r.variant = j.at("variant").get<std::string>();
  r.split = j.at("split").get<std::string>();
  r.dice_mean = j.at("dice_mean").get<double>();
  r.dice_std = j.at("dice_std").get<double>();
  r.auprc = j.at("auprc").get<double>();
  r.threshold = j.at("threshold").get<double>();
  r.n_samples = j.at("n_samples").get<std::size_t>();
  return r;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << "variant,split,dice_mean,dice_std,auprc,threshold,n_samples\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%.17g,%.17g,%.17g,%zu\n", r.variant.c_str(), r.split.c_str(),
                  r.dice_mean, r.dice_std, r.auprc, r.threshold, r.n_samples);
    os << buf;
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != "variant,split,dice_mean,dice_std,auprc,threshold,n_samples") {
    throw std::runtime_error("unexpected metrics header in " + path.string());
  }
  std::vector<MetricsRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> f;
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 7) throw std::runtime_error("malformed metrics row in " + path.string() + ": " + line);
    MetricsRow r;
    r.variant = f[0];
    r.split = f[1];
    r.dice_mean = std::stod(f[2]);
    r.dice_std = std::stod(f[3]);
    r.auprc = std::stod(f[4]);
    r.threshold = std::stod(f[5]);
    r.n_samples = std::stoul(f[6]);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace mddpm
