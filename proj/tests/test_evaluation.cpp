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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "mddpm/evaluation.hpp"
#include "support/oracles.hpp"

using namespace mddpm;

namespace {

Tensor mask_from(const std::vector<int>& v, std::size_t h, std::size_t w) {
  Tensor t(Shape{h, w});
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<float>(v[i]);
  return t;
}

std::vector<int> to_ints(const Tensor& t) {
  std::vector<int> v(t.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = t[i] != 0.0f;
  return v;
}

// Random instance with a blob-shaped truth per sample and scores that
// partially track it, so the sweep has a nontrivial optimum.
oracle::SweepInstance random_instance(std::mt19937_64& rng, std::size_t n, std::size_t side) {
  oracle::SweepInstance in;
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::uniform_int_distribution<int> c(1, static_cast<int>(side) - 2);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<float> s(side * side);
    std::vector<int> t(side * side), r(side * side);
    const int cy = c(rng), cx = c(rng);
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) {
        const std::size_t i = y * side + x;
        t[i] = std::abs(static_cast<int>(y) - cy) <= 1 && std::abs(static_cast<int>(x) - cx) <= 1;
        r[i] = u(rng) < 0.9f || t[i];
        s[i] = 0.6f * u(rng) + (t[i] ? 0.4f * u(rng) + 0.2f : 0.0f);
      }
    in.scores.push_back(s);
    in.truths.push_back(t);
    in.regions.push_back(r);
  }
  return in;
}

ScoredSet to_set(const oracle::SweepInstance& in, std::size_t side) {
  ScoredSet set;
  for (std::size_t k = 0; k < in.scores.size(); ++k) {
    Tensor s(Shape{side, side});
    for (std::size_t i = 0; i < side * side; ++i) s[i] = in.scores[k][i];
    set.scores.push_back(s);
    set.truths.push_back(mask_from(in.truths[k], side, side));
    set.regions.push_back(mask_from(in.regions[k], side, side));
  }
  return set;
}

}  // namespace

TEST(AnomalyMap, IdenticalImagesGiveZero) {
  std::mt19937_64 rng(1);
  const Tensor z = oracle::random_tensor({1, 4, 4}, rng);
  const AnomalyMap m = anomaly_map(z, z, "a");
  EXPECT_EQ(m.scores.shape(), (Shape{4, 4}));
  EXPECT_EQ(m.source_id, "a");
  EXPECT_FALSE(m.postprocessed);
  for (float v : m.scores.values()) EXPECT_EQ(v, 0.0f);
}

TEST(AnomalyMap, ConstantShiftGivesConstantMap) {
  std::mt19937_64 rng(2);
  const Tensor z = oracle::random_tensor({1, 4, 4}, rng, 0.0f, 0.5f);
  Tensor r(z.shape());
  for (std::size_t i = 0; i < 16; ++i) r[i] = z[i] + 0.3f;
  const AnomalyMap m = anomaly_map(z, r);
  for (float v : m.scores.values()) EXPECT_NEAR(v, 0.3f, 1e-6);
}

TEST(AnomalyMap, MixedSignsAreAbsoluteAndChannelMeaned) {
  std::mt19937_64 rng(3);
  const Tensor z = oracle::random_tensor({2, 3, 3}, rng), r = oracle::random_tensor({2, 3, 3}, rng);
  const AnomalyMap m = anomaly_map(z, r);
  for (std::size_t i = 0; i < 9; ++i) {
    const double ref = 0.5 * (std::abs(static_cast<double>(z[i]) - r[i]) + std::abs(static_cast<double>(z[9 + i]) - r[9 + i]));
    EXPECT_NEAR(m.scores[i], ref, 1e-6);
  }
  EXPECT_THROW(anomaly_map(z, Tensor(Shape{2, 3, 4})), std::invalid_argument);
}

TEST(Postprocess, MedianRemovesIsolatedSpike) {
  const Tensor m(Shape{3, 3}, {0, 0, 0, 0, 9, 0, 0, 0, 0});
  EXPECT_EQ(median_filter(m, 3)[4], 0.0f);
}

TEST(Postprocess, MedianMatchesReflectedWindowOracle) {
  std::mt19937_64 rng(4);
  const Tensor m = oracle::random_tensor({6, 7}, rng, 0.0f, 1.0f);
  const Tensor f = median_filter(m, 5);
  auto reflect = [](long i, long n) { return i < 0 ? -i - 1 : (i >= n ? 2 * n - i - 1 : i); };
  for (long y = 0; y < 6; ++y)
    for (long x = 0; x < 7; ++x) {
      std::vector<float> win;
      for (long dy = -2; dy <= 2; ++dy)
        for (long dx = -2; dx <= 2; ++dx) win.push_back(m[static_cast<std::size_t>(reflect(y + dy, 6) * 7 + reflect(x + dx, 7))]);
      std::nth_element(win.begin(), win.begin() + 12, win.end());
      EXPECT_EQ(f[static_cast<std::size_t>(y * 7 + x)], win[12]);
    }
}

TEST(Postprocess, ConstantMapIsFixedPoint) {
  const Tensor c(Shape{8, 8}, 0.4f);
  const Tensor fg(Shape{8, 8}, 1.0f);
  EvalConfig cfg;
  cfg.erosion_iterations = 0;
  const AnomalyMap once = postprocess(AnomalyMap{c, false, "c"}, fg, cfg);
  const AnomalyMap twice = postprocess(once, fg, cfg);
  EXPECT_TRUE(once.postprocessed);
  for (std::size_t i = 0; i < 64; ++i) {
    EXPECT_EQ(once.scores[i], 0.4f);
    EXPECT_EQ(twice.scores[i], 0.4f);
  }
}

TEST(Postprocess, ErosionRemovesBandOfThree) {
  const Tensor fg(Shape{12, 10}, 1.0f);
  const Tensor e = erode(fg, 3);
  for (std::size_t y = 0; y < 12; ++y)
    for (std::size_t x = 0; x < 10; ++x) {
      const bool inner = y >= 3 && y < 9 && x >= 3 && x < 7;
      EXPECT_EQ(e[y * 10 + x], inner ? 1.0f : 0.0f) << y << "," << x;
    }
}

TEST(Postprocess, ScoresOutsideErodedForegroundAreZero) {
  const Tensor s(Shape{10, 10}, 1.0f);
  const Tensor fg(Shape{10, 10}, 1.0f);
  const AnomalyMap out = postprocess(AnomalyMap{s, false, ""}, fg, EvalConfig{});
  const Tensor eroded = erode(fg, 3);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(out.scores[i], eroded[i] != 0.0f ? 1.0f : 0.0f);
}

TEST(EvalConfigCheck, EvenKernelRejected) {
  EvalConfig cfg;
  cfg.median_kernel = 4;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_THROW(median_filter(Tensor(Shape{3, 3}), 2), std::invalid_argument);
}

TEST(Dice, HandCases) {
  const Tensor a = mask_from({1, 1, 0, 0}, 2, 2), b = mask_from({0, 0, 1, 1}, 2, 2);
  EXPECT_EQ(dice(a, a), 1.0);
  EXPECT_EQ(dice(a, b), 0.0);
  EXPECT_EQ(dice(Tensor(Shape{2, 2}), Tensor(Shape{2, 2})), 1.0);
  // |P| = 4, |T| = 8, overlap 2.
  const Tensor p = mask_from({1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0}, 3, 4);
  const Tensor t = mask_from({0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0}, 3, 4);
  EXPECT_DOUBLE_EQ(dice(p, t), 1.0 / 3.0);
}

TEST(Dice, SymmetricAndMatchesOracle) {
  std::mt19937_64 rng(5);
  std::bernoulli_distribution bit(0.3);
  for (int k = 0; k < 100; ++k) {
    std::vector<int> p(36), t(36);
    for (auto& v : p) v = bit(rng);
    for (auto& v : t) v = bit(rng);
    const Tensor tp = mask_from(p, 6, 6), tt = mask_from(t, 6, 6);
    EXPECT_EQ(dice(tp, tt), dice(tt, tp));
    EXPECT_DOUBLE_EQ(dice(tp, tt), oracle::dice_brute(p, t));
  }
}

TEST(BestThreshold, PerfectScoresPickLowestThresholdAboveZero) {
  const Tensor truth = mask_from({0, 1, 1, 0, 0, 1, 0, 0, 0}, 3, 3);
  ScoredSet set{{truth.clone()}, {truth}, {}};
  const DiceSummary s = best_threshold_dice(set, EvalConfig{});
  EXPECT_EQ(s.mean, 1.0);
  const std::vector<float> grid = threshold_grid(set, EvalConfig{});
  ASSERT_EQ(grid.size(), 100u);
  EXPECT_EQ(s.threshold, grid[1]);  // first grid value in (0, 1]
  EXPECT_GT(s.threshold, 0.0);
}

TEST(BestThreshold, AllZeroScoresPredictWholeRegion) {
  const Tensor truth = mask_from({0, 1, 1, 0, 0, 1, 0, 0, 0}, 3, 3);
  const Tensor region = mask_from({1, 1, 1, 1, 1, 1, 0, 0, 0}, 3, 3);
  ScoredSet set{{Tensor(Shape{3, 3})}, {truth}, {region}};
  const DiceSummary s = best_threshold_dice(set, EvalConfig{});
  EXPECT_EQ(s.threshold, 0.0);
  EXPECT_DOUBLE_EQ(s.mean, oracle::dice_brute(to_ints(region), to_ints(truth)));
}

TEST(BestThreshold, MatchesBruteForceOnRandomInstances) {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 20; ++k) {
    const auto in = random_instance(rng, 4, 8);
    const ScoredSet set = to_set(in, 8);
    for (bool distinct : {false, true}) {
      EvalConfig cfg;
      cfg.grid = distinct ? ThresholdGrid::kDistinct : ThresholdGrid::kUniform;
      const auto ref = oracle::best_threshold_brute(in, cfg.grid_size, distinct);
      const DiceSummary got = best_threshold_dice(set, cfg);
      EXPECT_EQ(static_cast<float>(got.threshold), ref.first);
      EXPECT_NEAR(got.mean, ref.second, 1e-12);
      EXPECT_EQ(threshold_grid(set, cfg), oracle::grid_brute(in, cfg.grid_size, distinct));
    }
  }
}

TEST(BestThreshold, DominatesRandomProbes) {
  std::mt19937_64 rng(7);
  const auto in = random_instance(rng, 6, 8);
  const ScoredSet set = to_set(in, 8);
  const DiceSummary best = best_threshold_dice(set, EvalConfig{});
  const auto grid = threshold_grid(set, EvalConfig{});
  std::uniform_int_distribution<std::size_t> pick(0, grid.size() - 1);
  for (int k = 0; k < 50; ++k) {
    EXPECT_GE(best.mean, dice_at_threshold(set, grid[pick(rng)], EvalConfig{}).mean);
  }
}

TEST(BestThreshold, EmptyPairsPolicy) {
  const Tensor truth = mask_from({1, 0, 0, 0}, 2, 2);
  const Tensor empty(Shape{2, 2});
  ScoredSet set{{truth.clone(), empty.clone()}, {truth, empty}, {}};
  EvalConfig one;
  EXPECT_EQ(dice_at_threshold(set, 0.5f, one).mean, 1.0);
  EXPECT_EQ(dice_at_threshold(set, 0.5f, one).n_scored, 2u);
  EvalConfig skip;
  skip.empty_pairs = EmptyPairPolicy::kSkip;
  EXPECT_EQ(dice_at_threshold(set, 0.5f, skip).n_scored, 1u);
}

TEST(BestThreshold, RejectsEmptySelection) {
  EXPECT_THROW(best_threshold_dice(ScoredSet{}, EvalConfig{}), std::invalid_argument);
  ScoredSet no_truth{{Tensor(Shape{2, 2}, 0.5f)}, {Tensor(Shape{2, 2})}, {}};
  EXPECT_THROW(best_threshold_dice(no_truth, EvalConfig{}), std::invalid_argument);
}

TEST(Auprc, PerfectSeparationIsOne) {
  const std::vector<float> s{0.9f, 0.8f, 0.3f, 0.1f}, t{1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(auprc(s, t), 1.0);
}

TEST(Auprc, ConstantScoresGivePrevalence) {
  const std::vector<float> s(10, 0.5f), t{1, 0, 0, 1, 0, 0, 0, 1, 0, 0};
  EXPECT_DOUBLE_EQ(auprc(s, t), 0.3);
}

TEST(Auprc, SixPixelCaseMatchesEnumeration) {
  const std::vector<float> s{0.9f, 0.8f, 0.7f, 0.6f, 0.5f, 0.4f};
  const std::vector<int> ti{1, 0, 1, 0, 0, 0};
  const std::vector<float> tf(ti.begin(), ti.end());
  EXPECT_NEAR(auprc(s, tf), oracle::auprc_brute(s, ti), 1e-12);
}

TEST(Auprc, RandomTiesMatchEnumeration) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> level(0, 9);
  std::bernoulli_distribution bit(0.25);
  for (int k = 0; k < 50; ++k) {
    std::vector<float> s(60);
    std::vector<int> ti(60);
    for (auto& v : s) v = static_cast<float>(level(rng)) / 9.0f;
    for (auto& v : ti) v = bit(rng);
    ti[0] = 1;
    const std::vector<float> tf(ti.begin(), ti.end());
    EXPECT_NEAR(auprc(s, tf), oracle::auprc_brute(s, ti), 1e-12);
  }
}

TEST(Auprc, NoPositivesThrows) {
  const std::vector<float> s{0.1f, 0.2f}, t{0, 0};
  EXPECT_THROW(auprc(s, t), std::invalid_argument);
}

TEST(MonotoneInvariance, AuprcAndDiceUnchanged) {
  std::mt19937_64 rng(9);
  const auto in = random_instance(rng, 5, 8);
  const ScoredSet set = to_set(in, 8);
  ScoredSet mapped = set;
  for (auto& s : mapped.scores) {
    s = s.clone();
    for (auto& v : s.values()) v = std::exp(3.0f * v) + 2.0f;
  }
  EXPECT_NEAR(auprc(set), auprc(mapped), 1e-12);
  EvalConfig cfg;
  cfg.grid = ThresholdGrid::kDistinct;
  const DiceSummary a = best_threshold_dice(set, cfg), b = best_threshold_dice(mapped, cfg);
  EXPECT_DOUBLE_EQ(a.mean, b.mean);
  EXPECT_FLOAT_EQ(static_cast<float>(b.threshold), std::exp(3.0f * static_cast<float>(a.threshold)) + 2.0f);
}

TEST(Auprc, PooledSetUsesRegions) {
  const Tensor s0(Shape{2, 2}, {0.9f, 0.1f, 0.8f, 0.2f});
  const Tensor t0 = mask_from({1, 0, 0, 0}, 2, 2);
  const Tensor r0 = mask_from({1, 1, 0, 1}, 2, 2);  // drops the 0.8 false positive
  const ScoredSet set{{s0}, {t0}, {r0}};
  EXPECT_DOUBLE_EQ(auprc(set), 1.0);
}

TEST(MetricsCsv, RoundTrip) {
  const std::vector<MetricsRow> rows{{"fpm-cm", "test", 0.5, 0.125, 0.3, 0.0625, 50},
                                     {"none", "val", 1.0 / 3.0, 0.0, 0.1, 0.2, 16}};
  const auto p = std::filesystem::temp_directory_path() / "mddpm_metrics_roundtrip.csv";
  write_metrics_csv(p, rows);
  const auto back = read_metrics_csv(p);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].variant, rows[i].variant);
    EXPECT_EQ(back[i].split, rows[i].split);
    EXPECT_EQ(back[i].dice_mean, rows[i].dice_mean);
    EXPECT_EQ(back[i].n_samples, rows[i].n_samples);
    EXPECT_EQ(MetricsRow::from_json(rows[i].to_json()).auprc, rows[i].auprc);
  }
}
