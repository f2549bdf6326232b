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
#include <random>

#include "mddpm/masking.hpp"
#include "support/oracles.hpp"

using namespace mddpm;

namespace {

Tensor disc_foreground(std::size_t n, double radius) {
  Tensor fg(Shape{n, n});
  const double c = (static_cast<double>(n) - 1.0) / 2.0;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x)
      fg[y * n + x] = std::hypot(y - c, x - c) <= radius ? 1.0f : 0.0f;
  return fg;
}

PatchMaskSet constant_mask(MaskDomain d, std::size_t c, std::size_t h, std::size_t w, float v) {
  PatchMaskSet m;
  m.domain = d;
  m.mask = Tensor(Shape{c, h, w}, v);
  return m;
}

}  // namespace

TEST(PatchMask, ZeroRatioGivesAllOnes) {
  MaskConfig cfg;
  cfg.ratio_min = cfg.ratio_max = 0.0;
  const PatchMaskSet m = sample_patch_mask(cfg, disc_foreground(16, 6), 1, 3);
  for (float v : m.mask.values()) EXPECT_EQ(v, 1.0f);
  EXPECT_TRUE(m.regions.empty());
  EXPECT_EQ(m.masked_fraction, 0.0);
}

TEST(PatchMask, HalfTheRowsIsHalfMasked) {
  const PatchMaskSet m =
      PatchMaskSet::from_regions({PatchRegion{0, 0, 8, 4}}, MaskDomain::kPixel, 1, 8, 8, Tensor(Shape{8, 8}, 1.0f));
  EXPECT_DOUBLE_EQ(m.masked_fraction, 0.5);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) EXPECT_EQ(m.mask[y * 8 + x], y < 4 ? 0.0f : 1.0f);
}

TEST(PatchMask, SeededCircleRegression) {
  const Tensor fg = disc_foreground(32, 12);
  const PatchMaskSet a = sample_patch_mask(MaskConfig{}, fg, 1, 7);
  const PatchMaskSet b = sample_patch_mask(MaskConfig{}, fg, 1, 7);
  EXPECT_GE(a.masked_fraction, 0.10);
  EXPECT_LE(a.masked_fraction, 0.90);
  EXPECT_FALSE(a.ratio_warning);
  EXPECT_EQ(a.regions, b.regions);
  EXPECT_EQ(std::vector<float>(a.mask.values().begin(), a.mask.values().end()),
            std::vector<float>(b.mask.values().begin(), b.mask.values().end()));
}

TEST(PatchMask, EmptyForegroundThrows) {
  EXPECT_THROW(sample_patch_mask(MaskConfig{}, Tensor(Shape{8, 8}), 1, 1), std::invalid_argument);
}

TEST(PatchMask, InvalidConfigThrows) {
  MaskConfig cfg;
  cfg.ratio_min = 0.6;
  cfg.ratio_max = 0.4;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = MaskConfig{};
  cfg.n_min = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(PatchMask, PropertiesHoldAcrossSeeds) {
  const Tensor fg = disc_foreground(32, 13);
  const MaskConfig cfg;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const PatchMaskSet m = sample_patch_mask(cfg, fg, 2, seed);
    std::size_t fg_count = 0, masked = 0, area = 0;
    for (std::size_t i = 0; i < 32 * 32; ++i) {
      fg_count += fg[i] != 0.0f;
      const bool zero = m.mask[i] == 0.0f;
      masked += zero;
      if (zero) {
        EXPECT_NE(fg[i], 0.0f) << "seed " << seed;
      }
      EXPECT_EQ(m.mask[i], m.mask[1024 + i]) << "channels differ";
      bool covered = false;
      for (const auto& r : m.regions) covered = covered || r.contains(i / 32, i % 32);
      EXPECT_EQ(zero, covered && fg[i] != 0.0f);
    }
    for (const auto& r : m.regions) {
      area += r.area();
      EXPECT_LE(r.x0 + r.w, 32u);
      EXPECT_LE(r.y0 + r.h, 32u);
    }
    EXPECT_LT(area, 32u * 32u);
    EXPECT_GE(m.regions.size(), cfg.n_min);
    EXPECT_LE(m.regions.size(), cfg.n_max);
    EXPECT_DOUBLE_EQ(m.masked_fraction, static_cast<double>(masked) / static_cast<double>(fg_count));
    if (!m.ratio_warning) {
      EXPECT_GE(m.masked_fraction, cfg.ratio_min);
      EXPECT_LE(m.masked_fraction, cfg.ratio_max);
    }
  }
}

TEST(PatchMask, JsonReplayIsExact) {
  const Tensor fg = disc_foreground(16, 6);
  const PatchMaskSet m = sample_patch_mask(MaskConfig{}, fg, 1, 11);
  const PatchMaskSet r = PatchMaskSet::from_json(m.to_json(), 1, 16, 16, fg);
  EXPECT_EQ(r.regions, m.regions);
  EXPECT_EQ(r.seed, m.seed);
  EXPECT_EQ(std::vector<float>(r.mask.values().begin(), r.mask.values().end()),
            std::vector<float>(m.mask.values().begin(), m.mask.values().end()));
}

TEST(FrequencyMask, SymmetricKeepsDcAndRespectsRatio) {
  const std::size_t h = 16, w = 12;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const PatchMaskSet m = sample_frequency_mask(MaskConfig{}, 1, h, w, seed);
    EXPECT_EQ(m.domain, MaskDomain::kFrequency);
    EXPECT_EQ(m.mask[0], 1.0f);
    std::size_t zeros = 0;
    for (std::size_t x = 0; x < h; ++x)
      for (std::size_t y = 0; y < w; ++y) {
        EXPECT_EQ(m.mask[x * w + y], m.mask[((h - x) % h) * w + (w - y) % w]);
        zeros += m.mask[x * w + y] == 0.0f;
      }
    EXPECT_DOUBLE_EQ(m.masked_fraction, static_cast<double>(zeros) / static_cast<double>(h * w));
    if (!m.ratio_warning) {
      EXPECT_GE(m.masked_fraction, 0.10);
      EXPECT_LE(m.masked_fraction, 0.90);
    }
  }
}

TEST(FrequencyMask, DcMaskableWhenConfigured) {
  const PatchMaskSet m = PatchMaskSet::from_regions({PatchRegion{0, 0, 1, 1}}, MaskDomain::kFrequency, 1, 4, 4,
                                                    Tensor(), /*mask_dc=*/true);
  EXPECT_EQ(m.mask[0], 0.0f);
  const PatchMaskSet k = PatchMaskSet::from_regions({PatchRegion{0, 0, 1, 1}}, MaskDomain::kFrequency, 1, 4, 4);
  EXPECT_EQ(k.mask[0], 1.0f);
}

TEST(Ipm, OnesIdentityZerosAnnihilate) {
  std::mt19937_64 rng(1);
  const Tensor z = oracle::random_tensor({1, 4, 4}, rng);
  const Tensor same = apply_ipm(z, constant_mask(MaskDomain::kPixel, 1, 4, 4, 1.0f));
  const Tensor zero = apply_ipm(z, constant_mask(MaskDomain::kPixel, 1, 4, 4, 0.0f));
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_EQ(same[i], z[i]);
    EXPECT_EQ(zero[i], 0.0f);
  }
}

TEST(Ipm, TwoByTwoPatchZeroesExactlyThosePixels) {
  std::mt19937_64 rng(2);
  const Tensor z = oracle::random_tensor({1, 4, 4}, rng, 0.5f, 1.0f);
  const PatchMaskSet m = PatchMaskSet::from_regions({PatchRegion{1, 2, 2, 2}}, MaskDomain::kPixel, 1, 4, 4);
  const Tensor out = apply_ipm(z, m);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) {
      const bool inside = y >= 2 && y < 4 && x >= 1 && x < 3;
      EXPECT_EQ(out[y * 4 + x], inside ? 0.0f : z[y * 4 + x]);
    }
}

TEST(Ipm, Complementarity) {
  std::mt19937_64 rng(3);
  const Tensor fg(Shape{16, 16}, 1.0f);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor z = oracle::random_tensor({1, 16, 16}, rng);
    const PatchMaskSet m = sample_patch_mask(MaskConfig{}, fg, 1, seed);
    const Tensor a = apply_ipm(z, m);
    for (std::size_t i = 0; i < z.numel(); ++i) EXPECT_EQ(a[i] + z[i] * (1.0f - m.mask[i]), z[i]);
  }
}

TEST(Ipm, DomainMismatchThrows) {
  const Tensor z(Shape{1, 4, 4});
  EXPECT_THROW(apply_ipm(z, constant_mask(MaskDomain::kFrequency, 1, 4, 4, 1.0f)), std::invalid_argument);
  EXPECT_THROW(apply_fpm(z, constant_mask(MaskDomain::kPixel, 1, 4, 4, 1.0f)), std::invalid_argument);
}

TEST(Fpm, AllOnesIsIdentity) {
  std::mt19937_64 rng(4);
  const Tensor z = oracle::random_tensor({2, 16, 12}, rng);
  const Tensor out = apply_fpm(z, constant_mask(MaskDomain::kFrequency, 2, 16, 12, 1.0f));
  for (std::size_t i = 0; i < z.numel(); ++i) EXPECT_NEAR(out[i], z[i], 1e-5);
}

TEST(Fpm, DcOnlyGivesChannelMean) {
  std::mt19937_64 rng(5);
  const Tensor z = oracle::random_tensor({2, 8, 8}, rng);
  PatchMaskSet m = constant_mask(MaskDomain::kFrequency, 2, 8, 8, 0.0f);
  m.mask[0] = m.mask[64] = 1.0f;
  const Tensor out = apply_fpm(z, m);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 64; ++i) mean += z[c * 64 + i];
    mean /= 64.0;
    for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(out[c * 64 + i], mean, 1e-6);
  }
}

TEST(Fpm, RampWithOneBinPairRemovedMatchesOracle) {
  std::vector<double> ramp(16);
  for (std::size_t i = 0; i < 16; ++i) ramp[i] = static_cast<double>(i) / 15.0;
  Tensor z(Shape{1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) z[i] = static_cast<float>(ramp[i]);
  PatchMaskSet m = constant_mask(MaskDomain::kFrequency, 1, 4, 4, 1.0f);
  m.mask[1 * 4 + 1] = m.mask[3 * 4 + 3] = 0.0f;  // (1,1) and its conjugate (3,3)
  auto s = oracle::dft2_brute(ramp, 4, 4);
  s[1 * 4 + 1] = s[3 * 4 + 3] = 0.0;
  const auto ref = oracle::idft2_brute(s, 4, 4);
  const Tensor out = apply_fpm(z, m);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_NEAR(out[i], ref[i].real(), 1e-6);
    EXPECT_NEAR(ref[i].imag(), 0.0, 1e-12);
  }
}

TEST(FpmCutmix, LimitsAndSinglePatch) {
  std::mt19937_64 rng(6);
  const Tensor z = oracle::random_tensor({1, 8, 8}, rng);
  const PatchMaskSet mf = sample_frequency_mask(MaskConfig{}, 1, 8, 8, 9);
  const Tensor fpm = apply_fpm(z, mf);
  const Tensor ones = apply_fpm_cutmix(z, constant_mask(MaskDomain::kPixel, 1, 8, 8, 1.0f), mf);
  const Tensor zeros = apply_fpm_cutmix(z, constant_mask(MaskDomain::kPixel, 1, 8, 8, 0.0f), mf);
  for (std::size_t i = 0; i < 64; ++i) {
    EXPECT_EQ(ones[i], z[i]);
    EXPECT_EQ(zeros[i], fpm[i]);
  }
  const PatchMaskSet mp = PatchMaskSet::from_regions({PatchRegion{3, 5, 2, 2}}, MaskDomain::kPixel, 1, 8, 8);
  const Tensor one = apply_fpm_cutmix(z, mp, mf);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) {
      const bool inside = y >= 5 && y < 7 && x >= 3 && x < 5;
      EXPECT_EQ(one[y * 8 + x], inside ? fpm[y * 8 + x] : z[y * 8 + x]);
    }
}

TEST(FpmCutmix, SupportPropertyOnRandomCases) {
  std::mt19937_64 rng(7);
  const Tensor fg = disc_foreground(16, 7);
  for (std::uint64_t k = 0; k < 100; ++k) {
    const Tensor z = oracle::random_tensor({1, 16, 16}, rng);
    const PatchMaskSet mp = sample_patch_mask(MaskConfig{}, fg, 1, 2 * k);
    const PatchMaskSet mf = sample_frequency_mask(MaskConfig{}, 1, 16, 16, 2 * k + 1);
    const Tensor out = apply_fpm_cutmix(z, mp, mf);
    for (std::size_t i = 0; i < 256; ++i) {
      if (out[i] != z[i]) {
        EXPECT_EQ(mp.mask[i], 0.0f) << "case " << k << " pixel " << i;
      }
    }
  }
}
