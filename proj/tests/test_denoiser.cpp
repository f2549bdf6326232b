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

#include "mddpm/denoiser.hpp"
#include "mddpm/diffusion.hpp"
#include "mddpm/optim.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace mddpm;

namespace {

std::size_t conv(std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + out; }
std::size_t norm(std::size_t c) { return 2 * c; }
std::size_t linear(std::size_t in, std::size_t out) { return out * in + out; }
std::size_t block(std::size_t in, std::size_t out, std::size_t emb) {
  return norm(in) + conv(in, out, 3) + linear(emb, out) + norm(out) + conv(out, out, 3) +
         (in != out ? conv(in, out, 1) : 0);
}

}  // namespace

TEST(TimestepEmbedding, SinCosLayout) {
  const std::vector<int> t{0, 5};
  const Tensor e = timestep_embedding(t, 8);
  ASSERT_EQ(e.shape(), (Shape{2, 8}));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(e[i], 0.0f);
    EXPECT_EQ(e[4 + i], 1.0f);
    const double f = std::pow(10000.0, -static_cast<double>(i) / 4.0);
    EXPECT_NEAR(e[8 + i], std::sin(5.0 * f), 1e-6);
    EXPECT_NEAR(e[12 + i], std::cos(5.0 * f), 1e-6);
  }
  EXPECT_THROW(timestep_embedding(t, 7), std::invalid_argument);
}

TEST(UNet, ParameterCountMatchesHandCount) {
  // base 16, depth 2, time 32 (embedding 64), one channel.
  const std::size_t e = 64;
  const std::size_t expected = linear(32, e) + linear(e, e) + conv(1, 16, 3) + block(16, 16, e) +
                               block(16, 32, e) + block(32, 64, e) + block(64 + 32, 32, e) +
                               block(32 + 16, 16, e) + norm(16) + conv(16, 1, 3);
  EXPECT_EQ(expected, 144417u);
  const UNet net(DenoiserConfig{}, 1, 32, 32);
  EXPECT_EQ(net.parameter_count(), expected);
  std::size_t summed = 0;
  for (const auto& p : net.parameters()) summed += p.value.numel();
  EXPECT_EQ(summed, expected);
}

TEST(UNet, OutputShapeMatchesInput) {
  UNet net(DenoiserConfig{2, 8, 2, 16}, 1, 16, 24);
  std::mt19937_64 rng(1);
  const Tensor z = oracle::random_tensor({3, 2, 16, 24}, rng);
  const std::vector<int> t{1, 50, 100};
  EXPECT_EQ(net.forward(z, t).shape(), z.shape());
}

TEST(UNet, RejectsIndivisibleSizesAndWrongInputs) {
  EXPECT_THROW(UNet(DenoiserConfig{}, 1, 30, 32), std::invalid_argument);
  UNet net(DenoiserConfig{}, 1, 16, 16);
  const std::vector<int> one{1};
  EXPECT_THROW(net.forward(Tensor(Shape{1, 2, 16, 16}), one), ShapeError);
  EXPECT_THROW(net.forward(Tensor(Shape{2, 1, 16, 16}), one), ShapeError);
}

TEST(UNet, UntrainedNetworkPredictsZero) {
  UNet net(DenoiserConfig{}, 4, 16, 16);
  std::mt19937_64 rng(2);
  const Tensor z = oracle::random_tensor({2, 1, 16, 16}, rng);
  const std::vector<int> t{3, 90};
  const Tensor out = net.forward(z, t);
  for (std::size_t i = 0; i < z.numel(); ++i) EXPECT_EQ(out[i], 0.0f);
}

TEST(UNet, SameSeedSameOutput) {
  std::mt19937_64 rng(3);
  const Tensor z = oracle::random_tensor({1, 1, 16, 16}, rng);
  const std::vector<int> t{7};
  UNet a(DenoiserConfig{}, 11, 16, 16), b(DenoiserConfig{}, 11, 16, 16);
  // Perturb the zero head so the body contributes.
  for (UNet* n : {&a, &b}) {
    std::mt19937_64 r(5);
    for (auto& p : n->parameters())
      if (p.name.rfind("out.conv", 0) == 0)
        for (auto& v : p.value.values()) v = std::uniform_real_distribution<float>(-0.1f, 0.1f)(r);
  }
  const Tensor oa = a.forward(z, t), ob = b.forward(z, t);
  for (std::size_t i = 0; i < z.numel(); ++i) EXPECT_EQ(oa[i], ob[i]);
}

TEST(UNet, OutputDependsOnTimestep) {
  UNet net(DenoiserConfig{}, 6, 16, 16);
  std::mt19937_64 r(6);
  for (auto& p : net.parameters())
    if (p.name.rfind("out.conv", 0) == 0)
      for (auto& v : p.value.values()) v = std::uniform_real_distribution<float>(-0.1f, 0.1f)(r);
  const Tensor z = oracle::random_tensor({1, 1, 16, 16}, r);
  const std::vector<int> t1{1}, t2{80};
  const Tensor a = net.forward(z, t1), b = net.forward(z, t2);
  double diff = 0.0;
  for (std::size_t i = 0; i < z.numel(); ++i) diff += std::abs(a[i] - b[i]);
  EXPECT_GT(diff, 1e-3);
}

TEST(UNet, GradientsMatchFiniteDifferences) {
  UNet net(DenoiserConfig{1, 4, 1, 8}, 8, 8, 8);
  std::mt19937_64 r(8);
  for (auto& p : net.parameters())
    if (p.name.rfind("out.conv", 0) == 0)
      for (auto& v : p.value.values()) v = std::uniform_real_distribution<float>(-0.3f, 0.3f)(r);
  Tensor z = oracle::random_tensor({1, 1, 8, 8}, r);
  const std::vector<int> t{12};
  std::vector<std::pair<std::string, Tensor>> wrt{{"input", z}};
  for (const auto& p : net.parameters()) {
    if (p.name == "conv_in.weight" || p.name == "down0.conv1.weight" || p.name == "mid.time_proj.weight" ||
        p.name == "out.conv.weight" || p.name == "out.norm.gamma")
      wrt.emplace_back(p.name, p.value);
  }
  ASSERT_EQ(wrt.size(), 6u);
  gradcheck::Options opt;
  opt.max_probes = 24;
  for (const auto& res : gradcheck::check([&] { return net.forward(z, t); }, wrt, opt)) {
    EXPECT_LT(res.rel_error, 1e-2) << res.name;
  }
}

TEST(UNet, OverfitsOneImage) {
  Tensor image(Shape{1, 1, 32, 32});
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) {
      const double d = std::hypot(y - 15.5, x - 15.5);
      image[y * 32 + x] = d < 12.0 ? (d < 5.0 ? 0.9f : 0.5f) : 0.0f;
    }
  const std::vector<Tensor> fg(1, Tensor(Shape{32, 32}, 1.0f));
  DiffusionConfig cfg;
  cfg.schedule = NoiseSchedule::build(ScheduleKind::kLinear, 100, 1e-4, 0.02);
  cfg.t_fix = 50;
  cfg.noise = NoiseKind::kGaussian;
  UNet net(DenoiserConfig{}, 9, 32, 32);
  AdamState adam;
  std::mt19937_64 rng(10);
  double window = 1.0;
  int steps = 0;
  while (steps < 2000 && window >= 0.02) {
    double acc = 0.0;
    for (int i = 0; i < 25; ++i, ++steps) {
      zero_grads(net.parameters());
      acc += training_step(image, fg, MaskingMode::kNone, MaskConfig{}, net, cfg, rng);
      adam_step(net.parameters(), adam);
    }
    window = acc / 25.0;
  }
  EXPECT_LT(window, 0.02) << "after " << steps << " steps";
}
