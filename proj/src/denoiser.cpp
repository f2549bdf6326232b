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

#include "mddpm/denoiser.hpp"

#include <cmath>
#include <stdexcept>

namespace mddpm {

Tensor timestep_embedding(std::span<const int> t, std::size_t dim) {
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("time embedding dim must be even");
  const std::size_t half = dim / 2;
  Tensor out(Shape{t.size(), dim});
  for (std::size_t n = 0; n < t.size(); ++n) {
    for (std::size_t i = 0; i < half; ++i) {
      const double freq =
          std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
      const double arg = static_cast<double>(t[n]) * freq;
      out[n * dim + i] = static_cast<float>(std::sin(arg));
      out[n * dim + half + i] = static_cast<float>(std::cos(arg));
    }
  }
  return out;
}

namespace {

struct ResBlock {
  nn::GroupNorm norm1;
  nn::Conv2d conv1;
  nn::Linear time_proj;
  nn::GroupNorm norm2;
  nn::Conv2d conv2;
  nn::Conv2d skip;  // 1x1, only when channel counts differ
  bool has_skip = false;

  ResBlock(std::size_t in, std::size_t out, std::size_t emb_dim, std::mt19937_64& rng)
      : norm1(in),
        conv1(in, out, 3, rng),
        time_proj(emb_dim, out, rng),
        norm2(out),
        conv2(out, out, 3, rng),
        has_skip(in != out) {
    if (has_skip) skip = nn::Conv2d(in, out, 1, rng);
  }

  Tensor operator()(const Tensor& x, const Tensor& emb) const {
    Tensor h = conv1(ops::silu(norm1(x)));
    Tensor te = time_proj(emb);
    // Added after the norm; a per-channel bias before it would be subtracted out.
    h = ops::add(norm2(h), ops::reshape(te, Shape{te.dim(0), te.dim(1), 1, 1}));
    h = conv2(ops::silu(h));
    return ops::add(h, has_skip ? skip(x) : x);
  }

  void collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    norm1.collect(prefix + ".norm1", out);
    conv1.collect(prefix + ".conv1", out);
    time_proj.collect(prefix + ".time_proj", out);
    norm2.collect(prefix + ".norm2", out);
    conv2.collect(prefix + ".conv2", out);
    if (has_skip) skip.collect(prefix + ".skip", out);
  }
};

}  // namespace

struct UNet::Layers {
  nn::Linear time1;
  nn::Linear time2;
  nn::Conv2d conv_in;
  std::vector<ResBlock> down;
  std::vector<ResBlock> mid;  // exactly one
  std::vector<ResBlock> up;   // ordered from the coarsest level outward
  nn::GroupNorm norm_out;
  nn::Conv2d conv_out;
};

UNet::UNet(const DenoiserConfig& cfg, std::uint64_t seed, std::size_t height, std::size_t width)
    : cfg_(cfg), height_(height), width_(width), layers_(std::make_unique<Layers>()) {
  if (cfg.channels == 0 || cfg.base_width == 0 || cfg.depth == 0) {
    throw std::invalid_argument("denoiser config needs positive channels, width and depth");
  }
  if (cfg.depth > 5 || (cfg.base_width << cfg.depth) > 1024) {
    throw std::invalid_argument("denoiser width*2^depth exceeds the supported size");
  }
  const std::size_t factor = std::size_t{1} << cfg.depth;
  if (height == 0 || width == 0 || height % factor != 0 || width % factor != 0) {
    throw std::invalid_argument("image size " + std::to_string(height) + "x" +
                                std::to_string(width) + " is not divisible by 2^depth = " +
                                std::to_string(factor));
  }
  std::mt19937_64 rng(seed);
  const std::size_t emb = 2 * cfg.time_dim;
  auto& L = *layers_;
  L.time1 = nn::Linear(cfg.time_dim, emb, rng);
  L.time2 = nn::Linear(emb, emb, rng);
  L.conv_in = nn::Conv2d(cfg.channels, cfg.base_width, 3, rng);

  std::vector<std::size_t> level_ch;
  std::size_t ch = cfg.base_width;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const std::size_t out = cfg.base_width << l;
    L.down.emplace_back(ch, out, emb, rng);
    level_ch.push_back(out);
    ch = out;
  }
  const std::size_t mid_ch = cfg.base_width << cfg.depth;
  L.mid.emplace_back(ch, mid_ch, emb, rng);
  ch = mid_ch;
  for (std::size_t l = cfg.depth; l-- > 0;) {
    L.up.emplace_back(ch + level_ch[l], level_ch[l], emb, rng);
    ch = level_ch[l];
  }
  L.norm_out = nn::GroupNorm(ch);
  L.conv_out = nn::Conv2d(ch, cfg.channels, 3, rng, /*zero_init=*/true);

  L.time1.collect("time.fc1", params_);
  L.time2.collect("time.fc2", params_);
  L.conv_in.collect("conv_in", params_);
  for (std::size_t l = 0; l < L.down.size(); ++l) L.down[l].collect("down" + std::to_string(l), params_);
  L.mid[0].collect("mid", params_);
  for (std::size_t i = 0; i < L.up.size(); ++i) {
    L.up[i].collect("up" + std::to_string(cfg.depth - 1 - i), params_);
  }
  L.norm_out.collect("out.norm", params_);
  L.conv_out.collect("out.conv", params_);
}

UNet::~UNet() = default;
UNet::UNet(UNet&&) noexcept = default;
UNet& UNet::operator=(UNet&&) noexcept = default;

Tensor UNet::forward(const Tensor& z_t, std::span<const int> t) {
  if (z_t.ndim() != 4 || z_t.dim(1) != cfg_.channels || z_t.dim(2) != height_ ||
      z_t.dim(3) != width_) {
    throw ShapeError("denoiser expects [N," + std::to_string(cfg_.channels) + "," +
                     std::to_string(height_) + "," + std::to_string(width_) + "], got " +
                     shape_str(z_t.shape()));
  }
  if (t.size() != z_t.dim(0)) {
    throw ShapeError("denoiser got " + std::to_string(t.size()) + " timesteps for batch " +
                     shape_str(z_t.shape()));
  }
  auto& L = *layers_;
  Tensor emb = L.time2(ops::silu(L.time1(timestep_embedding(t, cfg_.time_dim))));
  Tensor act_emb = ops::silu(emb);

  Tensor h = L.conv_in(z_t);
  std::vector<Tensor> skips;
  for (std::size_t l = 0; l < L.down.size(); ++l) {
    h = L.down[l](h, act_emb);
    skips.push_back(h);
    h = ops::avg_pool2(h);
  }
  h = L.mid[0](h, act_emb);
  for (std::size_t i = 0; i < L.up.size(); ++i) {
    h = ops::upsample_nearest2(h);
    h = ops::concat_channels(h, skips[skips.size() - 1 - i]);
    h = L.up[i](h, act_emb);
  }
  Tensor head = L.conv_out(ops::silu(L.norm_out(h)));
  return head;
}

std::size_t UNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

}  // namespace mddpm
