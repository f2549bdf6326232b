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

// Independent reference implementations used as test oracles. None of these
// call into the library code they check.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mddpm/tensor.hpp"

namespace oracle {

using cd = std::complex<double>;

// Eq.-style quadruple loop: S[x,y] = sum_h sum_w z[h,w] e^{-2 pi i (xh/H + yw/W)}.
inline std::vector<cd> dft2_brute(const std::vector<double>& z, std::size_t h, std::size_t w) {
  std::vector<cd> s(h * w);
  for (std::size_t x = 0; x < h; ++x) {
    for (std::size_t y = 0; y < w; ++y) {
      cd acc = 0.0;
      for (std::size_t a = 0; a < h; ++a) {
        for (std::size_t b = 0; b < w; ++b) {
          const double ang = -2.0 * std::numbers::pi *
                             (static_cast<double>(x * a) / static_cast<double>(h) +
                              static_cast<double>(y * b) / static_cast<double>(w));
          acc += z[a * w + b] * cd(std::cos(ang), std::sin(ang));
        }
      }
      s[x * w + y] = acc;
    }
  }
  return s;
}

inline std::vector<cd> idft2_brute(const std::vector<cd>& s, std::size_t h, std::size_t w) {
  std::vector<cd> z(h * w);
  for (std::size_t a = 0; a < h; ++a) {
    for (std::size_t b = 0; b < w; ++b) {
      cd acc = 0.0;
      for (std::size_t x = 0; x < h; ++x) {
        for (std::size_t y = 0; y < w; ++y) {
          const double ang = 2.0 * std::numbers::pi *
                             (static_cast<double>(x * a) / static_cast<double>(h) +
                              static_cast<double>(y * b) / static_cast<double>(w));
          acc += s[x * w + y] * cd(std::cos(ang), std::sin(ang));
        }
      }
      z[a * w + b] = acc / static_cast<double>(h * w);
    }
  }
  return z;
}

// Sliding-window cross-correlation, [N,C,H,W] * [F,C,kh,kw] + bias[F].
inline std::vector<double> conv2d_brute(const mddpm::Tensor& x, const mddpm::Tensor& k,
                                        const mddpm::Tensor& bias, std::size_t stride,
                                        std::size_t pad) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t f = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out(n * f * oh * ow);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < f; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = bias.defined() ? bias[o] : 0.0;
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const long yy = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                const long xx = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
                acc += static_cast<double>(x[((b * c + ch) * h + static_cast<std::size_t>(yy)) * w +
                                             static_cast<std::size_t>(xx)]) *
                       k[((o * c + ch) * kh + u) * kw + v];
              }
          out[((b * f + o) * oh + i) * ow + j] = acc;
        }
  return out;
}

inline double dice_brute(const std::vector<int>& p, const std::vector<int>& t) {
  int inter = 0, sp = 0, st = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += p[i] && t[i];
    sp += p[i] != 0;
    st += t[i] != 0;
  }
  if (sp + st == 0) return 1.0;
  return 2.0 * inter / static_cast<double>(sp + st);
}

struct SweepInstance {
  std::vector<std::vector<float>> scores;
  std::vector<std::vector<int>> truths;
  std::vector<std::vector<int>> regions;
};

// Grid exactly as documented: n evenly spaced thresholds from min to max of
// the in-region scores, the last one pinned to max; or every distinct value.
inline std::vector<float> grid_brute(const SweepInstance& in, std::size_t n, bool distinct) {
  std::vector<float> all;
  for (std::size_t k = 0; k < in.scores.size(); ++k)
    for (std::size_t i = 0; i < in.scores[k].size(); ++i)
      if (in.regions[k][i]) all.push_back(in.scores[k][i]);
  if (all.empty()) return {0.0f};
  if (distinct) {
    std::set<float> s(all.begin(), all.end());
    return {s.begin(), s.end()};
  }
  const double lo = *std::min_element(all.begin(), all.end());
  const double hi = *std::max_element(all.begin(), all.end());
  if (n == 1 || lo == hi) return {static_cast<float>(lo)};
  std::vector<float> g;
  for (std::size_t k = 0; k < n; ++k) g.push_back(static_cast<float>(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1)));
  g.back() = static_cast<float>(hi);
  return g;
}

inline double mean_dice_brute(const SweepInstance& in, float thr) {
  double sum = 0.0;
  for (std::size_t k = 0; k < in.scores.size(); ++k) {
    std::vector<int> p(in.scores[k].size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = in.regions[k][i] && in.scores[k][i] >= thr;
    sum += dice_brute(p, in.truths[k]);
  }
  return sum / static_cast<double>(in.scores.size());
}

// Returns (threshold, mean dice): strict improvement only, so the lowest
// threshold wins ties.
inline std::pair<float, double> best_threshold_brute(const SweepInstance& in, std::size_t n, bool distinct) {
  std::pair<float, double> best{0.0f, -1.0};
  for (float thr : grid_brute(in, n, distinct)) {
    const double d = mean_dice_brute(in, thr);
    if (d > best.second) best = {thr, d};
  }
  return best;
}

// Precision-recall by enumerating every cut point "score >= v" over the
// distinct values in descending order; area = sum precision * recall step.
inline double auprc_brute(const std::vector<float>& s, const std::vector<int>& t) {
  std::set<float, std::greater<>> cuts(s.begin(), s.end());
  std::size_t positives = 0;
  for (int v : t) positives += v != 0;
  double area = 0.0;
  std::size_t tp_prev = 0;
  for (float v : cuts) {
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= v) {
        if (t[i]) ++tp; else ++fp;
      }
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += precision * (static_cast<double>(tp - tp_prev) / static_cast<double>(positives));
    tp_prev = tp;
  }
  return area;
}

// Pixel membership in the Euclidean disc, by exhaustive scan of the image.
inline std::size_t disc_area_brute(std::size_t h, std::size_t w, double cy, double cx, double r) {
  std::size_t n = 0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      n += dy * dy + dx * dx <= r * r;
    }
  return n;
}

inline mddpm::Tensor random_tensor(mddpm::Shape shape, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  mddpm::Tensor t(std::move(shape));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

}  // namespace oracle
