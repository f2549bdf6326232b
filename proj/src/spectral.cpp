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

#include "mddpm/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace mddpm {

namespace {

using cd = std::complex<double>;

// In-place iterative radix-2 transform. sign = -1 forward, +1 inverse
// (unnormalized).
void fft_radix2(std::vector<cd>& a, int sign) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(k) /
                         static_cast<double>(len);
      const cd w(std::cos(ang), std::sin(ang));
      for (std::size_t i = 0; i < n; i += len) {
        const cd u = a[i + k];
        const cd v = a[i + k + half] * w;
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

void dft_direct(std::vector<cd>& a, int sign) {
  const std::size_t n = a.size();
  std::vector<cd> twiddle(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double ang =
        sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddle[k] = cd(std::cos(ang), std::sin(ang));
  }
  std::vector<cd> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cd acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * twiddle[(k * i) % n];
    out[k] = acc;
  }
  a.swap(out);
}

void transform_1d(std::vector<cd>& a, int sign, SpectralPath path) {
  switch (path) {
    case SpectralPath::kDirect:
      dft_direct(a, sign);
      return;
    case SpectralPath::kFft:
      if (!is_power_of_two(a.size())) {
        throw std::invalid_argument("FFT path requires power-of-two sizes, got " +
                                    std::to_string(a.size()));
      }
      fft_radix2(a, sign);
      return;
    case SpectralPath::kAuto:
      if (is_power_of_two(a.size())) {
        fft_radix2(a, sign);
      } else {
        dft_direct(a, sign);
      }
      return;
  }
}

// Row-column decomposition of the separable 2D sum over one [H,W] plane.
void transform_2d(std::vector<cd>& plane, std::size_t h, std::size_t w, int sign,
                  SpectralPath path) {
  std::vector<cd> line(w);
  for (std::size_t r = 0; r < h; ++r) {
    std::copy_n(plane.begin() + static_cast<std::ptrdiff_t>(r * w), w, line.begin());
    transform_1d(line, sign, path);
    std::copy(line.begin(), line.end(), plane.begin() + static_cast<std::ptrdiff_t>(r * w));
  }
  line.resize(h);
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) line[r] = plane[r * w + c];
    transform_1d(line, sign, path);
    for (std::size_t r = 0; r < h; ++r) plane[r * w + c] = line[r];
  }
}

}  // namespace

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

ComplexSpectrum dft2(const Tensor& z, SpectralPath path) {
  if (z.ndim() != 3) throw ShapeError("dft2 expects [C,H,W], got " + shape_str(z.shape()));
  const std::size_t c = z.dim(0), h = z.dim(1), w = z.dim(2);
  if (h == 0 || w == 0) throw ShapeError("dft2 on empty plane " + shape_str(z.shape()));
  ComplexSpectrum s(c, h, w);
  std::vector<cd> plane(h * w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* src = z.data() + ch * h * w;
    for (std::size_t i = 0; i < h * w; ++i) plane[i] = cd(src[i], 0.0);
    transform_2d(plane, h, w, -1, path);
    for (std::size_t i = 0; i < h * w; ++i) {
      s.re[ch * h * w + i] = static_cast<float>(plane[i].real());
      s.im[ch * h * w + i] = static_cast<float>(plane[i].imag());
    }
  }
  return s;
}

Tensor idft2(const ComplexSpectrum& s, SpectralPath path, float* max_imag) {
  const std::size_t c = s.channels, h = s.height, w = s.width;
  if (s.re.size() != c * h * w || s.im.size() != c * h * w || h == 0 || w == 0) {
    throw ShapeError("idft2 on malformed spectrum " + shape_str(s.shape()));
  }
  Tensor out(Shape{c, h, w});
  std::vector<cd> plane(h * w);
  const double norm = 1.0 / static_cast<double>(h * w);
  double worst = 0.0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h * w; ++i) plane[i] = cd(s.re[ch * h * w + i], s.im[ch * h * w + i]);
    transform_2d(plane, h, w, +1, path);
    for (std::size_t i = 0; i < h * w; ++i) {
      out[ch * h * w + i] = static_cast<float>(plane[i].real() * norm);
      worst = std::max(worst, std::fabs(plane[i].imag() * norm));
    }
  }
  if (max_imag != nullptr) *max_imag = static_cast<float>(worst);
  return out;
}

}  // namespace mddpm
