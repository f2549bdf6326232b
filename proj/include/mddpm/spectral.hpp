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

#pragma once

#include <vector>

#include "mddpm/tensor.hpp"

namespace mddpm {

/// Per-channel 2D spectrum. Bin (x, y) of channel c lives at
/// (c * H + x) * W + y, where x indexes the height axis and y the width axis.
struct ComplexSpectrum {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> re;
  std::vector<float> im;

  ComplexSpectrum() = default;
  ComplexSpectrum(std::size_t c, std::size_t h, std::size_t w)
      : channels(c), height(h), width(w), re(c * h * w, 0.0f), im(c * h * w, 0.0f) {}

  std::size_t index(std::size_t c, std::size_t x, std::size_t y) const {
    return (c * height + x) * width + y;
  }
  Shape shape() const { return {channels, height, width}; }
};

enum class SpectralPath {
  kAuto,    // radix-2 FFT along power-of-two axes, direct summation otherwise
  kFft,     // radix-2 FFT; throws if an axis is not a power of two
  kDirect,  // direct O(N^2) summation along both axes
};

bool is_power_of_two(std::size_t n);

/// Forward transform, unnormalized:
///   S[x,y] = sum_h sum_w z[h,w] exp(-j 2 pi (x h / H + y w / W)).
/// z is [C,H,W]; channels are transformed independently.
ComplexSpectrum dft2(const Tensor& z, SpectralPath path = SpectralPath::kAuto);

/// Inverse transform carrying the 1/(H W) factor. Returns the real part; the
/// largest discarded imaginary magnitude is written to `max_imag` if given.
Tensor idft2(const ComplexSpectrum& s, SpectralPath path = SpectralPath::kAuto,
             float* max_imag = nullptr);

}  // namespace mddpm
