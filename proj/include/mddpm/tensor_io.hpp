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

#include <filesystem>
#include <stdexcept>
#include <string>

#include "mddpm/tensor.hpp"

namespace mddpm {

// Tensor file layout, all integers little-endian:
//   "MTSR" | version u8 = 1 | dtype u8 = 0 (f32) | ndim u16 | ndim x u32 dims
//   | row-major f32 payload

class TensorFileError : public std::runtime_error {
 public:
  enum class Kind { kIo, kTruncated, kBadMagic, kBadVersion, kBadDtype, kDimOverflow, kLengthMismatch };

  TensorFileError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

/// Binary "P5" graymap of an [H,W] or [1,H,W] tensor, min-max normalized to
/// 0..255. A constant image maps to all zeros.
void write_pgm(const std::filesystem::path& path, const Tensor& t);

}  // namespace mddpm
