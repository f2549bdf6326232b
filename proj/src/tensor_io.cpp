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

#include "mddpm/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <vector>

namespace mddpm {

namespace {

constexpr std::array<char, 4> kMagic = {'M', 'T', 'S', 'R'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;
// Refuse headers describing more than 1 GiB of payload.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 28;

using Kind = TensorFileError::Kind;

void put_u16(std::vector<char>& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  if (t.ndim() > std::numeric_limits<std::uint16_t>::max()) {
    throw TensorFileError(Kind::kDimOverflow, "too many dimensions for " + path.string());
  }
  std::vector<char> buf(kMagic.begin(), kMagic.end());
  buf.push_back(static_cast<char>(kVersion));
  buf.push_back(static_cast<char>(kDtypeF32));
  put_u16(buf, static_cast<std::uint16_t>(t.ndim()));
  for (auto d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) {
      throw TensorFileError(Kind::kDimOverflow, "dimension too large for " + path.string());
    }
    put_u32(buf, static_cast<std::uint32_t>(d));
  }
  for (float v : t.values()) put_u32(buf, std::bit_cast<std::uint32_t>(v));
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw TensorFileError(Kind::kIo, "cannot open " + path.string() + " for writing");
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw TensorFileError(Kind::kIo, "write failed for " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw TensorFileError(Kind::kIo, "cannot open " + path.string());
  const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)),
                                       std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();
  if (buf.size() < 8) throw TensorFileError(Kind::kTruncated, "truncated header" + where);
  if (!std::equal(kMagic.begin(), kMagic.end(), buf.begin(),
                  [](char a, unsigned char b) { return static_cast<unsigned char>(a) == b; })) {
    throw TensorFileError(Kind::kBadMagic, "bad magic" + where);
  }
  if (buf[4] != kVersion) {
    throw TensorFileError(Kind::kBadVersion, "unsupported version " + std::to_string(buf[4]) + where);
  }
  if (buf[5] != kDtypeF32) {
    throw TensorFileError(Kind::kBadDtype, "unsupported dtype " + std::to_string(buf[5]) + where);
  }
  const std::size_t ndim = static_cast<std::size_t>(buf[6]) | (static_cast<std::size_t>(buf[7]) << 8);
  const std::size_t header = 8 + 4 * ndim;
  if (buf.size() < header) throw TensorFileError(Kind::kTruncated, "truncated dimension list" + where);
  Shape shape(ndim);
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    shape[i] = get_u32(buf.data() + 8 + 4 * i);
    if (shape[i] != 0 && count > kMaxElements / shape[i]) {
      throw TensorFileError(Kind::kDimOverflow, "dimensions overflow the element limit" + where);
    }
    count *= shape[i];
  }
  if (count > kMaxElements) {
    throw TensorFileError(Kind::kDimOverflow, "dimensions overflow the element limit" + where);
  }
  if (buf.size() - header != 4 * count) {
    throw TensorFileError(Kind::kLengthMismatch,
                          "payload holds " + std::to_string(buf.size() - header) + " bytes, header " +
                              shape_str(shape) + " needs " + std::to_string(4 * count) + where);
  }
  std::vector<float> values(count);
  for (std::size_t i = 0; i < count; ++i) values[i] = std::bit_cast<float>(get_u32(buf.data() + header + 4 * i));
  return Tensor(std::move(shape), std::move(values));
}

void write_pgm(const std::filesystem::path& path, const Tensor& t) {
  const bool ok = (t.ndim() == 2) || (t.ndim() == 3 && t.dim(0) == 1);
  if (!ok) throw ShapeError("write_pgm expects [H,W] or [1,H,W], got " + shape_str(t.shape()));
  const std::size_t h = t.dim(t.ndim() - 2), w = t.dim(t.ndim() - 1);
  const auto [lo, hi] = std::minmax_element(t.values().begin(), t.values().end());
  const float range = *hi - *lo;
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw TensorFileError(Kind::kIo, "cannot open " + path.string() + " for writing");
  os << "P5\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> px(h * w);
  for (std::size_t i = 0; i < px.size(); ++i) {
    const float v = range > 0.0f ? (t[i] - *lo) / range : 0.0f;
    px[i] = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  }
  os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!os) throw TensorFileError(Kind::kIo, "write failed for " + path.string());
}

}  // namespace mddpm
