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

#include "mddpm/tensor.hpp"

namespace mddpm::ops {

// Every op records a backward closure on the active tape when at least one
// input requires a gradient. Without an active tape the ops are plain
// value computations.

enum class Binary { kAdd, kSub, kMul };

/// out[i] = a[i] (op) b[i]. b broadcasts right-aligned onto a: each of its
/// dimensions is either 1 or equal to a's (a scalar b always broadcasts).
Tensor elementwise(Binary op, const Tensor& a, const Tensor& b);
inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(Binary::kAdd, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(Binary::kSub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(Binary::kMul, a, b); }

Tensor scale(const Tensor& a, float s);
Tensor add_scalar(const Tensor& a, float s);

Tensor silu(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// mean |pred - target| over all elements; target is treated as a constant.
Tensor l1_loss(const Tensor& pred, const Tensor& target);
/// mean (pred - target)^2; target is treated as a constant.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

/// Cross-correlation. x: [N,C,H,W], weight: [F,C,kh,kw], bias: [F] or
/// undefined. Output [N,F,(H+2p-kh)/s+1,(W+2p-kw)/s+1].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride = 1, std::size_t padding = 0);

/// Group normalization over [N,C,H,W] with per-channel affine gamma/beta [C].
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  std::size_t groups, float eps = 1e-5f);

/// x: [N,in], weight: [out,in], bias: [out] or undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor avg_pool2(const Tensor& x);
Tensor upsample_nearest2(const Tensor& x);
/// Channel concatenation of [N,Ca,H,W] and [N,Cb,H,W].
Tensor concat_channels(const Tensor& a, const Tensor& b);

}  // namespace mddpm::ops
