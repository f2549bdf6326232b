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

#include "mddpm/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace mddpm::ops {

namespace {

using DataPtr = std::shared_ptr<detail::TensorData>;

// Single-threaded BLAS keeps every GEMM reduction in a fixed order.
const bool g_blas_single_thread = [] {
  openblas_set_num_threads(1);
  return true;
}();

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor make_output(Shape shape, bool track) {
  Tensor out(std::move(shape));
  if (track) out.set_requires_grad(true);
  return out;
}

bool wants_grad(const DataPtr& d) { return d && d->requires_grad; }

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.ndim() != rank) {
    throw ShapeError(std::string(what) + " expects a rank-" + std::to_string(rank) +
                     " tensor, got " + shape_str(t.shape()));
  }
}

// Maps each flat index of `a` onto the flat index of `b` under right-aligned
// broadcasting. Empty result means shapes are identical; a single zero means
// b is a scalar.
std::vector<std::uint32_t> broadcast_map(const Shape& a, const Shape& b) {
  const std::size_t na = shape_numel(a);
  const std::size_t nb = shape_numel(b);
  if (nb == 1) return {0};
  auto fail = [&] {
    throw ShapeError("cannot broadcast shape " + shape_str(b) + " onto shape " + shape_str(a));
  };
  if (b.size() > a.size()) fail();
  const std::size_t lead = a.size() - b.size();
  bool identical = b.size() == a.size();
  std::vector<std::size_t> bstride(a.size(), 0);
  std::size_t stride = 1;
  for (std::size_t i = b.size(); i-- > 0;) {
    const std::size_t ad = a[lead + i];
    if (b[i] == ad) {
      bstride[lead + i] = b[i] == 1 ? 0 : stride;
    } else if (b[i] == 1) {
      bstride[lead + i] = 0;
      identical = false;
    } else {
      fail();
    }
    stride *= b[i];
  }
  if (identical && na == nb) return {};
  std::vector<std::uint32_t> map(na);
  std::vector<std::size_t> idx(a.size(), 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < na; ++i) {
    map[i] = static_cast<std::uint32_t>(off);
    for (std::size_t d = a.size(); d-- > 0;) {
      ++idx[d];
      off += bstride[d];
      if (idx[d] < a[d]) break;
      off -= bstride[d] * idx[d];
      idx[d] = 0;
    }
  }
  return map;
}

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

}  // namespace

Tensor elementwise(Binary op, const Tensor& a, const Tensor& b) {
  auto map = broadcast_map(a.shape(), b.shape());
  const bool same = map.empty();
  const bool scalar = map.size() == 1 && a.numel() != 1;
  const bool track = tracking({&a, &b});
  Tensor out = make_output(a.shape(), track);
  const std::size_t n = a.numel();
  const float* pa = a.data();
  const float* pb = b.data();
  float* po = out.data();
  auto bidx = [&](std::size_t i) -> std::size_t {
    if (same) return i;
    if (scalar) return 0;
    return map[i];
  };
  switch (op) {
    case Binary::kAdd:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[bidx(i)];
      break;
    case Binary::kSub:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[bidx(i)];
      break;
    case Binary::kMul:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[bidx(i)];
      break;
  }
  if (track) {
    active_tape()->record([op, da = a.impl(), db = b.impl(), dout = out.impl(),
                           map = std::move(map), same, scalar] {
      if (dout->grad.empty()) return;
      const float* g = dout->grad.data();
      const std::size_t n = dout->value.size();
      auto bidx = [&](std::size_t i) -> std::size_t {
        if (same) return i;
        if (scalar) return 0;
        return map[i];
      };
      if (wants_grad(da)) {
        float* ga = da->grad_buffer();
        if (op == Binary::kMul) {
          const float* vb = db->value.data();
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * vb[bidx(i)];
        } else {
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        }
      }
      if (wants_grad(db)) {
        float* gb = db->grad_buffer();
        switch (op) {
          case Binary::kAdd:
            for (std::size_t i = 0; i < n; ++i) gb[bidx(i)] += g[i];
            break;
          case Binary::kSub:
            for (std::size_t i = 0; i < n; ++i) gb[bidx(i)] -= g[i];
            break;
          case Binary::kMul: {
            const float* va = da->value.data();
            for (std::size_t i = 0; i < n; ++i) gb[bidx(i)] += g[i] * va[i];
            break;
          }
        }
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, float s) {
  const bool track = tracking({&a});
  Tensor out = make_output(a.shape(), track);
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * s;
  if (track) {
    active_tape()->record([s, da = a.impl(), dout = out.impl()] {
      if (dout->grad.empty() || !wants_grad(da)) return;
      float* ga = da->grad_buffer();
      for (std::size_t i = 0; i < dout->grad.size(); ++i) ga[i] += dout->grad[i] * s;
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& a, float s) {
  const bool track = tracking({&a});
  Tensor out = make_output(a.shape(), track);
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + s;
  if (track) {
    active_tape()->record([da = a.impl(), dout = out.impl()] {
      if (dout->grad.empty() || !wants_grad(da)) return;
      float* ga = da->grad_buffer();
      for (std::size_t i = 0; i < dout->grad.size(); ++i) ga[i] += dout->grad[i];
    });
  }
  return out;
}

Tensor silu(const Tensor& x) {
  const bool track = tracking({&x});
  Tensor out = make_output(x.shape(), track);
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] * sigmoid(x[i]);
  if (track) {
    active_tape()->record([dx = x.impl(), dout = out.impl()] {
      if (dout->grad.empty() || !wants_grad(dx)) return;
      float* gx = dx->grad_buffer();
      const float* v = dx->value.data();
      for (std::size_t i = 0; i < dout->grad.size(); ++i) {
        const float s = sigmoid(v[i]);
        gx[i] += dout->grad[i] * s * (1.0f + v[i] * (1.0f - s));
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  const bool track = tracking({&x});
  Tensor out = make_output(std::move(shape), track);
  std::copy(x.values().begin(), x.values().end(), out.values().begin());
  if (track) {
    active_tape()->record([dx = x.impl(), dout = out.impl()] {
      if (dout->grad.empty() || !wants_grad(dx)) return;
      float* gx = dx->grad_buffer();
      for (std::size_t i = 0; i < dout->grad.size(); ++i) gx[i] += dout->grad[i];
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  const bool track = tracking({&x});
  Tensor out = make_output(Shape{1}, track);
  double acc = 0.0;
  for (float v : x.values()) acc += v;
  out[0] = static_cast<float>(acc);
  if (track) {
    active_tape()->record([dx = x.impl(), dout = out.impl()] {
      if (dout->grad.empty() || !wants_grad(dx)) return;
      float* gx = dx->grad_buffer();
      const float g = dout->grad[0];
      for (std::size_t i = 0; i < dx->value.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0f / static_cast<float>(x.numel())); }

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("l1_loss shape mismatch: " + shape_str(pred.shape()) + " vs " +
                     shape_str(target.shape()));
  }
  const bool track = tracking({&pred});
  Tensor out = make_output(Shape{1}, track);
  const std::size_t n = pred.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::fabs(pred[i] - target[i]);
  out[0] = static_cast<float>(acc / static_cast<double>(n));
  if (track) {
    active_tape()->record([dp = pred.impl(), dt = target.impl(), dout = out.impl()] {
      if (dout->grad.empty() || !wants_grad(dp)) return;
      float* gp = dp->grad_buffer();
      const std::size_t n = dp->value.size();
      const float g = dout->grad[0] / static_cast<float>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const float d = dp->value[i] - dt->value[i];
        gp[i] += d > 0.0f ? g : (d < 0.0f ? -g : 0.0f);
      }
    });
  }
  return out;
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_loss shape mismatch: " + shape_str(pred.shape()) + " vs " +
                     shape_str(target.shape()));
  }
  const bool track = tracking({&pred});
  Tensor out = make_output(Shape{1}, track);
  const std::size_t n = pred.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  out[0] = static_cast<float>(acc / static_cast<double>(n));
  if (track) {
    active_tape()->record([dp = pred.impl(), dt = target.impl(), dout = out.impl()] {
      if (dout->grad.empty() || !wants_grad(dp)) return;
      float* gp = dp->grad_buffer();
      const std::size_t n = dp->value.size();
      const float g = 2.0f * dout->grad[0] / static_cast<float>(n);
      for (std::size_t i = 0; i < n; ++i) gp[i] += g * (dp->value[i] - dt->value[i]);
    });
  }
  return out;
}

namespace {

struct ConvGeometry {
  std::size_t n, c, h, w, f, kh, kw, stride, pad, ho, wo;
  std::size_t ck() const { return c * kh * kw; }
  std::size_t plane() const { return ho * wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// Output columns [lo, hi) whose input column ox*stride + j - pad lies inside
// the image.
std::pair<std::size_t, std::size_t> valid_cols(const ConvGeometry& g, std::size_t j) {
  std::size_t lo = 0;
  while (lo < g.wo && lo * g.stride + j < g.pad) ++lo;
  std::size_t hi = lo;
  while (hi < g.wo && hi * g.stride + j - g.pad < g.w) ++hi;
  return {lo, hi};
}

void im2col(const ConvGeometry& g, const float* x, float* col) {
  const std::size_t p = g.plane();
  for (std::size_t c = 0; c < g.c; ++c) {
    const float* xc = x + c * g.h * g.w;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        float* row = col + ((c * g.kh + i) * g.kw + j) * p;
        const auto [lo, hi] = valid_cols(g, j);
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          float* dst = row + oy * g.wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.wo, 0.0f);
            continue;
          }
          const float* src = xc + static_cast<std::size_t>(iy) * g.w + j - g.pad;
          std::fill(dst, dst + lo, 0.0f);
          if (g.stride == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride];
          }
          std::fill(dst + hi, dst + g.wo, 0.0f);
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const float* col, float* dx) {
  const std::size_t p = g.plane();
  for (std::size_t c = 0; c < g.c; ++c) {
    float* xc = dx + c * g.h * g.w;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const float* row = col + ((c * g.kh + i) * g.kw + j) * p;
        const auto [lo, hi] = valid_cols(g, j);
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          float* dst = xc + static_cast<std::size_t>(iy) * g.w + j - g.pad;
          const float* src = row + oy * g.wo;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[ox * g.stride] += src[ox];
        }
      }
    }
  }
}

// Per-thread im2col workspace; reused across calls without re-zeroing.
float* scratch(std::size_t slot, std::size_t size) {
  thread_local std::vector<float> buffers[2];
  if (buffers[slot].size() < size) buffers[slot].resize(size);
  return buffers[slot].data();
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require_rank(x, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  if (weight.dim(1) != x.dim(1)) {
    throw ShapeError("conv2d channel mismatch: input " + shape_str(x.shape()) + " vs kernel " +
                     shape_str(weight.shape()));
  }
  if (stride == 0) throw std::invalid_argument("conv2d stride must be positive");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(2),
                 weight.dim(3), stride, padding, 0, 0};
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw) {
    throw ShapeError("conv2d kernel " + shape_str(weight.shape()) + " larger than padded input " +
                     shape_str(x.shape()));
  }
  g.ho = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
  if (bias.defined() && (bias.numel() != g.f)) {
    throw ShapeError("conv2d bias " + shape_str(bias.shape()) + " does not match kernel " +
                     shape_str(weight.shape()));
  }

  const bool track = tracking({&x, &weight, &bias});
  Tensor out = make_output(Shape{g.n, g.f, g.ho, g.wo}, track);
  const std::size_t p = g.plane();
  const std::size_t ck = g.ck();
  float* col = g.pointwise() ? nullptr : scratch(0, ck * p);
  for (std::size_t n = 0; n < g.n; ++n) {
    const float* xn = x.data() + n * g.c * g.h * g.w;
    const float* cols = xn;
    if (!g.pointwise()) {
      im2col(g, xn, col);
      cols = col;
    }
    float* on = out.data() + n * g.f * p;
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(g.f),
                static_cast<int>(p), static_cast<int>(ck), 1.0f, weight.data(),
                static_cast<int>(ck), cols, static_cast<int>(p), 0.0f, on, static_cast<int>(p));
    if (bias.defined()) {
      for (std::size_t f = 0; f < g.f; ++f) {
        const float b = bias[f];
        float* row = on + f * p;
        for (std::size_t i = 0; i < p; ++i) row[i] += b;
      }
    }
  }

  if (track) {
    active_tape()->record([g, dx = x.impl(), dw = weight.impl(), db = bias.impl(),
                           dout = out.impl()] {
      if (dout->grad.empty()) return;
      const std::size_t p = g.plane();
      const std::size_t ck = g.ck();
      const bool need_x = wants_grad(dx);
      const bool need_w = wants_grad(dw);
      float* col = g.pointwise() ? nullptr : scratch(0, ck * p);
      float* dcol = g.pointwise() || !need_x ? nullptr : scratch(1, ck * p);
      for (std::size_t n = 0; n < g.n; ++n) {
        const float* gn = dout->grad.data() + n * g.f * p;
        if (wants_grad(db)) {
          float* gb = db->grad_buffer();
          for (std::size_t f = 0; f < g.f; ++f) {
            double acc = 0.0;
            for (std::size_t i = 0; i < p; ++i) acc += gn[f * p + i];
            gb[f] += static_cast<float>(acc);
          }
        }
        const std::size_t xoff = n * g.c * g.h * g.w;
        if (need_w) {
          const float* cols = dx->value.data() + xoff;
          if (!g.pointwise()) {
            im2col(g, cols, col);
            cols = col;
          }
          cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(g.f),
                      static_cast<int>(ck), static_cast<int>(p), 1.0f, gn, static_cast<int>(p),
                      cols, static_cast<int>(p), 1.0f, dw->grad_buffer(), static_cast<int>(ck));
        }
        if (need_x) {
          float* gx = dx->grad_buffer() + xoff;
          if (g.pointwise()) {
            cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(ck),
                        static_cast<int>(p), static_cast<int>(g.f), 1.0f, dw->value.data(),
                        static_cast<int>(ck), gn, static_cast<int>(p), 1.0f, gx,
                        static_cast<int>(p));
          } else {
            cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(ck),
                        static_cast<int>(p), static_cast<int>(g.f), 1.0f, dw->value.data(),
                        static_cast<int>(ck), gn, static_cast<int>(p), 0.0f, dcol,
                        static_cast<int>(p));
            col2im_add(g, dcol, gx);
          }
        }
      }
    });
  }
  return out;
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, std::size_t groups,
                  float eps) {
  require_rank(x, 4, "group_norm input");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (groups == 0 || c % groups != 0) {
    throw ShapeError("group_norm: " + std::to_string(c) + " channels not divisible into " +
                     std::to_string(groups) + " groups");
  }
  if (gamma.numel() != c || beta.numel() != c) {
    throw ShapeError("group_norm affine parameters " + shape_str(gamma.shape()) + "/" +
                     shape_str(beta.shape()) + " do not match input " + shape_str(x.shape()));
  }
  const std::size_t cg = c / groups;
  const std::size_t count = cg * hw;
  const bool track = tracking({&x, &gamma, &beta});
  Tensor out = make_output(x.shape(), track);
  auto xhat = std::make_shared<std::vector<float>>(x.numel());
  auto rstd = std::make_shared<std::vector<float>>(n * groups);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const std::size_t base = (b * c + gi * cg) * hw;
      double s = 0.0, s2 = 0.0;
      for (std::size_t i = 0; i < count; ++i) s += x[base + i];
      const double mu = s / static_cast<double>(count);
      for (std::size_t i = 0; i < count; ++i) {
        const double d = x[base + i] - mu;
        s2 += d * d;
      }
      const double var = s2 / static_cast<double>(count);
      const float r = static_cast<float>(1.0 / std::sqrt(var + eps));
      (*rstd)[b * groups + gi] = r;
      for (std::size_t ch = 0; ch < cg; ++ch) {
        const std::size_t cidx = gi * cg + ch;
        const float gm = gamma[cidx], bt = beta[cidx];
        for (std::size_t i = 0; i < hw; ++i) {
          const std::size_t k = base + ch * hw + i;
          const float xh = static_cast<float>(x[k] - mu) * r;
          (*xhat)[k] = xh;
          out[k] = xh * gm + bt;
        }
      }
    }
  }
  if (track) {
    active_tape()->record([=, dx = x.impl(), dg = gamma.impl(), db = beta.impl(),
                           dout = out.impl()] {
      if (dout->grad.empty()) return;
      const float* gy = dout->grad.data();
      const float* gm = dg->value.data();
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t gi = 0; gi < groups; ++gi) {
          const std::size_t base = (b * c + gi * cg) * hw;
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t ch = 0; ch < cg; ++ch) {
            const std::size_t cidx = gi * cg + ch;
            double acc_g = 0.0, acc_b = 0.0;
            for (std::size_t i = 0; i < hw; ++i) {
              const std::size_t k = base + ch * hw + i;
              const double d = static_cast<double>(gy[k]) * gm[cidx];
              sum_d += d;
              sum_dx += d * (*xhat)[k];
              acc_g += static_cast<double>(gy[k]) * (*xhat)[k];
              acc_b += gy[k];
            }
            if (wants_grad(dg)) dg->grad_buffer()[cidx] += static_cast<float>(acc_g);
            if (wants_grad(db)) db->grad_buffer()[cidx] += static_cast<float>(acc_b);
          }
          if (!wants_grad(dx)) continue;
          float* gx = dx->grad_buffer();
          const double mean_d = sum_d / static_cast<double>(count);
          const double mean_dx = sum_dx / static_cast<double>(count);
          const double r = (*rstd)[b * groups + gi];
          for (std::size_t ch = 0; ch < cg; ++ch) {
            const std::size_t cidx = gi * cg + ch;
            for (std::size_t i = 0; i < hw; ++i) {
              const std::size_t k = base + ch * hw + i;
              const double d = static_cast<double>(gy[k]) * gm[cidx];
              gx[k] += static_cast<float>(r * (d - mean_d - (*xhat)[k] * mean_dx));
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const std::size_t n = x.dim(0), in = x.dim(1), outf = weight.dim(0);
  if (weight.dim(1) != in) {
    throw ShapeError("linear shape mismatch: input " + shape_str(x.shape()) + " vs weight " +
                     shape_str(weight.shape()));
  }
  if (bias.defined() && bias.numel() != outf) {
    throw ShapeError("linear bias " + shape_str(bias.shape()) + " does not match weight " +
                     shape_str(weight.shape()));
  }
  const bool track = tracking({&x, &weight, &bias});
  Tensor out = make_output(Shape{n, outf}, track);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t o = 0; o < outf; ++o) {
      float acc = bias.defined() ? bias[o] : 0.0f;
      for (std::size_t i = 0; i < in; ++i) acc += x[b * in + i] * weight[o * in + i];
      out[b * outf + o] = acc;
    }
  }
  if (track) {
    active_tape()->record([n, in, outf, dx = x.impl(), dw = weight.impl(), db = bias.impl(),
                           dout = out.impl()] {
      if (dout->grad.empty()) return;
      const float* gy = dout->grad.data();
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t o = 0; o < outf; ++o) {
          const float g = gy[b * outf + o];
          if (wants_grad(db)) db->grad_buffer()[o] += g;
          if (wants_grad(dw)) {
            float* gw = dw->grad_buffer() + o * in;
            for (std::size_t i = 0; i < in; ++i) gw[i] += g * dx->value[b * in + i];
          }
          if (wants_grad(dx)) {
            float* gx = dx->grad_buffer() + b * in;
            for (std::size_t i = 0; i < in; ++i) gx[i] += g * dw->value[o * in + i];
          }
        }
      }
    });
  }
  return out;
}

Tensor avg_pool2(const Tensor& x) {
  require_rank(x, 4, "avg_pool2");
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("avg_pool2 needs even spatial dims, got " + shape_str(x.shape()));
  }
  const std::size_t ho = h / 2, wo = w / 2;
  const bool track = tracking({&x});
  Tensor out = make_output(Shape{x.dim(0), x.dim(1), ho, wo}, track);
  for (std::size_t p = 0; p < nc; ++p) {
    const float* src = x.data() + p * h * w;
    float* dst = out.data() + p * ho * wo;
    for (std::size_t y = 0; y < ho; ++y) {
      for (std::size_t xx = 0; xx < wo; ++xx) {
        const float* s = src + 2 * y * w + 2 * xx;
        dst[y * wo + xx] = 0.25f * (s[0] + s[1] + s[w] + s[w + 1]);
      }
    }
  }
  if (track) {
    active_tape()->record([nc, h, w, ho, wo, dx = x.impl(), dout = out.impl()] {
      if (dout->grad.empty() || !wants_grad(dx)) return;
      for (std::size_t p = 0; p < nc; ++p) {
        float* gx = dx->grad_buffer() + p * h * w;
        const float* gy = dout->grad.data() + p * ho * wo;
        for (std::size_t y = 0; y < ho; ++y) {
          for (std::size_t xx = 0; xx < wo; ++xx) {
            const float g = 0.25f * gy[y * wo + xx];
            float* d = gx + 2 * y * w + 2 * xx;
            d[0] += g;
            d[1] += g;
            d[w] += g;
            d[w + 1] += g;
          }
        }
      }
    });
  }
  return out;
}

Tensor upsample_nearest2(const Tensor& x) {
  require_rank(x, 4, "upsample_nearest2");
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = 2 * h, wo = 2 * w;
  const bool track = tracking({&x});
  Tensor out = make_output(Shape{x.dim(0), x.dim(1), ho, wo}, track);
  for (std::size_t p = 0; p < nc; ++p) {
    const float* src = x.data() + p * h * w;
    float* dst = out.data() + p * ho * wo;
    for (std::size_t y = 0; y < ho; ++y) {
      for (std::size_t xx = 0; xx < wo; ++xx) dst[y * wo + xx] = src[(y / 2) * w + xx / 2];
    }
  }
  if (track) {
    active_tape()->record([nc, h, w, ho, wo, dx = x.impl(), dout = out.impl()] {
      if (dout->grad.empty() || !wants_grad(dx)) return;
      for (std::size_t p = 0; p < nc; ++p) {
        float* gx = dx->grad_buffer() + p * h * w;
        const float* gy = dout->grad.data() + p * ho * wo;
        for (std::size_t y = 0; y < ho; ++y) {
          for (std::size_t xx = 0; xx < wo; ++xx) gx[(y / 2) * w + xx / 2] += gy[y * wo + xx];
        }
      }
    });
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 4, "concat_channels");
  require_rank(b, 4, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), hw = a.dim(2) * a.dim(3);
  const std::size_t ca = a.dim(1) * hw, cb = b.dim(1) * hw;
  const bool track = tracking({&a, &b});
  Tensor out = make_output(Shape{n, a.dim(1) + b.dim(1), a.dim(2), a.dim(3)}, track);
  for (std::size_t i = 0; i < n; ++i) {
    float* dst = out.data() + i * (ca + cb);
    std::copy_n(a.data() + i * ca, ca, dst);
    std::copy_n(b.data() + i * cb, cb, dst + ca);
  }
  if (track) {
    active_tape()->record([n, ca, cb, da = a.impl(), db = b.impl(), dout = out.impl()] {
      if (dout->grad.empty()) return;
      for (std::size_t i = 0; i < n; ++i) {
        const float* g = dout->grad.data() + i * (ca + cb);
        if (wants_grad(da)) {
          float* ga = da->grad_buffer() + i * ca;
          for (std::size_t k = 0; k < ca; ++k) ga[k] += g[k];
        }
        if (wants_grad(db)) {
          float* gb = db->grad_buffer() + i * cb;
          for (std::size_t k = 0; k < cb; ++k) gb[k] += g[ca + k];
        }
      }
    });
  }
  return out;
}

}  // namespace mddpm::ops
