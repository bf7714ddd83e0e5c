// Copyright 2026 The nlcodec Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "nlcodec/autodiff.hpp"

namespace nlc {

// 2-d convolution as cross-correlation (no kernel flip), zero padding.
// x: {B,C,H,W}  w: {O,C,kh,kw}  b: {O}
inline Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  check_rank("conv2d input", x->value, 4);
  check_rank("conv2d weight", w->value, 4);
  check_rank("conv2d bias", b->value, 1);
  const int B = x->value.shape[0], C = x->value.shape[1];
  const int H = x->value.shape[2], W = x->value.shape[3];
  const int O = w->value.shape[0], kh = w->value.shape[2], kw = w->value.shape[3];
  if (w->value.shape[1] != C)
    throw dim_error("conv2d: weight in-channels " + std::to_string(w->value.shape[1]) +
                    " vs input channels " + std::to_string(C));
  if (b->value.shape[0] != O)
    throw dim_error("conv2d: bias size " + std::to_string(b->value.shape[0]) +
                    " vs out-channels " + std::to_string(O));
  if (stride < 1 || pad < 0) throw usage_error("conv2d: bad stride/pad");
  const int HO = (H + 2 * pad - kh) / stride + 1;
  const int WO = (W + 2 * pad - kw) / stride + 1;
  if (H + 2 * pad < kh || W + 2 * pad < kw)
    throw dim_error("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                    " exceeds padded input " + shape_str(x->value.shape));

  Tensor out({B, O, HO, WO});
  const double* xd = x->value.data.data();
  const double* wd = w->value.data.data();
  parallel_for(static_cast<int64_t>(B) * O * HO, [&](int64_t row) {
    const int oh = static_cast<int>(row % HO);
    const int o = static_cast<int>((row / HO) % O);
    const int bb = static_cast<int>(row / (static_cast<int64_t>(HO) * O));
    double* orow = &out.data[static_cast<size_t>(out.idx4(bb, o, oh, 0))];
    for (int ow = 0; ow < WO; ++ow) {
      double acc = b->value[o];
      for (int c = 0; c < C; ++c) {
        const double* xpl = xd + (static_cast<int64_t>(bb) * C + c) * H * W;
        const double* wpl = wd + (static_cast<int64_t>(o) * C + c) * kh * kw;
        for (int i = 0; i < kh; ++i) {
          const int hy = oh * stride + i - pad;
          if (hy < 0 || hy >= H) continue;
          const double* xr = xpl + static_cast<int64_t>(hy) * W;
          const double* wr = wpl + static_cast<int64_t>(i) * kw;
          for (int j = 0; j < kw; ++j) {
            const int wx = ow * stride + j - pad;
            if (wx < 0 || wx >= W) continue;
            acc += xr[wx] * wr[j];
          }
        }
      }
      orow[ow] = acc;
    }
  });

  Var n = make_op(std::move(out), {x, w, b});
  if (n->requires_grad)
    // Three passes, each parallel over planes no other task touches, so the
    // result is independent of the thread count.
    n->backward_fn = [self = n.get(), x, w, b, B, C, H, W, O, kh, kw, HO, WO, stride, pad] {
      if (b->requires_grad) {
        b->ensure_grad();
        for (int o = 0; o < O; ++o) {
          double acc = 0.0;
          for (int bb = 0; bb < B; ++bb)
            for (int oh = 0; oh < HO; ++oh)
              for (int ow = 0; ow < WO; ++ow) acc += self->grad[self->grad.idx4(bb, o, oh, ow)];
          b->grad[o] += acc;
        }
      }
      if (x->requires_grad) {
        x->ensure_grad();
        parallel_for_coarse(static_cast<int64_t>(B) * C, [&](int64_t t) {
          const int c = static_cast<int>(t % C);
          const int bb = static_cast<int>(t / C);
          double* gxp = &x->grad.data[(static_cast<int64_t>(bb) * C + c) * H * W];
          for (int o = 0; o < O; ++o) {
            const double* wpl = &w->value.data[(static_cast<int64_t>(o) * C + c) * kh * kw];
            for (int oh = 0; oh < HO; ++oh)
              for (int ow = 0; ow < WO; ++ow) {
                const double g = self->grad[self->grad.idx4(bb, o, oh, ow)];
                if (g == 0.0) continue;
                for (int i = 0; i < kh; ++i) {
                  const int hy = oh * stride + i - pad;
                  if (hy < 0 || hy >= H) continue;
                  for (int j = 0; j < kw; ++j) {
                    const int wx = ow * stride + j - pad;
                    if (wx < 0 || wx >= W) continue;
                    gxp[static_cast<int64_t>(hy) * W + wx] +=
                        g * wpl[static_cast<int64_t>(i) * kw + j];
                  }
                }
              }
          }
        });
      }
      if (w->requires_grad) {
        w->ensure_grad();
        parallel_for_coarse(static_cast<int64_t>(O) * C, [&](int64_t t) {
          const int c = static_cast<int>(t % C);
          const int o = static_cast<int>(t / C);
          double* gwp = &w->grad.data[(static_cast<int64_t>(o) * C + c) * kh * kw];
          for (int bb = 0; bb < B; ++bb) {
            const double* xpl = &x->value.data[(static_cast<int64_t>(bb) * C + c) * H * W];
            for (int oh = 0; oh < HO; ++oh)
              for (int ow = 0; ow < WO; ++ow) {
                const double g = self->grad[self->grad.idx4(bb, o, oh, ow)];
                if (g == 0.0) continue;
                for (int i = 0; i < kh; ++i) {
                  const int hy = oh * stride + i - pad;
                  if (hy < 0 || hy >= H) continue;
                  for (int j = 0; j < kw; ++j) {
                    const int wx = ow * stride + j - pad;
                    if (wx < 0 || wx >= W) continue;
                    gwp[static_cast<int64_t>(i) * kw + j] +=
                        g * xpl[static_cast<int64_t>(hy) * W + wx];
                  }
                }
              }
          }
        });
      }
    };
  return n;
}

// {B, C*f*f, H, W} -> {B, C, H*f, W*f};
// out[b][c][h*f+i][w*f+j] = in[b][(c*f+i)*f+j][h][w]
inline Var depth_to_space(const Var& x, int f) {
  check_rank("depth_to_space", x->value, 4);
  const int B = x->value.shape[0], CF = x->value.shape[1];
  const int H = x->value.shape[2], W = x->value.shape[3];
  if (f < 1 || CF % (f * f) != 0)
    throw dim_error("depth_to_space: channels " + std::to_string(CF) + " not divisible by " +
                    std::to_string(f) + "^2");
  const int C = CF / (f * f);
  Tensor out({B, C, H * f, W * f});
  for (int bb = 0; bb < B; ++bb)
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < f; ++i)
        for (int j = 0; j < f; ++j) {
          const int cin = (c * f + i) * f + j;
          for (int h = 0; h < H; ++h)
            for (int w2 = 0; w2 < W; ++w2)
              out.at4(bb, c, h * f + i, w2 * f + j) = x->value.at4(bb, cin, h, w2);
        }
  Var n = make_op(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), x, B, C, H, W, f] {
      x->ensure_grad();
      for (int bb = 0; bb < B; ++bb)
        for (int c = 0; c < C; ++c)
          for (int i = 0; i < f; ++i)
            for (int j = 0; j < f; ++j) {
              const int cin = (c * f + i) * f + j;
              for (int h = 0; h < H; ++h)
                for (int w2 = 0; w2 < W; ++w2)
                  x->grad[x->grad.idx4(bb, cin, h, w2)] +=
                      self->grad[self->grad.idx4(bb, c, h * f + i, w2 * f + j)];
            }
    };
  return n;
}

// Inverse rearrangement of depth_to_space.
inline Var space_to_depth(const Var& x, int f) {
  check_rank("space_to_depth", x->value, 4);
  const int B = x->value.shape[0], C = x->value.shape[1];
  const int HF = x->value.shape[2], WF = x->value.shape[3];
  if (f < 1 || HF % f != 0 || WF % f != 0)
    throw dim_error("space_to_depth: spatial " + shape_str(x->value.shape) +
                    " not divisible by " + std::to_string(f));
  const int H = HF / f, W = WF / f;
  Tensor out({B, C * f * f, H, W});
  for (int bb = 0; bb < B; ++bb)
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < f; ++i)
        for (int j = 0; j < f; ++j) {
          const int cout = (c * f + i) * f + j;
          for (int h = 0; h < H; ++h)
            for (int w2 = 0; w2 < W; ++w2)
              out.at4(bb, cout, h, w2) = x->value.at4(bb, c, h * f + i, w2 * f + j);
        }
  Var n = make_op(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), x, B, C, H, W, f] {
      x->ensure_grad();
      for (int bb = 0; bb < B; ++bb)
        for (int c = 0; c < C; ++c)
          for (int i = 0; i < f; ++i)
            for (int j = 0; j < f; ++j) {
              const int cout = (c * f + i) * f + j;
              for (int h = 0; h < H; ++h)
                for (int w2 = 0; w2 < W; ++w2)
                  x->grad[x->grad.idx4(bb, c, h * f + i, w2 * f + j)] +=
                      self->grad[self->grad.idx4(bb, cout, h, w2)];
            }
    };
  return n;
}

// 2x2 mean pooling, stride 2, truncating odd borders.
inline Var avg_pool2(const Var& x) {
  check_rank("avg_pool2", x->value, 4);
  const int B = x->value.shape[0], C = x->value.shape[1];
  const int H = x->value.shape[2], W = x->value.shape[3];
  const int HO = H / 2, WO = W / 2;
  if (HO < 1 || WO < 1) throw dim_error("avg_pool2: input too small " + shape_str(x->value.shape));
  Tensor out({B, C, HO, WO});
  for (int bb = 0; bb < B; ++bb)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < HO; ++h)
        for (int w2 = 0; w2 < WO; ++w2)
          out.at4(bb, c, h, w2) =
              0.25 * (x->value.at4(bb, c, 2 * h, 2 * w2) + x->value.at4(bb, c, 2 * h, 2 * w2 + 1) +
                      x->value.at4(bb, c, 2 * h + 1, 2 * w2) +
                      x->value.at4(bb, c, 2 * h + 1, 2 * w2 + 1));
  Var n = make_op(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), x, B, C, HO, WO] {
      x->ensure_grad();
      for (int bb = 0; bb < B; ++bb)
        for (int c = 0; c < C; ++c)
          for (int h = 0; h < HO; ++h)
            for (int w2 = 0; w2 < WO; ++w2) {
              const double g = 0.25 * self->grad[self->grad.idx4(bb, c, h, w2)];
              x->grad[x->grad.idx4(bb, c, 2 * h, 2 * w2)] += g;
              x->grad[x->grad.idx4(bb, c, 2 * h, 2 * w2 + 1)] += g;
              x->grad[x->grad.idx4(bb, c, 2 * h + 1, 2 * w2)] += g;
              x->grad[x->grad.idx4(bb, c, 2 * h + 1, 2 * w2 + 1)] += g;
            }
    };
  return n;
}

// Depthwise correlation with a fixed KxK kernel, valid padding (shrinks by
// K-1). The kernel is a constant: gradients flow to x only.
inline Var blur_valid(const Var& x, const Tensor& kernel) {
  check_rank("blur_valid input", x->value, 4);
  check_rank("blur_valid kernel", kernel, 2);
  const int B = x->value.shape[0], C = x->value.shape[1];
  const int H = x->value.shape[2], W = x->value.shape[3];
  const int K = kernel.shape[0];
  if (kernel.shape[1] != K) throw dim_error("blur_valid: kernel must be square");
  if (H < K || W < K)
    throw dim_error("blur_valid: input " + shape_str(x->value.shape) + " smaller than kernel " +
                    std::to_string(K));
  const int HO = H - K + 1, WO = W - K + 1;
  Tensor out({B, C, HO, WO});
  for (int bb = 0; bb < B; ++bb)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < HO; ++h)
        for (int w2 = 0; w2 < WO; ++w2) {
          double acc = 0.0;
          for (int i = 0; i < K; ++i)
            for (int j = 0; j < K; ++j)
              acc += kernel[static_cast<int64_t>(i) * K + j] * x->value.at4(bb, c, h + i, w2 + j);
          out.at4(bb, c, h, w2) = acc;
        }
  Var n = make_op(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), x, kernel, B, C, HO, WO, K] {
      x->ensure_grad();
      for (int bb = 0; bb < B; ++bb)
        for (int c = 0; c < C; ++c)
          for (int h = 0; h < HO; ++h)
            for (int w2 = 0; w2 < WO; ++w2) {
              const double g = self->grad[self->grad.idx4(bb, c, h, w2)];
              for (int i = 0; i < K; ++i)
                for (int j = 0; j < K; ++j)
                  x->grad[x->grad.idx4(bb, c, h + i, w2 + j)] +=
                      g * kernel[static_cast<int64_t>(i) * K + j];
            }
    };
  return n;
}

// Channel slice of a {B,C,H,W} tensor: channels [c0, c1).
inline Var slice_ch(const Var& x, int c0, int c1) {
  check_rank("slice_ch", x->value, 4);
  const int B = x->value.shape[0], C = x->value.shape[1];
  const int H = x->value.shape[2], W = x->value.shape[3];
  if (c0 < 0 || c1 <= c0 || c1 > C)
    throw dim_error("slice_ch: [" + std::to_string(c0) + "," + std::to_string(c1) +
                    ") out of range for " + shape_str(x->value.shape));
  const int64_t plane = static_cast<int64_t>(H) * W;
  Tensor out({B, c1 - c0, H, W});
  for (int b = 0; b < B; ++b)
    std::copy_n(&x->value.data[((static_cast<size_t>(b) * C) + c0) * plane],
                static_cast<size_t>(c1 - c0) * plane,
                &out.data[static_cast<size_t>(b) * (c1 - c0) * plane]);
  Var n = make_op(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), x, B, C, c0, c1, plane] {
      x->ensure_grad();
      const int64_t span = (c1 - c0) * plane;
      for (int b = 0; b < B; ++b) {
        const double* g = &self->grad.data[static_cast<size_t>(b) * span];
        double* gx = &x->grad.data[((static_cast<size_t>(b) * C) + c0) * plane];
        for (int64_t i = 0; i < span; ++i) gx[i] += g[i];
      }
    };
  return n;
}

// Concatenation of {B,C_i,H,W} tensors along the channel axis.
inline Var concat_ch(const std::vector<Var>& parts) {
  if (parts.empty()) throw usage_error("concat_ch: no inputs");
  check_rank("concat_ch", parts[0]->value, 4);
  const int B = parts[0]->value.shape[0];
  const int H = parts[0]->value.shape[2], W = parts[0]->value.shape[3];
  int C = 0;
  for (const Var& p : parts) {
    check_rank("concat_ch", p->value, 4);
    if (p->value.shape[0] != B || p->value.shape[2] != H || p->value.shape[3] != W)
      throw dim_error("concat_ch: mismatched part " + shape_str(p->value.shape));
    C += p->value.shape[1];
  }
  const int64_t plane = static_cast<int64_t>(H) * W;
  Tensor out({B, C, H, W});
  int off = 0;
  for (const Var& p : parts) {
    const int pc = p->value.shape[1];
    for (int b = 0; b < B; ++b)
      std::copy_n(&p->value.data[static_cast<size_t>(b) * pc * plane],
                  static_cast<size_t>(pc) * plane,
                  &out.data[((static_cast<size_t>(b) * C) + off) * plane]);
    off += pc;
  }
  Var n = make_op(std::move(out), parts);
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), parts, B, C, plane] {
      int off2 = 0;
      for (const Var& p : parts) {
        const int pc = p->value.shape[1];
        if (p->requires_grad) {
          p->ensure_grad();
          for (int b = 0; b < B; ++b) {
            const double* g = &self->grad.data[((static_cast<size_t>(b) * C) + off2) * plane];
            double* gp = &p->grad.data[static_cast<size_t>(b) * pc * plane];
            for (int64_t i = 0; i < pc * plane; ++i) gp[i] += g[i];
          }
        }
        off2 += pc;
      }
    };
  return n;
}

}  // namespace nlc
