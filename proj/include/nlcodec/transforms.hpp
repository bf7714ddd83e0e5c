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

#include "nlcodec/image.hpp"
#include "nlcodec/ops.hpp"

namespace nlc {

struct TransformConfig {
  int width = 192;   // feature channels throughout both transforms
  int M = 192;       // latent channels
  int a0 = 2, a1 = 2, a2 = 2;  // U-block down/up factors
};

// Padded input dims must divide by 8 (three stride-2 stages) and each stage's
// U-block needs its own input divisible by a0*a1*a2; with the default (2,2,2)
// the overall requirement is a multiple of 64.
inline int required_multiple(const TransformConfig& cfg) {
  return 8 * cfg.a0 * cfg.a1 * cfg.a2;
}

struct ConvLayer {
  Var w, b;
  int stride = 1, pad = 0;
};

inline ConvLayer make_conv(ParamStore& ps, const std::string& name, int cin, int cout, int k,
                           int stride, int pad, Rng& rng) {
  Tensor w({cout, cin, k, k});
  const double scale = std::sqrt(2.0 / (static_cast<double>(cin) * k * k));
  for (double& v : w.data) v = rng.normal() * scale;
  ConvLayer c;
  c.w = ps.add(name + ".w", std::move(w));
  c.b = ps.add(name + ".b", Tensor({cout}));
  c.stride = stride;
  c.pad = pad;
  return c;
}

inline Var apply_conv(const ConvLayer& c, const Var& x) {
  return conv2d(x, c.w, c.b, c.stride, c.pad);
}

struct PreluLayer {
  Var slope;
};

inline PreluLayer make_prelu(ParamStore& ps, const std::string& name, int channels) {
  return {ps.add(name + ".slope", Tensor({channels}, 0.25))};
}

inline Var apply_prelu(const PreluLayer& a, const Var& x) { return prelu(x, a.slope, 1); }

// Shape-preserving block: three stride-down convs, then three conv + pixel-
// rearrange upsampling stages, each upsampled feature summed with the
// feature that entered the matching downsampling conv. With all conv
// weights zero the block reduces to the identity through the outermost skip.
struct UnetBlock {
  int a0, a1, a2;
  ConvLayer d0, d1, d2, u2, u1, u0;
  PreluLayer pd0, pd1, pd2, pu2, pu1, pu0;
};

inline UnetBlock make_unet_block(ParamStore& ps, const std::string& name, int width,
                                 const TransformConfig& cfg, Rng& rng) {
  UnetBlock b;
  b.a0 = cfg.a0;
  b.a1 = cfg.a1;
  b.a2 = cfg.a2;
  b.d0 = make_conv(ps, name + ".d0", width, width, 3, cfg.a0, 1, rng);
  b.pd0 = make_prelu(ps, name + ".pd0", width);
  b.d1 = make_conv(ps, name + ".d1", width, width, 3, cfg.a1, 1, rng);
  b.pd1 = make_prelu(ps, name + ".pd1", width);
  b.d2 = make_conv(ps, name + ".d2", width, width, 3, cfg.a2, 1, rng);
  b.pd2 = make_prelu(ps, name + ".pd2", width);
  b.u2 = make_conv(ps, name + ".u2", width, width * cfg.a2 * cfg.a2, 3, 1, 1, rng);
  b.pu2 = make_prelu(ps, name + ".pu2", width * cfg.a2 * cfg.a2);
  b.u1 = make_conv(ps, name + ".u1", width, width * cfg.a1 * cfg.a1, 3, 1, 1, rng);
  b.pu1 = make_prelu(ps, name + ".pu1", width * cfg.a1 * cfg.a1);
  b.u0 = make_conv(ps, name + ".u0", width, width * cfg.a0 * cfg.a0, 3, 1, 1, rng);
  b.pu0 = make_prelu(ps, name + ".pu0", width * cfg.a0 * cfg.a0);
  return b;
}

inline Var unet_block(const UnetBlock& b, const Var& x) {
  check_rank("unet_block", x->value, 4);
  const int h = x->value.shape[2], w = x->value.shape[3];
  const int need = b.a0 * b.a1 * b.a2;
  if (h % need != 0 || w % need != 0)
    throw dim_error("unet_block: spatial dims " + std::to_string(h) + "x" + std::to_string(w) +
                    " must be multiples of " + std::to_string(need));
  Var s0 = x;
  Var d0 = apply_prelu(b.pd0, apply_conv(b.d0, x));
  Var d1 = apply_prelu(b.pd1, apply_conv(b.d1, d0));
  Var d2 = apply_prelu(b.pd2, apply_conv(b.d2, d1));
  Var u = add(depth_to_space(apply_prelu(b.pu2, apply_conv(b.u2, d2)), b.a2), d1);
  u = add(depth_to_space(apply_prelu(b.pu1, apply_conv(b.u1, u)), b.a1), d0);
  u = add(depth_to_space(apply_prelu(b.pu0, apply_conv(b.u0, u)), b.a0), s0);
  return u;
}

// Image {B,3,H,W} -> latent {B,M,H/8,W/8}, every entry strictly in (0,1)
// through the closing sigmoid so the center ladder's range always covers it.
struct AnalysisTransform {
  TransformConfig cfg;
  ConvLayer in0, in1, in2, out;
  PreluLayer p0, p1, p2;
  UnetBlock b0, b1, b2;
};

inline AnalysisTransform make_analysis(ParamStore& ps, const TransformConfig& cfg, Rng& rng) {
  AnalysisTransform t;
  t.cfg = cfg;
  t.in0 = make_conv(ps, "ga.in0", 3, cfg.width, 5, 2, 2, rng);
  t.p0 = make_prelu(ps, "ga.p0", cfg.width);
  t.b0 = make_unet_block(ps, "ga.b0", cfg.width, cfg, rng);
  t.in1 = make_conv(ps, "ga.in1", cfg.width, cfg.width, 5, 2, 2, rng);
  t.p1 = make_prelu(ps, "ga.p1", cfg.width);
  t.b1 = make_unet_block(ps, "ga.b1", cfg.width, cfg, rng);
  t.in2 = make_conv(ps, "ga.in2", cfg.width, cfg.width, 5, 2, 2, rng);
  t.p2 = make_prelu(ps, "ga.p2", cfg.width);
  t.b2 = make_unet_block(ps, "ga.b2", cfg.width, cfg, rng);
  t.out = make_conv(ps, "ga.out", cfg.width, cfg.M, 3, 1, 1, rng);
  return t;
}

inline Var analysis(const AnalysisTransform& t, const Var& x) {
  check_rank("analysis", x->value, 4);
  const int mul = required_multiple(t.cfg);
  if (x->value.shape[1] != 3)
    throw dim_error("analysis: expected 3 input channels, got " +
                    std::to_string(x->value.shape[1]));
  if (x->value.shape[2] % mul != 0 || x->value.shape[3] % mul != 0)
    throw dim_error("analysis: input dims " + std::to_string(x->value.shape[2]) + "x" +
                    std::to_string(x->value.shape[3]) + " must be multiples of " +
                    std::to_string(mul) + " (pad first)");
  Var h = unet_block(t.b0, apply_prelu(t.p0, apply_conv(t.in0, x)));
  h = unet_block(t.b1, apply_prelu(t.p1, apply_conv(t.in1, h)));
  h = unet_block(t.b2, apply_prelu(t.p2, apply_conv(t.in2, h)));
  return sigmoid_v(apply_conv(t.out, h));
}

// Latent {B,M,H,W} (dequantized center values) -> image {B,3,8H,8W}.
struct SynthesisTransform {
  TransformConfig cfg;
  ConvLayer in, up0, up1, up2, out;
  PreluLayer pin, p0, p1, p2;
  UnetBlock b0, b1, b2;
};

inline SynthesisTransform make_synthesis(ParamStore& ps, const TransformConfig& cfg, Rng& rng) {
  SynthesisTransform t;
  t.cfg = cfg;
  t.in = make_conv(ps, "gs.in", cfg.M, cfg.width, 3, 1, 1, rng);
  t.pin = make_prelu(ps, "gs.pin", cfg.width);
  t.b0 = make_unet_block(ps, "gs.b0", cfg.width, cfg, rng);
  t.up0 = make_conv(ps, "gs.up0", cfg.width, cfg.width * 4, 3, 1, 1, rng);
  t.p0 = make_prelu(ps, "gs.p0", cfg.width * 4);
  t.b1 = make_unet_block(ps, "gs.b1", cfg.width, cfg, rng);
  t.up1 = make_conv(ps, "gs.up1", cfg.width, cfg.width * 4, 3, 1, 1, rng);
  t.p1 = make_prelu(ps, "gs.p1", cfg.width * 4);
  t.b2 = make_unet_block(ps, "gs.b2", cfg.width, cfg, rng);
  t.up2 = make_conv(ps, "gs.up2", cfg.width, cfg.width * 4, 3, 1, 1, rng);
  t.p2 = make_prelu(ps, "gs.p2", cfg.width * 4);
  t.out = make_conv(ps, "gs.out", cfg.width, 3, 5, 1, 2, rng);
  return t;
}

inline Var synthesis(const SynthesisTransform& t, const Var& y) {
  check_rank("synthesis", y->value, 4);
  if (y->value.shape[1] != t.cfg.M)
    throw dim_error("synthesis: expected " + std::to_string(t.cfg.M) + " channels, got " +
                    std::to_string(y->value.shape[1]));
  Var h = apply_prelu(t.pin, apply_conv(t.in, y));
  h = depth_to_space(apply_prelu(t.p0, apply_conv(t.up0, unet_block(t.b0, h))), 2);
  h = depth_to_space(apply_prelu(t.p1, apply_conv(t.up1, unet_block(t.b1, h))), 2);
  h = depth_to_space(apply_prelu(t.p2, apply_conv(t.up2, unet_block(t.b2, h))), 2);
  return apply_conv(t.out, h);
}

// Replicates the right and bottom edges out to the requested dims.
inline Image pad_replicate_to(const Image& im, int H, int W) {
  if (H < im.h || W < im.w) throw usage_error("pad_replicate_to: target smaller than image");
  if (H == im.h && W == im.w) return im;
  Image out(H, W);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        out.at(c, y, x) = im.at(c, std::min(y, im.h - 1), std::min(x, im.w - 1));
  return out;
}

// Pads to the next multiple of factor. The caller records the original dims
// and crops the synthesis output back to them.
inline Image pad_replicate(const Image& im, int factor) {
  if (factor < 1) throw usage_error("pad_replicate: factor must be positive");
  return pad_replicate_to(im, (im.h + factor - 1) / factor * factor,
                          (im.w + factor - 1) / factor * factor);
}

}  // namespace nlc
