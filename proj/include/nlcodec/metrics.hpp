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

#include "nlcodec/ops.hpp"

namespace nlc {

inline double mse(const Tensor& a, const Tensor& b) {
  check_same_shape("mse", a, b);
  double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.numel());
}

// Peak signal is 1 (images live in [0,1]). A zero-error pair reports +inf.
inline double psnr_db(double mse_value) {
  if (mse_value <= 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse_value);
}

inline Var mse_loss(const Var& a, const Var& b) {
  Var d = sub(a, b);
  return mean_all(mul(d, d));
}

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr int kMsssimMaxScales = 5;
inline constexpr double kMsssimWeights[kMsssimMaxScales] = {0.0448, 0.2856, 0.3001, 0.2363,
                                                            0.1333};

inline Tensor gaussian_window() {
  Tensor k({kSsimWindow, kSsimWindow});
  const double c = (kSsimWindow - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i)
    for (int j = 0; j < kSsimWindow; ++j) {
      const double d2 = (i - c) * (i - c) + (j - c) * (j - c);
      const double v = std::exp(-d2 / (2.0 * kSsimSigma * kSsimSigma));
      k[static_cast<int64_t>(i) * kSsimWindow + j] = v;
      sum += v;
    }
  for (double& v : k.data) v /= sum;
  return k;
}

// Largest scale count, capped at 5, whose final dyadic downsampling still
// fits the 11x11 window.
inline int msssim_scales(int h, int w) {
  const int m = std::min(h, w);
  if (m < kSsimWindow)
    throw dim_error("msssim_scales: image " + std::to_string(h) + "x" + std::to_string(w) +
                    " smaller than the 11x11 window");
  int s = 1;
  while (s < kMsssimMaxScales && (m >> s) >= kSsimWindow) ++s;
  return s;
}

// Multi-scale structural similarity with peak 1. The scale count adapts to
// the image and the per-scale exponents are renormalized to sum 1 so small
// images stay comparable to full five-scale scores. Means of the contrast
// terms pass through a relu before the fractional power; the power itself
// floors its base, so the result is always finite.
inline Var ms_ssim(const Var& x0, const Var& y0) {
  check_rank("ms_ssim", x0->value, 4);
  check_same_shape("ms_ssim", x0->value, y0->value);
  const int S = msssim_scales(x0->value.shape[2], x0->value.shape[3]);
  double wsum = 0.0;
  for (int j = 0; j < S; ++j) wsum += kMsssimWeights[j];
  const Tensor kern = gaussian_window();
  Var x = x0, y = y0;
  Var result;
  for (int j = 0; j < S; ++j) {
    if (j > 0) {
      x = avg_pool2(x);
      y = avg_pool2(y);
    }
    Var mx = blur_valid(x, kern);
    Var my = blur_valid(y, kern);
    Var sxx = sub(blur_valid(mul(x, x), kern), mul(mx, mx));
    Var syy = sub(blur_valid(mul(y, y), kern), mul(my, my));
    Var sxy = sub(blur_valid(mul(x, y), kern), mul(mx, my));
    Var cs = div(affine(sxy, 2.0, kSsimC2), affine(add(sxx, syy), 1.0, kSsimC2));
    Var term;
    if (j + 1 < S) {
      term = relu(mean_all(cs));
    } else {
      Var l = div(affine(mul(mx, my), 2.0, kSsimC1),
                  affine(add(mul(mx, mx), mul(my, my)), 1.0, kSsimC1));
      term = relu(mean_all(mul(l, cs)));
    }
    term = pow_const(term, kMsssimWeights[j] / wsum);
    result = (j == 0) ? term : mul(result, term);
  }
  return result;
}

inline double ms_ssim_value(const Tensor& a, const Tensor& b) {
  NoGradGuard g;
  return ms_ssim(constant(a), constant(b))->value.data[0];
}

// Distortion used during optimization: 100 * (1 - MS-SSIM).
inline Var msssim_loss(const Var& x, const Var& y) {
  return affine(ms_ssim(x, y), -100.0, 100.0);
}

// Bits per pixel of the source image, counting every stream byte.
inline double bits_per_pixel(size_t total_bytes, int image_h, int image_w) {
  return 8.0 * static_cast<double>(total_bytes) /
         (static_cast<double>(image_h) * static_cast<double>(image_w));
}

}  // namespace nlc
