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

// Non-local candidates for (p,q) are the spatial positions (u,v) with
// u + v < p + q: strictly earlier anti-diagonals, so for channel r every
// referenced code (same channel or proxy channels j < r) sits in a strictly
// earlier group. The first anti-diagonal has no candidates at all.
inline bool nonlocal_candidate(int p, int q, int u, int v) { return u + v < p + q; }

// Flags positions whose candidate set is nonempty. With a search window of
// half-width >= 1 this is exactly p+q > 0: a spatial neighbor on the
// previous anti-diagonal is always inside the window.
inline Tensor nonlocal_valid(int H, int W) {
  Tensor t({H, W});
  for (int p = 0; p < H; ++p)
    for (int q = 0; q < W; ++q) t[static_cast<int64_t>(p) * W + q] = (p + q > 0) ? 1.0 : 0.0;
  return t;
}

// Channel-similarity weights are learned as logs so they stay positive and
// the proxy distance stays a distance. Row r uses entries j < r, each
// starting at 1/(r+1); the unused upper triangle is inert.
inline Tensor rho_init(int M) {
  Tensor t({M, M});
  for (int r = 0; r < M; ++r)
    for (int j = 0; j < r; ++j)
      t[static_cast<int64_t>(r) * M + j] = -std::log(static_cast<double>(r + 1));
  return t;
}

// Squared proxy distance between positions (p,q) and (u,v) for channel r:
// sum over proxy channels j < r of wd[r][j] * (y_j(p,q) - y_j(u,v))^2.
// r = 0 has no proxies and the distance is the empty sum 0.
inline double proxy_distance(const Tensor& y, const Tensor& wd, int r, int p, int q, int u,
                             int v) {
  check_rank("proxy_distance", y, 3);
  const int M = y.shape[0];
  double acc = 0.0;
  for (int j = 0; j < r; ++j)
    acc += wd[static_cast<int64_t>(r) * M + j] *
           (y.at3(j, p, q) - y.at3(j, u, v)) * (y.at3(j, p, q) - y.at3(j, u, v));
  return acc;
}

// Softmin weight plane over the candidate set at (p,q): exp(-g_d) masked to
// candidates and normalized. Shifted by the candidate minimum before
// exponentiation. Returns an all-zero plane when no candidate exists.
// This is the brute-force reference used by tests; the fused operation
// below computes the same quantities.
inline Tensor nonlocal_weight_plane(const Tensor& y, const Tensor& wd, int r, int p, int q,
                                    int window = 0) {
  check_rank("nonlocal_weight_plane", y, 3);
  const int H = y.shape[1], W = y.shape[2];
  Tensor plane({H, W});
  const int u0 = window > 0 ? std::max(0, p - window) : 0;
  const int u1 = window > 0 ? std::min(H, p + window + 1) : H;
  const int v0 = window > 0 ? std::max(0, q - window) : 0;
  const int v1 = window > 0 ? std::min(W, q + window + 1) : W;
  double lo = std::numeric_limits<double>::infinity();
  for (int u = u0; u < u1; ++u)
    for (int v = v0; v < v1; ++v)
      if (nonlocal_candidate(p, q, u, v))
        lo = std::min(lo, proxy_distance(y, wd, r, p, q, u, v));
  if (!std::isfinite(lo)) return plane;
  double z = 0.0;
  for (int u = u0; u < u1; ++u)
    for (int v = v0; v < v1; ++v)
      if (nonlocal_candidate(p, q, u, v)) {
        double e = std::exp(-(proxy_distance(y, wd, r, p, q, u, v) - lo));
        plane[static_cast<int64_t>(u) * W + v] = e;
        z += e;
      }
  for (double& e : plane.data) e /= z;
  return plane;
}

// Fused non-local pass. Input y {B,M,H,W} (dequantized code values) and rho
// {M,M}; output {B,2M,H,W}: channels [0,M) hold the representation (softmin-
// weighted mean of same-channel values over the candidate set), channels
// [M,2M) the confidence (weighted mean proxy distance, low = reliable).
// Both are 0 where the candidate set is empty. window > 0 restricts
// candidates to a square of that half-width; 0 searches the whole plane.
inline Var nonlocal_rep_conf(const Var& y, const Var& rho, int window = 0) {
  check_rank("nonlocal_rep_conf", y->value, 4);
  check_rank("nonlocal_rep_conf rho", rho->value, 2);
  const int B = y->value.shape[0], M = y->value.shape[1];
  const int H = y->value.shape[2], W = y->value.shape[3];
  if (rho->value.shape[0] != M || rho->value.shape[1] != M)
    throw dim_error("nonlocal_rep_conf: rho " + shape_str(rho->value.shape) + " vs channels " +
                    std::to_string(M));
  const int64_t plane = static_cast<int64_t>(H) * W;
  Tensor wd({M, M});
  for (int64_t i = 0; i < wd.numel(); ++i) wd[i] = std::exp(rho->value[i]);

  Tensor out({B, 2 * M, H, W});
  const bool need_grad = grad_enabled() && (y->requires_grad || rho->requires_grad);
  // Stashes for backward: per (b,r,p,q) the weight and distance planes.
  auto wstash = std::make_shared<std::vector<double>>();
  auto gstash = std::make_shared<std::vector<double>>();
  if (need_grad) {
    wstash->assign(static_cast<size_t>(B) * M * plane * plane, 0.0);
    gstash->assign(static_cast<size_t>(B) * M * plane * plane, 0.0);
  }

  parallel_for(static_cast<int64_t>(B) * M, [&](int64_t br) {
    const int b = static_cast<int>(br / M), r = static_cast<int>(br % M);
    std::vector<double> gplane(static_cast<size_t>(plane));
    for (int p = 0; p < H; ++p)
      for (int q = 0; q < W; ++q) {
        const int u0 = window > 0 ? std::max(0, p - window) : 0;
        const int u1 = window > 0 ? std::min(H, p + window + 1) : H;
        const int v0 = window > 0 ? std::max(0, q - window) : 0;
        const int v1 = window > 0 ? std::min(W, q + window + 1) : W;
        double lo = std::numeric_limits<double>::infinity();
        for (int u = u0; u < u1; ++u)
          for (int v = v0; v < v1; ++v)
            if (nonlocal_candidate(p, q, u, v)) {
              double g = 0.0;
              for (int j = 0; j < r; ++j) {
                const double d = y->value.at4(b, j, p, q) - y->value.at4(b, j, u, v);
                g += wd[static_cast<int64_t>(r) * M + j] * d * d;
              }
              gplane[static_cast<size_t>(u) * W + v] = g;
              lo = std::min(lo, g);
            }
        if (!std::isfinite(lo)) continue;  // empty candidate set: rep = conf = 0
        double z = 0.0, rep = 0.0, conf = 0.0;
        for (int u = u0; u < u1; ++u)
          for (int v = v0; v < v1; ++v)
            if (nonlocal_candidate(p, q, u, v)) {
              const double g = gplane[static_cast<size_t>(u) * W + v];
              const double e = std::exp(-(g - lo));
              z += e;
              rep += e * y->value.at4(b, r, u, v);
              conf += e * g;
              if (need_grad) {
                const size_t si =
                    ((static_cast<size_t>(br) * H + p) * W + q) * static_cast<size_t>(plane) +
                    static_cast<size_t>(u) * W + v;
                (*wstash)[si] = e;
                (*gstash)[si] = g;
              }
            }
        out.at4(b, r, p, q) = rep / z;
        out.at4(b, M + r, p, q) = conf / z;
        if (need_grad) {
          double* wrow = &(*wstash)[((static_cast<size_t>(br) * H + p) * W + q) *
                                    static_cast<size_t>(plane)];
          for (int64_t e = 0; e < plane; ++e) wrow[e] /= z;
        }
      }
  });

  Var n = make_op(std::move(out), {y, rho});
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), y, rho, wd, wstash, gstash, B, M, H, W, plane, window] {
      const bool gy = y->requires_grad, gr = rho->requires_grad;
      if (gy) y->ensure_grad();
      if (gr) rho->ensure_grad();
      for (int b = 0; b < B; ++b)
        for (int r = 0; r < M; ++r)
          for (int p = 0; p < H; ++p)
            for (int q = 0; q < W; ++q) {
              const double grep = self->grad.at4(b, r, p, q);
              const double gconf = self->grad.at4(b, M + r, p, q);
              if (grep == 0.0 && gconf == 0.0) continue;
              const double rep = self->value.at4(b, r, p, q);
              const double conf = self->value.at4(b, M + r, p, q);
              const size_t base =
                  (((static_cast<size_t>(b) * M + r) * H + p) * W + q) *
                  static_cast<size_t>(plane);
              const int u0 = window > 0 ? std::max(0, p - window) : 0;
              const int u1 = window > 0 ? std::min(H, p + window + 1) : H;
              const int v0 = window > 0 ? std::max(0, q - window) : 0;
              const int v1 = window > 0 ? std::min(W, q + window + 1) : W;
              for (int u = u0; u < u1; ++u)
                for (int v = v0; v < v1; ++v) {
                  const double w = (*wstash)[base + static_cast<size_t>(u) * W + v];
                  if (w == 0.0) continue;  // non-candidate, or underflowed weight
                  const double g = (*gstash)[base + static_cast<size_t>(u) * W + v];
                  if (gy) y->grad.at4(b, r, u, v) += grep * w;
                  // d rep / d g(u,v) = -w (y_r(u,v) - rep);
                  // d conf / d g(u,v) = w (1 - (g(u,v) - conf)).
                  const double dg = grep * (-w * (y->value.at4(b, r, u, v) - rep)) +
                                    gconf * (w * (1.0 - (g - conf)));
                  if (dg == 0.0) continue;
                  for (int j = 0; j < r; ++j) {
                    const double d = y->value.at4(b, j, p, q) - y->value.at4(b, j, u, v);
                    const double wj = wd[static_cast<int64_t>(r) * M + j];
                    if (gy) {
                      y->grad.at4(b, j, p, q) += dg * wj * 2.0 * d;
                      y->grad.at4(b, j, u, v) -= dg * wj * 2.0 * d;
                    }
                    if (gr) rho->grad[static_cast<int64_t>(r) * M + j] += dg * wj * d * d;
                  }
                }
            }
    };
  return n;
}

}  // namespace nlc
