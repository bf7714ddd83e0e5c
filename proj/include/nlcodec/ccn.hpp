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

#include "nlcodec/quantizer.hpp"

namespace nlc {

// Codes are ordered by anti-diagonal group index r+p+q. A prediction for a
// code in group k may read only codes in groups < k, which is what makes all
// codes of one group decodable in parallel from the previous groups.
inline int group_of(int r, int p, int q) { return r + p + q; }

struct Pos {
  int r, p, q;
};

// Groups 0..K-1 partition the M*H*W positions; members are listed in (r,p,q)
// lexicographic order, which is the canonical coding order within a group.
struct GroupSchedule {
  int M, H, W, K;
  std::vector<std::vector<Pos>> gp;

  GroupSchedule(int m, int h, int w) : M(m), H(h), W(w), K(m + h + w - 2) {
    if (m < 1 || h < 1 || w < 1)
      throw usage_error("group schedule: non-positive dims " + std::to_string(m) + "," +
                        std::to_string(h) + "," + std::to_string(w));
    gp.resize(static_cast<size_t>(K));
    for (int r = 0; r < M; ++r)
      for (int p = 0; p < H; ++p)
        for (int q = 0; q < W; ++q) gp[static_cast<size_t>(r + p + q)].push_back({r, p, q});
  }

  int group_index(int r, int p, int q) const {
    if (r < 0 || r >= M || p < 0 || p >= H || q < 0 || q >= W)
      throw usage_error("group index: position (" + std::to_string(r) + "," + std::to_string(p) +
                        "," + std::to_string(q) + ") outside " + std::to_string(M) + "x" +
                        std::to_string(H) + "x" + std::to_string(W));
    return r + p + q;
  }
};

// A masked conv tap reads in-channel s at spatial offset (u,v). The input
// kind admits strictly earlier groups only (s+u+v < r), so raw codes at the
// predicted position never leak in. The hidden kind also admits s+u+v = r:
// hidden features at equal group index were themselves built from strictly
// earlier codes, so causality is preserved through any stack depth.
enum class MaskKind { input, hidden };

inline bool mask_allows(MaskKind kind, int r, int s, int u, int v) {
  const int g = s + u + v;
  return kind == MaskKind::input ? g < r : g <= r;
}

// Test hook: when set, tap lists built afterwards span the full window and
// the causality contract is deliberately broken. Exists so the causality
// probe can be shown to fail on an unmasked layer.
inline bool& sabotage_mask() {
  static bool f = false;
  return f;
}

struct Tap {
  int s, u, v;
};

// Per out-channel tap lists; masked taps are skipped entirely rather than
// multiplied by zero, so causality holds exactly, not just numerically.
inline std::vector<std::vector<Tap>> build_taps(MaskKind kind, int ks, int M) {
  if (ks < 0) throw usage_error("build_taps: negative kernel half-width");
  std::vector<std::vector<Tap>> taps(static_cast<size_t>(M));
  for (int r = 0; r < M; ++r)
    for (int s = 0; s < M; ++s)
      for (int u = -ks; u <= ks; ++u)
        for (int v = -ks; v <= ks; ++v)
          if (sabotage_mask() || mask_allows(kind, r, s, u, v))
            taps[static_cast<size_t>(r)].push_back({s, u, v});
  return taps;
}

// Conv over code-channel-structured features. Activations are {B, Bc*M, H, W}
// with channel index c*M + r (feature block c of code channel r); raw codes
// are the Bc=1 case. Weights are stored dense over the full window with
// layout {M, M, kh, kw, Bo, Bi} = [r][s][dy][dx][i][j]; entries outside the
// tap lists stay at their initial zero and receive no gradient.
struct MaskedConv {
  MaskKind kind = MaskKind::hidden;
  int M = 0, Bi = 0, Bo = 0, ks = 0;
  Var w, b;
  std::vector<std::vector<Tap>> taps;
};

inline MaskedConv make_masked_conv(ParamStore& ps, const std::string& name, MaskKind kind, int M,
                                   int Bi, int Bo, int ks, Rng& rng) {
  MaskedConv c;
  c.kind = kind;
  c.M = M;
  c.Bi = Bi;
  c.Bo = Bo;
  c.ks = ks;
  c.taps = build_taps(kind, ks, M);
  const int k = 2 * ks + 1;
  Tensor w({M, M, k, k, Bo, Bi});
  for (int r = 0; r < M; ++r) {
    const size_t fan = c.taps[static_cast<size_t>(r)].size() * static_cast<size_t>(Bi);
    const double scale = 1.0 / std::sqrt(static_cast<double>(std::max<size_t>(1, fan)));
    for (const Tap& t : c.taps[static_cast<size_t>(r)]) {
      const int64_t base =
          ((((static_cast<int64_t>(r) * M + t.s) * k + (t.u + ks)) * k + (t.v + ks)) * Bo) * Bi;
      for (int64_t e = 0; e < static_cast<int64_t>(Bo) * Bi; ++e)
        w[base + e] = rng.normal() * scale;
    }
  }
  c.w = ps.add(name + ".w", std::move(w));
  c.b = ps.add(name + ".b", Tensor({Bo}));
  return c;
}

inline Var masked_conv(const Var& x, const MaskedConv& layer) {
  check_rank("masked_conv", x->value, 4);
  const int B = x->value.shape[0], M = layer.M, Bi = layer.Bi, Bo = layer.Bo, ks = layer.ks;
  const int H = x->value.shape[2], W = x->value.shape[3];
  if (x->value.shape[1] != Bi * M)
    throw dim_error("masked_conv: input channels " + std::to_string(x->value.shape[1]) +
                    " vs expected " + std::to_string(Bi * M));
  const int k = 2 * ks + 1;
  Tensor out({B, Bo * M, H, W});
  const Tensor& wt = layer.w->value;
  const Tensor& bt = layer.b->value;
  // Bias is shared across code channels.
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < Bo; ++i)
      std::fill_n(&out.data[out.idx4(b, i * M, 0, 0)], static_cast<size_t>(M) * H * W, bt[i]);
  parallel_for(static_cast<int64_t>(B) * M, [&](int64_t br) {
    const int b = static_cast<int>(br / M), r = static_cast<int>(br % M);
    for (const Tap& t : layer.taps[static_cast<size_t>(r)]) {
      const int64_t wbase =
          ((((static_cast<int64_t>(r) * M + t.s) * k + (t.u + ks)) * k + (t.v + ks)) * Bo) * Bi;
      const int p0 = std::max(0, -t.u), p1 = std::min(H, H - t.u);
      const int q0 = std::max(0, -t.v), q1 = std::min(W, W - t.v);
      for (int i = 0; i < Bo; ++i)
        for (int j = 0; j < Bi; ++j) {
          const double wv = wt[wbase + static_cast<int64_t>(i) * Bi + j];
          if (wv == 0.0) continue;
          for (int p = p0; p < p1; ++p) {
            double* orow = &out.data[out.idx4(b, i * M + r, p, 0)];
            const double* xrow = &x->value.data[x->value.idx4(b, j * M + t.s, p + t.u, t.v)];
            for (int q = q0; q < q1; ++q) orow[q] += wv * xrow[q];
          }
        }
    }
  });
  Var n = make_op(std::move(out), {x, layer.w, layer.b});
  if (n->requires_grad) {
    auto taps = layer.taps;
    Var xw = layer.w, xb = layer.b;
    n->backward_fn = [self = n.get(), x, xw, xb, taps, B, M, Bi, Bo, ks, k, H, W] {
      const bool gx = x->requires_grad, gw = xw->requires_grad, gb = xb->requires_grad;
      if (gx) x->ensure_grad();
      if (gw) xw->ensure_grad();
      if (gb) xb->ensure_grad();
      if (gb)
        for (int b = 0; b < B; ++b)
          for (int i = 0; i < Bo; ++i) {
            const double* g = &self->grad.data[self->grad.idx4(b, i * M, 0, 0)];
            double acc = 0.0;
            for (int64_t e = 0; e < static_cast<int64_t>(M) * H * W; ++e) acc += g[e];
            xb->grad[i] += acc;
          }
      if (!gx && !gw) return;
      for (int b = 0; b < B; ++b)
        for (int r = 0; r < M; ++r)
          for (const Tap& t : taps[static_cast<size_t>(r)]) {
            const int64_t wbase =
                ((((static_cast<int64_t>(r) * M + t.s) * k + (t.u + ks)) * k + (t.v + ks)) * Bo) *
                Bi;
            const int p0 = std::max(0, -t.u), p1 = std::min(H, H - t.u);
            const int q0 = std::max(0, -t.v), q1 = std::min(W, W - t.v);
            for (int i = 0; i < Bo; ++i)
              for (int j = 0; j < Bi; ++j) {
                const int64_t wi = wbase + static_cast<int64_t>(i) * Bi + j;
                const double wv = xw->value[wi];
                double wacc = 0.0;
                for (int p = p0; p < p1; ++p) {
                  const double* grow = &self->grad.data[self->grad.idx4(b, i * M + r, p, 0)];
                  const double* xrow = &x->value.data[x->value.idx4(b, j * M + t.s, p + t.u, t.v)];
                  double* gxrow =
                      gx ? &x->grad.data[x->grad.idx4(b, j * M + t.s, p + t.u, t.v)] : nullptr;
                  for (int q = q0; q < q1; ++q) {
                    const double g = grow[q];
                    if (g == 0.0) continue;
                    wacc += g * xrow[q];
                    if (gx) gxrow[q] += wv * g;
                  }
                }
                if (gw) xw->grad[wi] += wacc;
              }
          }
    };
  }
  return n;
}

// Perturbs all codes in groups >= k and reports the largest absolute change
// in the probability tables of codes in groups < k. The contract is exact
// invariance; anything above 1e-12 is a causality violation.
template <class TablesFn>
double causality_probe(TablesFn&& tables_fn, const CodeBlock& y, int k, int L, Rng& rng) {
  GroupSchedule sched(y.M, y.H, y.W);
  Tensor base = tables_fn(y);
  CodeBlock mut = y;
  for (int g = k; g < sched.K; ++g)
    for (const Pos& pos : sched.gp[static_cast<size_t>(g)])
      mut.at(pos.r, pos.p, pos.q) = static_cast<uint8_t>(rng.randint(L));
  Tensor probed = tables_fn(mut);
  check_same_shape("causality_probe", base, probed);
  double worst = 0.0;
  for (int g = 0; g < std::min(k, sched.K); ++g)
    for (const Pos& pos : sched.gp[static_cast<size_t>(g)])
      for (int l = 0; l < L; ++l) {
        const int64_t idx =
            ((static_cast<int64_t>(pos.r) * y.H + pos.p) * y.W + pos.q) * L + l;
        worst = std::max(worst, std::abs(base[idx] - probed[idx]));
      }
  return worst;
}

}  // namespace nlc
