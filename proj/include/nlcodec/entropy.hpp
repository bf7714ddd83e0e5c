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

#include "nlcodec/ccn.hpp"
#include "nlcodec/nonlocal.hpp"
#include "nlcodec/ops.hpp"

namespace nlc {

// Probability floor applied before logs and before table quantization.
inline constexpr double kProbFloor = 1e-9;

struct EntropyConfig {
  int M = 0;        // code channels
  int L = 8;        // quantization centers per channel
  int C = 3;        // mixture components
  int nt = 3;       // feature blocks per code channel in the trunk
  int nres = 3;     // residual trunk blocks
  int ks = 2;       // masked conv half-width (5x5 window)
  int window = 0;   // non-local search half-width; 0 = whole plane
  bool nonlocal = true;  // false zeroes the attention path (local-only ablation)
};

struct ResBlock {
  MaskedConv c1, c2;
  Var s1;
};

// Shared prediction trunk: one input-kind conv for local context, the
// non-local representation/confidence pass, an attention gate, then hidden
// masked convs. Every layer keeps the group-causality contract, so the
// trunk output at (r,p,q) is a function of codes in groups < r+p+q only.
struct EntropyBackbone {
  EntropyConfig cfg;
  MaskedConv in_conv, fuse_conv, adapt_conv;
  Var rho, adapt_slope;
  std::vector<ResBlock> blocks;
};

inline EntropyBackbone make_backbone(ParamStore& ps, const std::string& prefix,
                                     const EntropyConfig& cfg, Rng& rng) {
  if (cfg.M < 1 || cfg.L < 2 || cfg.L > 255 || cfg.C < 1 || cfg.C > 16 || cfg.nt < 1 ||
      cfg.nres < 0 || cfg.window < 0)
    throw usage_error("entropy config: M >= 1, 2 <= L <= 255, 1 <= C <= 16, nt >= 1 required");
  EntropyBackbone bb;
  bb.cfg = cfg;
  bb.in_conv =
      make_masked_conv(ps, prefix + ".in", MaskKind::input, cfg.M, 1, cfg.nt, cfg.ks, rng);
  bb.rho = ps.add(prefix + ".rho", rho_init(cfg.M));
  bb.fuse_conv = make_masked_conv(ps, prefix + ".fuse", MaskKind::hidden, cfg.M, cfg.nt + 1, 1,
                                  cfg.ks, rng);
  bb.adapt_conv = make_masked_conv(ps, prefix + ".adapt", MaskKind::hidden, cfg.M, cfg.nt + 1,
                                   cfg.nt, cfg.ks, rng);
  bb.adapt_slope = ps.add(prefix + ".adapt_slope", Tensor({cfg.nt * cfg.M}, 0.25));
  for (int i = 0; i < cfg.nres; ++i) {
    ResBlock rb;
    const std::string base = prefix + ".res" + std::to_string(i);
    rb.c1 = make_masked_conv(ps, base + ".c1", MaskKind::hidden, cfg.M, cfg.nt, cfg.nt, cfg.ks,
                             rng);
    rb.s1 = ps.add(base + ".s1", Tensor({cfg.nt * cfg.M}, 0.25));
    rb.c2 = make_masked_conv(ps, base + ".c2", MaskKind::hidden, cfg.M, cfg.nt, cfg.nt, cfg.ks,
                             rng);
    bb.blocks.push_back(std::move(rb));
  }
  return bb;
}

// y: dequantized code values {B,M,H,W}. Returns trunk features {B,nt*M,H,W}.
inline Var backbone_features(const EntropyBackbone& bb, const Var& y) {
  check_rank("backbone_features", y->value, 4);
  const int B = y->value.shape[0], M = bb.cfg.M;
  const int H = y->value.shape[2], W = y->value.shape[3];
  Var local = masked_conv(y, bb.in_conv);
  Var nlhalf;
  if (bb.cfg.nonlocal) {
    Var nl = nonlocal_rep_conf(y, bb.rho, bb.cfg.window);
    Var rep = slice_ch(nl, 0, M);
    Var conf = slice_ch(nl, M, 2 * M);
    Var alpha = sigmoid_v(masked_conv(concat_ch({local, conf}), bb.fuse_conv));
    nlhalf = mul(alpha, rep);
  } else {
    nlhalf = constant(Tensor({B, M, H, W}));
  }
  Var h = prelu(masked_conv(concat_ch({local, nlhalf}), bb.adapt_conv), bb.adapt_slope, 1);
  // Residual trunk block: conv, PReLU, conv, additive skip.
  for (const ResBlock& rb : bb.blocks)
    h = add(h, masked_conv(prelu(masked_conv(h, rb.c1), rb.s1, 1), rb.c2));
  return h;
}

// ---- mixture entropy model (training) ----

struct MoGModel {
  EntropyBackbone bb;
  MaskedConv pi_head, mu_head, s_head;
};

// Raw scale logs are clamped so the scale lands in [1e-3, 1e3]; clamping
// before the exp keeps the backward pass free of overflow products.
inline constexpr double kLogScaleLo = -6.907755278982137;  // ln 1e-3
inline constexpr double kLogScaleHi = 6.907755278982137;   // ln 1e3

inline MoGModel make_mog_model(ParamStore& ps, const std::string& prefix,
                               const EntropyConfig& cfg, Rng& rng) {
  MoGModel m;
  m.bb = make_backbone(ps, prefix, cfg, rng);
  m.pi_head = make_masked_conv(ps, prefix + ".pi", MaskKind::hidden, cfg.M, cfg.nt, cfg.C,
                               cfg.ks, rng);
  m.mu_head = make_masked_conv(ps, prefix + ".mu", MaskKind::hidden, cfg.M, cfg.nt, cfg.C,
                               cfg.ks, rng);
  m.s_head = make_masked_conv(ps, prefix + ".s", MaskKind::hidden, cfg.M, cfg.nt, cfg.C, cfg.ks,
                              rng);
  // Means start mid-range of the (0,1) ladder; scales start at 0.25.
  for (int64_t i = 0; i < m.mu_head.b->value.numel(); ++i) m.mu_head.b->value[i] = 0.5;
  for (int64_t i = 0; i < m.s_head.b->value.numel(); ++i)
    m.s_head.b->value[i] = std::log(0.25);
  return m;
}

// Mixture parameters per code: each tensor {B, C*M, H, W} with component c of
// channel r at channel index c*M + r. pi rows sum to 1; s is positive.
struct MoGField {
  Var pi, mu, s;
};

inline MoGField mog_field(const MoGModel& m, const Var& y) {
  const int B = y->value.shape[0], M = m.bb.cfg.M, C = m.bb.cfg.C;
  const int H = y->value.shape[2], W = y->value.shape[3];
  Var f = backbone_features(m.bb, y);
  Var pi = reshape(softmax_axis(reshape(masked_conv(f, m.pi_head), {B, C, M, H, W}), 1),
                   {B, C * M, H, W});
  Var mu = masked_conv(f, m.mu_head);
  Var s = exp_v(clamp_v(masked_conv(f, m.s_head), kLogScaleLo, kLogScaleHi));
  return {pi, mu, s};
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) * 0.3989422804014326779;  // 1/sqrt(2*pi)
}

// Mass assigned by the mixture to center index l: the mixture CDF over the
// bin [a,b) whose edges are midpoints between adjacent centers, open-ended
// at both extremes so the bins partition the whole real line.
inline void mixture_bin_edges(const double* centers, int L, int l, double* a, double* b) {
  *a = l == 0 ? -std::numeric_limits<double>::infinity() : 0.5 * (centers[l - 1] + centers[l]);
  *b = l == L - 1 ? std::numeric_limits<double>::infinity() : 0.5 * (centers[l] + centers[l + 1]);
}

inline double mixture_bin_prob(const double* pi, const double* mu, const double* s, int C,
                               const double* centers, int L, int l) {
  double a, b;
  mixture_bin_edges(centers, L, l, &a, &b);
  double acc = 0.0;
  for (int c = 0; c < C; ++c) {
    const double hi = std::isinf(b) ? 1.0 : normal_cdf((b - mu[c]) / s[c]);
    const double lo = std::isinf(a) ? 0.0 : normal_cdf((a - mu[c]) / s[c]);
    acc += pi[c] * (hi - lo);
  }
  return acc;
}

// Probability of each chosen code index under the mixture field; output
// {B,M,H,W}. Gradients flow to pi, mu and s; center positions are treated
// as constants here (the ladder learns through its own quantization loss).
inline Var mog_selected_prob(const MoGField& f, const Tensor& centers,
                             const std::vector<CodeBlock>& codes) {
  check_rank("mog_selected_prob", f.pi->value, 4);
  const int B = f.pi->value.shape[0];
  const int M = centers.shape[0], L = centers.shape[1];
  const int C = f.pi->value.shape[1] / M;
  const int H = f.pi->value.shape[2], W = f.pi->value.shape[3];
  if (static_cast<size_t>(B) != codes.size())
    throw dim_error("mog_selected_prob: batch " + std::to_string(B) + " vs " +
                    std::to_string(codes.size()) + " code blocks");
  Tensor out({B, M, H, W});
  for (int b = 0; b < B; ++b)
    for (int r = 0; r < M; ++r) {
      const double* crow = &centers.data[static_cast<size_t>(r) * L];
      for (int p = 0; p < H; ++p)
        for (int q = 0; q < W; ++q) {
          double pi[16], mu[16], s[16];
          for (int c = 0; c < C; ++c) {
            pi[c] = f.pi->value.at4(b, c * M + r, p, q);
            mu[c] = f.mu->value.at4(b, c * M + r, p, q);
            s[c] = f.s->value.at4(b, c * M + r, p, q);
          }
          out.at4(b, r, p, q) =
              mixture_bin_prob(pi, mu, s, C, crow, L, codes[static_cast<size_t>(b)].at(r, p, q));
        }
    }
  Var n = make_op(std::move(out), {f.pi, f.mu, f.s});
  if (n->requires_grad) {
    std::vector<CodeBlock> codes_copy = codes;
    Var pi = f.pi, mu = f.mu, s = f.s;
    n->backward_fn = [self = n.get(), pi, mu, s, centers, codes_copy, B, M, L, C, H, W] {
      const bool gp = pi->requires_grad, gm = mu->requires_grad, gs = s->requires_grad;
      if (gp) pi->ensure_grad();
      if (gm) mu->ensure_grad();
      if (gs) s->ensure_grad();
      for (int b = 0; b < B; ++b)
        for (int r = 0; r < M; ++r) {
          const double* crow = &centers.data[static_cast<size_t>(r) * L];
          for (int p = 0; p < H; ++p)
            for (int q = 0; q < W; ++q) {
              const double g = self->grad.at4(b, r, p, q);
              if (g == 0.0) continue;
              const int l = codes_copy[static_cast<size_t>(b)].at(r, p, q);
              double a, bE;
              mixture_bin_edges(crow, L, l, &a, &bE);
              for (int c = 0; c < C; ++c) {
                const int64_t ch = static_cast<int64_t>(c) * M + r;
                const double pv = pi->value.at4(b, static_cast<int>(ch), p, q);
                const double mv = mu->value.at4(b, static_cast<int>(ch), p, q);
                const double sv = s->value.at4(b, static_cast<int>(ch), p, q);
                const double beta = std::isinf(bE) ? 0.0 : (bE - mv) / sv;
                const double alpha = std::isinf(a) ? 0.0 : (a - mv) / sv;
                const double cb = std::isinf(bE) ? 1.0 : normal_cdf(beta);
                const double ca = std::isinf(a) ? 0.0 : normal_cdf(alpha);
                const double pb = std::isinf(bE) ? 0.0 : normal_pdf(beta);
                const double pa = std::isinf(a) ? 0.0 : normal_pdf(alpha);
                if (gp) pi->grad.at4(b, static_cast<int>(ch), p, q) += g * (cb - ca);
                if (gm)
                  mu->grad.at4(b, static_cast<int>(ch), p, q) += g * pv * (pa - pb) / sv;
                if (gs)
                  s->grad.at4(b, static_cast<int>(ch), p, q) +=
                      g * pv * (alpha * pa - beta * pb) / sv;
              }
            }
        }
    };
  }
  return n;
}

// Total bits to code the chosen indices: sum of -log2 of each floored
// probability. Callers divide by the code count for a per-code figure.
inline Var rate_loss_bits(const Var& selected_probs) {
  return mul_scalar(sum_all(log_v(clamp_v(selected_probs, kProbFloor, 2.0))),
                    -1.4426950408889634074);  // 1/ln 2
}

// ---- post entropy model (coding) ----

struct PostModel {
  EntropyBackbone bb;
  MaskedConv head;
};

inline PostModel make_post_model(ParamStore& ps, const std::string& prefix,
                                 const EntropyConfig& cfg, Rng& rng) {
  PostModel m;
  m.bb = make_backbone(ps, prefix, cfg, rng);
  m.head = make_masked_conv(ps, prefix + ".head", MaskKind::hidden, cfg.M, cfg.nt, cfg.L, cfg.ks,
                            rng);
  return m;
}

// L-way table logits {B, L*M, H, W}; index l of channel r at channel l*M+r.
inline Var post_logits(const PostModel& m, const Var& y) {
  return masked_conv(backbone_features(m.bb, y), m.head);
}

inline Var post_probs(const PostModel& m, const Var& y) {
  const int B = y->value.shape[0], M = m.bb.cfg.M, L = m.bb.cfg.L;
  const int H = y->value.shape[2], W = y->value.shape[3];
  return reshape(softmax_axis(reshape(post_logits(m, y), {B, L, M, H, W}), 1),
                 {B, L * M, H, W});
}

// Gathers, per code, the probability of its own index from a {B,L*M,H,W}
// table tensor; output {B,M,H,W}.
inline Var select_block(const Var& probs, const std::vector<CodeBlock>& codes, int M, int L) {
  check_rank("select_block", probs->value, 4);
  const int B = probs->value.shape[0];
  const int H = probs->value.shape[2], W = probs->value.shape[3];
  if (probs->value.shape[1] != L * M)
    throw dim_error("select_block: channels " + std::to_string(probs->value.shape[1]) +
                    " vs expected " + std::to_string(L * M));
  if (static_cast<size_t>(B) != codes.size())
    throw dim_error("select_block: batch " + std::to_string(B) + " vs " +
                    std::to_string(codes.size()) + " code blocks");
  Tensor out({B, M, H, W});
  for (int b = 0; b < B; ++b)
    for (int r = 0; r < M; ++r)
      for (int p = 0; p < H; ++p)
        for (int q = 0; q < W; ++q)
          out.at4(b, r, p, q) =
              probs->value.at4(b, codes[static_cast<size_t>(b)].at(r, p, q) * M + r, p, q);
  Var n = make_op(std::move(out), {probs});
  if (n->requires_grad) {
    std::vector<CodeBlock> codes_copy = codes;
    n->backward_fn = [self = n.get(), probs, codes_copy, B, M, H, W] {
      probs->ensure_grad();
      for (int b = 0; b < B; ++b)
        for (int r = 0; r < M; ++r)
          for (int p = 0; p < H; ++p)
            for (int q = 0; q < W; ++q)
              probs->grad.at4(b, codes_copy[static_cast<size_t>(b)].at(r, p, q) * M + r, p, q) +=
                  self->grad.at4(b, r, p, q);
    };
  }
  return n;
}

// Cross-entropy of the post tables against the actual codes, in bits per
// code: the quantity the coder pays (before table quantization).
inline Var post_loss_bits_per_code(const PostModel& m, const Var& y,
                                   const std::vector<CodeBlock>& codes) {
  Var sel = select_block(post_probs(m, y), codes, m.bb.cfg.M, m.bb.cfg.L);
  return mul_scalar(mean_all(log_v(clamp_v(sel, kProbFloor, 2.0))), -1.4426950408889634074);
}

// ---- probability tables for coding and probes ----

// Floor at kProbFloor, renormalize, floor again so no entry dips below the
// floor by the renormalization; the sum stays within a few ulp-scale floors
// of 1, well inside the 1e-6 contract.
inline void floor_renorm_row(double* row, int L) {
  double sum = 0.0;
  for (int l = 0; l < L; ++l) sum += (row[l] = std::max(row[l], kProbFloor));
  for (int l = 0; l < L; ++l) row[l] = std::max(row[l] / sum, kProbFloor);
}

// Discrete tables {M,H,W,L} from the mixture model, teacher-forced on a
// (possibly partially decoded) code block. Single-sample, no gradients.
inline Tensor mog_tables(const MoGModel& m, const CodeBlock& y, const Tensor& centers,
                         bool renorm = true) {
  NoGradGuard ng;
  const int M = y.M, H = y.H, W = y.W, L = m.bb.cfg.L, C = m.bb.cfg.C;
  Tensor vals = values_from_block(y, centers);
  Var yv = constant(Tensor({1, M, H, W}));
  yv->value.data = vals.data;
  MoGField f = mog_field(m, yv);
  Tensor out({M, H, W, L});
  for (int r = 0; r < M; ++r) {
    const double* crow = &centers.data[static_cast<size_t>(r) * L];
    for (int p = 0; p < H; ++p)
      for (int q = 0; q < W; ++q) {
        double pi[16], mu[16], s[16];
        for (int c = 0; c < C; ++c) {
          pi[c] = f.pi->value.at4(0, c * M + r, p, q);
          mu[c] = f.mu->value.at4(0, c * M + r, p, q);
          s[c] = f.s->value.at4(0, c * M + r, p, q);
        }
        double* row = &out.data[((static_cast<size_t>(r) * H + p) * W + q) * L];
        for (int l = 0; l < L; ++l) row[l] = mixture_bin_prob(pi, mu, s, C, crow, L, l);
        if (renorm) floor_renorm_row(row, L);
      }
  }
  return out;
}

// Discrete tables {M,H,W,L} from the post model. The coder uses exactly
// these (renormalized) rows on both ends, which is what makes encode and
// decode agree bit for bit.
inline Tensor post_tables(const PostModel& m, const CodeBlock& y, const Tensor& centers,
                          bool renorm = true) {
  NoGradGuard ng;
  const int M = y.M, H = y.H, W = y.W, L = m.bb.cfg.L;
  Tensor vals = values_from_block(y, centers);
  Var yv = constant(Tensor({1, M, H, W}));
  yv->value.data = vals.data;
  Var probs = post_probs(m, yv);
  Tensor out({M, H, W, L});
  for (int r = 0; r < M; ++r)
    for (int p = 0; p < H; ++p)
      for (int q = 0; q < W; ++q) {
        double* row = &out.data[((static_cast<size_t>(r) * H + p) * W + q) * L];
        for (int l = 0; l < L; ++l) row[l] = probs->value.at4(0, l * M + r, p, q);
        if (renorm) floor_renorm_row(row, L);
      }
  return out;
}

}  // namespace nlc
