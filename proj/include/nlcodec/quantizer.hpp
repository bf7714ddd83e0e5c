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

// Quantized code block: per-channel level indices for an M x H x W latent.
struct CodeBlock {
  int M = 0, H = 0, W = 0;
  std::vector<uint8_t> idx;

  CodeBlock() = default;
  CodeBlock(int m, int h, int w) : M(m), H(h), W(w), idx(static_cast<size_t>(m) * h * w, 0) {}
  uint8_t& at(int r, int p, int q) {
    return idx[(static_cast<size_t>(r) * H + p) * W + q];
  }
  uint8_t at(int r, int p, int q) const {
    return idx[(static_cast<size_t>(r) * H + p) * W + q];
  }
  int64_t count() const { return static_cast<int64_t>(idx.size()); }
};

// Per-channel center ladders. Raw parameters sigma {M,L} map to centers via
// cumulative sums of exp(sigma), so centers are strictly increasing for any
// parameter value. At init sigma = -ln(L+1), giving centers i/(L+1), i=1..L,
// strictly inside (0,1) to match the sigmoid-bounded latent.
inline Tensor sigma_init(int M, int L) {
  return Tensor({M, L}, -std::log(static_cast<double>(L + 1)));
}

inline Tensor centers_from_sigma(const Tensor& sigma) {
  check_rank("centers_from_sigma", sigma, 2);
  Tensor centers(sigma.shape);
  const int M = sigma.shape[0], L = sigma.shape[1];
  for (int r = 0; r < M; ++r) {
    double acc = 0.0;
    for (int l = 0; l < L; ++l) {
      acc += std::exp(sigma[static_cast<int64_t>(r) * L + l]);
      centers[static_cast<int64_t>(r) * L + l] = acc;
    }
  }
  return centers;
}

// Nearest center by absolute distance; exact ties resolve to the lower index.
inline int nearest_center(const double* centers, int L, double z) {
  int best = 0;
  double bd = std::abs(z - centers[0]);
  for (int l = 1; l < L; ++l) {
    double d = std::abs(z - centers[l]);
    if (d < bd) {
      bd = d;
      best = l;
    }
  }
  return best;
}

inline CodeBlock quantize_block(const Tensor& z, const Tensor& centers) {
  check_rank("quantize_block", z, 3);
  const int M = z.shape[0], H = z.shape[1], W = z.shape[2];
  if (centers.shape[0] != M)
    throw dim_error("quantize_block: centers rows " + std::to_string(centers.shape[0]) +
                    " vs channels " + std::to_string(M));
  const int L = centers.shape[1];
  CodeBlock out(M, H, W);
  for (int r = 0; r < M; ++r) {
    const double* row = &centers.data[static_cast<size_t>(r) * L];
    for (int p = 0; p < H; ++p)
      for (int q = 0; q < W; ++q)
        out.at(r, p, q) = static_cast<uint8_t>(nearest_center(row, L, z.at3(r, p, q)));
  }
  return out;
}

inline Tensor values_from_block(const CodeBlock& b, const Tensor& centers) {
  Tensor v({b.M, b.H, b.W});
  const int L = centers.shape[1];
  for (int r = 0; r < b.M; ++r)
    for (int p = 0; p < b.H; ++p)
      for (int q = 0; q < b.W; ++q)
        v.at3(r, p, q) = centers[static_cast<int64_t>(r) * L + b.at(r, p, q)];
  return v;
}

// Forward emits the chosen center values; backward passes the upstream
// gradient through unchanged (identity surrogate for the hard rounding).
// Center positions are a constant snapshot here: the ladder itself learns
// only through quant_loss below.
inline Var straight_through(const Var& z, const Tensor& centers, std::vector<CodeBlock>* codes) {
  check_rank("straight_through", z->value, 4);
  const int B = z->value.shape[0], M = z->value.shape[1];
  const int H = z->value.shape[2], W = z->value.shape[3];
  if (centers.shape[0] != M)
    throw dim_error("straight_through: centers rows " + std::to_string(centers.shape[0]) +
                    " vs channels " + std::to_string(M));
  const int L = centers.shape[1];
  Tensor out(z->value.shape);
  if (codes) codes->clear();
  for (int bb = 0; bb < B; ++bb) {
    CodeBlock cb(M, H, W);
    for (int r = 0; r < M; ++r) {
      const double* row = &centers.data[static_cast<size_t>(r) * L];
      for (int p = 0; p < H; ++p)
        for (int q = 0; q < W; ++q) {
          int l = nearest_center(row, L, z->value.at4(bb, r, p, q));
          cb.at(r, p, q) = static_cast<uint8_t>(l);
          out.at4(bb, r, p, q) = row[l];
        }
    }
    if (codes) codes->push_back(std::move(cb));
  }
  Var n = make_op(std::move(out), {z});
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), z] {
      z->ensure_grad();
      for (int64_t i = 0; i < self->grad.numel(); ++i) z->grad[i] += self->grad[i];
    };
  return n;
}

// Mean squared gap between the latent and its chosen centers. The latent is
// a frozen snapshot: this loss trains the ladder parameters only, with the
// chosen indices held fixed. d center_l / d sigma_j = exp(sigma_j) for j <= l.
inline Var quant_loss(const Var& sigma, const Tensor& z_snapshot,
                      const std::vector<CodeBlock>& codes) {
  check_rank("quant_loss", z_snapshot, 4);
  const int B = z_snapshot.shape[0], M = z_snapshot.shape[1];
  const int H = z_snapshot.shape[2], W = z_snapshot.shape[3];
  if (static_cast<size_t>(B) != codes.size())
    throw dim_error("quant_loss: batch " + std::to_string(B) + " vs " +
                    std::to_string(codes.size()) + " code blocks");
  const int L = sigma->value.shape[1];
  Tensor centers = centers_from_sigma(sigma->value);
  const int64_t n = z_snapshot.numel();
  double acc = 0.0;
  for (int bb = 0; bb < B; ++bb)
    for (int r = 0; r < M; ++r)
      for (int p = 0; p < H; ++p)
        for (int q = 0; q < W; ++q) {
          double d = centers[static_cast<int64_t>(r) * L + codes[static_cast<size_t>(bb)].at(r, p, q)] -
                     z_snapshot.at4(bb, r, p, q);
          acc += d * d;
        }
  Var out = make_op(Tensor::scalar(acc / static_cast<double>(n)), {sigma});
  if (out->requires_grad) {
    // Codes are captured by value: the caller's vector may not outlive backward.
    std::vector<CodeBlock> codes_copy = codes;
    out->backward_fn = [self = out.get(), sigma, z_snapshot, codes_copy, centers, B, M, H, W, L,
                        n] {
      sigma->ensure_grad();
      const double g = self->grad[0];
      for (int bb = 0; bb < B; ++bb)
        for (int r = 0; r < M; ++r) {
          const double* crow = &centers.data[static_cast<size_t>(r) * L];
          const double* srow = &sigma->value.data[static_cast<size_t>(r) * L];
          double* grow = &sigma->grad.data[static_cast<size_t>(r) * L];
          for (int p = 0; p < H; ++p)
            for (int q = 0; q < W; ++q) {
              const int l = codes_copy[static_cast<size_t>(bb)].at(r, p, q);
              const double coef =
                  g * 2.0 * (crow[l] - z_snapshot.at4(bb, r, p, q)) / static_cast<double>(n);
              for (int j = 0; j <= l; ++j) grow[j] += coef * std::exp(srow[j]);
            }
        }
    };
  }
  return out;
}

}  // namespace nlc
