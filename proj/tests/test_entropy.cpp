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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "nlcodec/entropy.hpp"
#include "testutil.hpp"

using namespace nlc;

namespace {

EntropyConfig tiny_config(int M, bool nonlocal = true) {
  EntropyConfig cfg;
  cfg.M = M;
  cfg.L = 8;
  cfg.C = 2;
  cfg.nt = 2;
  cfg.nres = 1;
  cfg.ks = 1;
  cfg.nonlocal = nonlocal;
  return cfg;
}

Tensor random_values(int B, int M, int H, int W, Rng& rng) {
  Tensor t({B, M, H, W});
  for (double& v : t.data) v = rng.uniform(0.05, 0.95);
  return t;
}

}  // namespace

TEST_CASE("backbone rejects invalid configurations") {
  ParamStore ps;
  Rng rng(60);
  EntropyConfig bad = tiny_config(2);
  bad.M = 0;
  REQUIRE_THROWS_AS(make_backbone(ps, "e", bad, rng), usage_error);
  bad = tiny_config(2);
  bad.L = 1;
  REQUIRE_THROWS_AS(make_backbone(ps, "e", bad, rng), usage_error);
  bad = tiny_config(2);
  bad.L = 256;
  REQUIRE_THROWS_AS(make_backbone(ps, "e", bad, rng), usage_error);
  bad = tiny_config(2);
  bad.C = 0;
  REQUIRE_THROWS_AS(make_backbone(ps, "e", bad, rng), usage_error);
  bad = tiny_config(2);
  bad.nt = 0;
  REQUIRE_THROWS_AS(make_backbone(ps, "e", bad, rng), usage_error);
}

TEST_CASE("backbone features have the configured block count") {
  ParamStore ps;
  Rng rng(61);
  const EntropyConfig cfg = tiny_config(3);
  EntropyBackbone bb = make_backbone(ps, "e", cfg, rng);
  const Tensor y = random_values(2, 3, 4, 5, rng);
  Var h = backbone_features(bb, constant(y));
  REQUIRE(h->value.shape == std::vector<int>({2, cfg.nt * 3, 4, 5}));
}

TEST_CASE("local-only ablation keeps the exact parameter layout") {
  Rng rng1(62), rng2(62);
  ParamStore ps1, ps2;
  make_mog_model(ps1, "m", tiny_config(3, true), rng1);
  make_mog_model(ps2, "m", tiny_config(3, false), rng2);
  REQUIRE(ps1.all().size() == ps2.all().size());
  for (size_t i = 0; i < ps1.all().size(); ++i) {
    REQUIRE(ps1.all()[i]->name == ps2.all()[i]->name);
    REQUIRE(ps1.all()[i]->value.shape == ps2.all()[i]->value.shape);
    REQUIRE(ps1.all()[i]->value.data == ps2.all()[i]->value.data);
  }
}

TEST_CASE("mixture field rows are normalized with scales in bounds") {
  ParamStore ps;
  Rng rng(63);
  const EntropyConfig cfg = tiny_config(2);
  MoGModel m = make_mog_model(ps, "m", cfg, rng);
  const Tensor y = random_values(1, 2, 4, 4, rng);
  const MoGField f = mog_field(m, constant(y));
  REQUIRE(f.pi->value.shape == std::vector<int>({1, cfg.C * 2, 4, 4}));
  for (int r = 0; r < 2; ++r)
    for (int p = 0; p < 4; ++p)
      for (int q = 0; q < 4; ++q) {
        double s = 0.0;
        for (int c = 0; c < cfg.C; ++c) {
          s += f.pi->value.at4(0, c * 2 + r, p, q);
          const double sc = f.s->value.at4(0, c * 2 + r, p, q);
          REQUIRE(sc >= 1e-3);
          REQUIRE(sc <= 1e3);
        }
        REQUIRE(s == Catch::Approx(1.0).margin(1e-12));
      }
}

TEST_CASE("bin edges are center midpoints with open ends") {
  double centers[4] = {0.2, 0.4, 0.5, 0.9};
  double a, b;
  mixture_bin_edges(centers, 4, 0, &a, &b);
  REQUIRE(std::isinf(a));
  REQUIRE(a < 0);
  REQUIRE(b == Catch::Approx(0.3));
  mixture_bin_edges(centers, 4, 2, &a, &b);
  REQUIRE(a == Catch::Approx(0.45));
  REQUIRE(b == Catch::Approx(0.7));
  mixture_bin_edges(centers, 4, 3, &a, &b);
  REQUIRE(b > 0);
  REQUIRE(std::isinf(b));
}

TEST_CASE("single-component bin mass matches quadrature at a pinned point") {
  double centers[8];
  for (int l = 0; l < 8; ++l) centers[l] = (l + 1) / 9.0;
  const double pi[3] = {1.0, 0.0, 0.0};
  const double mu[3] = {0.5, 0.0, 0.0};
  const double s[3] = {0.1, 1.0, 1.0};
  for (int l = 0; l < 8; ++l) {
    double a, b;
    mixture_bin_edges(centers, 8, l, &a, &b);
    const double want = testutil::mixture_mass_quadrature(pi, mu, s, 3, a, b);
    const double got = mixture_bin_prob(pi, mu, s, 3, centers, 8, l);
    REQUIRE(got == Catch::Approx(want).margin(1e-6));
  }
}

TEST_CASE("mixture bin masses match quadrature for random draws") {
  Rng rng(64);
  double centers[8];
  for (int l = 0; l < 8; ++l) centers[l] = (l + 1) / 9.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int C = 3;
    double pi[C], mu[C], s[C];
    double z = 0.0;
    for (int c = 0; c < C; ++c) {
      pi[c] = rng.uniform(0.05, 1.0);
      z += pi[c];
      mu[c] = rng.uniform(-0.3, 1.3);
      s[c] = rng.uniform(0.01, 2.0);
    }
    for (int c = 0; c < C; ++c) pi[c] /= z;
    double total = 0.0;
    for (int l = 0; l < 8; ++l) {
      double a, b;
      mixture_bin_edges(centers, 8, l, &a, &b);
      const double want = testutil::mixture_mass_quadrature(pi, mu, s, C, a, b);
      const double got = mixture_bin_prob(pi, mu, s, C, centers, 8, l);
      REQUIRE(got == Catch::Approx(want).margin(2e-6));
      total += got;
    }
    REQUIRE(total == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("selected probabilities gather the coded bins") {
  ParamStore ps;
  Rng rng(65);
  const EntropyConfig cfg = tiny_config(2);
  MoGModel m = make_mog_model(ps, "m", cfg, rng);
  Tensor centers({2, 8});
  for (int r = 0; r < 2; ++r)
    for (int l = 0; l < 8; ++l) centers.data[r * 8 + l] = (l + 1) / 9.0;
  std::vector<CodeBlock> codes;
  CodeBlock cb(2, 3, 3);
  for (auto& v : cb.idx) v = static_cast<uint8_t>(rng.randint(8));
  codes.push_back(cb);
  const Tensor vals = values_from_block(cb, centers);
  Tensor y({1, 2, 3, 3});
  y.data = vals.data;
  const MoGField f = mog_field(m, constant(y));
  Var sel = mog_selected_prob(f, centers, codes);
  REQUIRE(sel->value.shape == std::vector<int>({1, 2, 3, 3}));
  for (int r = 0; r < 2; ++r)
    for (int p = 0; p < 3; ++p)
      for (int q = 0; q < 3; ++q) {
        double pi[2], mu[2], s[2];
        for (int c = 0; c < 2; ++c) {
          pi[c] = f.pi->value.at4(0, c * 2 + r, p, q);
          mu[c] = f.mu->value.at4(0, c * 2 + r, p, q);
          s[c] = f.s->value.at4(0, c * 2 + r, p, q);
        }
        const double want =
            mixture_bin_prob(pi, mu, s, 2, &centers.data[r * 8], 8, cb.at(r, p, q));
        REQUIRE(sel->value.at4(0, r, p, q) == Catch::Approx(want).epsilon(1e-12));
      }
}

TEST_CASE("rate loss is the negative log2 sum at a pinned point") {
  Tensor p({1, 1, 1, 2});
  p.data = {0.5, 0.25};
  Var bits = rate_loss_bits(constant(p));
  REQUIRE(bits->value.data[0] == Catch::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("mixture rate loss gradient w.r.t. values passes finite differences") {
  ParamStore ps;
  Rng rng(66);
  const EntropyConfig cfg = tiny_config(2);
  MoGModel m = make_mog_model(ps, "m", cfg, rng);
  Tensor centers({2, 8});
  for (int r = 0; r < 2; ++r)
    for (int l = 0; l < 8; ++l) centers.data[r * 8 + l] = (l + 1) / 9.0;
  std::vector<CodeBlock> codes;
  CodeBlock cb(2, 3, 3);
  for (auto& v : cb.idx) v = static_cast<uint8_t>(rng.randint(8));
  codes.push_back(cb);
  const Tensor y = random_values(1, 2, 3, 3, rng);
  auto f = [&](const Var& in) {
    const MoGField field = mog_field(m, in);
    return rate_loss_bits(mog_selected_prob(field, centers, codes));
  };
  REQUIRE(finite_diff_check(f, y, 1e-5) < 1e-4);
}

TEST_CASE("post probabilities are normalized and tables respect the floor") {
  ParamStore ps;
  Rng rng(67);
  const EntropyConfig cfg = tiny_config(2);
  PostModel m = make_post_model(ps, "p", cfg, rng);
  Tensor centers({2, 8});
  for (int r = 0; r < 2; ++r)
    for (int l = 0; l < 8; ++l) centers.data[r * 8 + l] = (l + 1) / 9.0;
  CodeBlock cb(2, 4, 4);
  for (auto& v : cb.idx) v = static_cast<uint8_t>(rng.randint(8));
  const Tensor raw = post_tables(m, cb, centers, false);
  REQUIRE(raw.shape == std::vector<int>({2, 4, 4, 8}));
  for (int64_t row = 0; row < 2 * 4 * 4; ++row) {
    double s = 0.0;
    for (int l = 0; l < 8; ++l) s += raw[row * 8 + l];
    REQUIRE(s == Catch::Approx(1.0).margin(1e-9));
  }
  const Tensor floored = post_tables(m, cb, centers, true);
  for (int64_t row = 0; row < 2 * 4 * 4; ++row) {
    double s = 0.0;
    for (int l = 0; l < 8; ++l) {
      REQUIRE(floored[row * 8 + l] >= kProbFloor);
      s += floored[row * 8 + l];
    }
    REQUIRE(s == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("mixture tables sum to one before renormalization") {
  ParamStore ps;
  Rng rng(68);
  MoGModel m = make_mog_model(ps, "m", tiny_config(2), rng);
  Tensor centers({2, 8});
  for (int r = 0; r < 2; ++r)
    for (int l = 0; l < 8; ++l) centers.data[r * 8 + l] = (l + 1) / 9.0;
  CodeBlock cb(2, 4, 4);
  for (auto& v : cb.idx) v = static_cast<uint8_t>(rng.randint(8));
  const Tensor raw = mog_tables(m, cb, centers, false);
  for (int64_t row = 0; row < 2 * 4 * 4; ++row) {
    double s = 0.0;
    for (int l = 0; l < 8; ++l) s += raw[row * 8 + l];
    REQUIRE(s == Catch::Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("post loss equals the mean selected log2 probability") {
  ParamStore ps;
  Rng rng(69);
  const EntropyConfig cfg = tiny_config(2);
  PostModel m = make_post_model(ps, "p", cfg, rng);
  Tensor centers({2, 8});
  for (int r = 0; r < 2; ++r)
    for (int l = 0; l < 8; ++l) centers.data[r * 8 + l] = (l + 1) / 9.0;
  std::vector<CodeBlock> codes;
  CodeBlock cb(2, 3, 3);
  for (auto& v : cb.idx) v = static_cast<uint8_t>(rng.randint(8));
  codes.push_back(cb);
  Tensor y = values_from_block(cb, centers);
  Tensor y4({1, 2, 3, 3});
  y4.data = y.data;
  Var loss = post_loss_bits_per_code(m, constant(y4), codes);
  Var probs = post_probs(m, constant(y4));
  double acc = 0.0;
  for (int r = 0; r < 2; ++r)
    for (int p = 0; p < 3; ++p)
      for (int q = 0; q < 3; ++q)
        acc -= std::log2(probs->value.at4(0, cb.at(r, p, q) * 2 + r, p, q));
  REQUIRE(loss->value.data[0] == Catch::Approx(acc / 18.0).epsilon(1e-9));
}

TEST_CASE("full entropy stack preserves causality at a spot-checked group") {
  ParamStore ps;
  Rng rng(70);
  const EntropyConfig cfg = tiny_config(2);
  PostModel m = make_post_model(ps, "p", cfg, rng);
  Tensor centers({2, 8});
  for (int r = 0; r < 2; ++r)
    for (int l = 0; l < 8; ++l) centers.data[r * 8 + l] = (l + 1) / 9.0;
  CodeBlock cb(2, 5, 5);
  for (auto& v : cb.idx) v = static_cast<uint8_t>(rng.randint(8));
  auto fn = [&](const CodeBlock& b) { return post_tables(m, b, centers, true); };
  Rng probe_rng(71);
  REQUIRE(causality_probe(fn, cb, 4, 8, probe_rng) <= 1e-12);
}
