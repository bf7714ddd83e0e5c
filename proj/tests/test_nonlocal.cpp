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

#include "nlcodec/nonlocal.hpp"
#include "testutil.hpp"

using namespace nlc;

TEST_CASE("candidate set is the strictly earlier anti-diagonals") {
  REQUIRE_FALSE(nonlocal_candidate(0, 0, 0, 0));
  REQUIRE(nonlocal_candidate(0, 1, 0, 0));
  REQUIRE(nonlocal_candidate(1, 0, 0, 0));
  REQUIRE_FALSE(nonlocal_candidate(1, 0, 0, 1));
  REQUIRE_FALSE(nonlocal_candidate(2, 2, 3, 1));
  REQUIRE(nonlocal_candidate(2, 2, 3, 0));
  const Tensor v = nonlocal_valid(3, 3);
  REQUIRE(v[0] == 0.0);
  for (int64_t i = 1; i < 9; ++i) REQUIRE(v[i] == 1.0);
}

TEST_CASE("similarity weights start uniform over each channel prefix") {
  const Tensor rho = rho_init(4);
  for (int r = 0; r < 4; ++r)
    for (int j = 0; j < 4; ++j) {
      const double v = rho[static_cast<int64_t>(r) * 4 + j];
      if (j < r)
        REQUIRE(std::exp(v) == Catch::Approx(1.0 / (r + 1)).epsilon(1e-12));
      else
        REQUIRE(v == 0.0);
    }
}

TEST_CASE("proxy distance matches a pinned hand computation") {
  Tensor y({3, 1, 3});
  // Channel values at (0,0) and (0,2): proxies 0 and 1 differ by -2 and 2.
  y.at3(0, 0, 2) = 1.0;
  y.at3(1, 0, 2) = 2.0;
  y.at3(0, 0, 0) = 3.0;
  y.at3(1, 0, 0) = 0.0;
  Tensor wd({3, 3});
  wd[static_cast<int64_t>(2) * 3 + 0] = 0.5;
  wd[static_cast<int64_t>(2) * 3 + 1] = 0.5;
  REQUIRE(proxy_distance(y, wd, 2, 0, 2, 0, 0) == Catch::Approx(4.0).epsilon(1e-12));
  REQUIRE(proxy_distance(y, wd, 0, 0, 2, 0, 0) == 0.0);
}

TEST_CASE("softmin plane matches the two-candidate closed form") {
  Tensor y({2, 1, 3});
  y.at3(0, 0, 0) = 1.0;
  y.at3(0, 0, 1) = std::sqrt(2.0);
  y.at3(0, 0, 2) = 0.0;
  Tensor wd({2, 2});
  wd[static_cast<int64_t>(1) * 2 + 0] = 1.0;
  const Tensor plane = nonlocal_weight_plane(y, wd, 1, 0, 2);
  const double e = std::exp(-1.0);
  REQUIRE(plane[0] == Catch::Approx(1.0 / (1.0 + e)).epsilon(1e-9));
  REQUIRE(plane[1] == Catch::Approx(e / (1.0 + e)).epsilon(1e-9));
  REQUIRE(plane[2] == 0.0);
  REQUIRE(plane[0] == Catch::Approx(0.731058578630).epsilon(1e-9));
}

TEST_CASE("fused pass matches the per-position brute reference") {
  Rng rng(50);
  const int B = 2, M = 3, H = 4, W = 5;
  Tensor y({B, M, H, W});
  for (double& v : y.data) v = rng.uniform(0.0, 1.0);
  Tensor rho = rho_init(M);
  for (int r = 0; r < M; ++r)
    for (int j = 0; j < r; ++j) rho[static_cast<int64_t>(r) * M + j] += rng.uniform(-0.5, 0.5);
  for (int window : {0, 2}) {
    Var out = nonlocal_rep_conf(constant(y), constant(rho), window);
    REQUIRE(out->value.shape == std::vector<int>({B, 2 * M, H, W}));
    Tensor wd({M, M});
    for (int64_t i = 0; i < wd.numel(); ++i) wd[i] = std::exp(rho[i]);
    for (int b = 0; b < B; ++b) {
      Tensor yb({M, H, W});
      for (int64_t i = 0; i < yb.numel(); ++i) yb[i] = y.data[b * yb.numel() + i];
      for (int r = 0; r < M; ++r)
        for (int p = 0; p < H; ++p)
          for (int q = 0; q < W; ++q) {
            const Tensor plane = nonlocal_weight_plane(yb, wd, r, p, q, window);
            double rep = 0.0, conf = 0.0;
            for (int u = 0; u < H; ++u)
              for (int v = 0; v < W; ++v) {
                const double w = plane[static_cast<int64_t>(u) * W + v];
                if (w == 0.0) continue;
                rep += w * yb.at3(r, u, v);
                conf += w * proxy_distance(yb, wd, r, p, q, u, v);
              }
            REQUIRE(out->value.at4(b, r, p, q) == Catch::Approx(rep).margin(1e-12));
            REQUIRE(out->value.at4(b, M + r, p, q) == Catch::Approx(conf).margin(1e-12));
          }
    }
  }
}

TEST_CASE("origin has empty context and zero outputs") {
  Rng rng(51);
  Tensor y({1, 2, 3, 3});
  for (double& v : y.data) v = rng.uniform(0.0, 1.0);
  Var out = nonlocal_rep_conf(constant(y), constant(rho_init(2)));
  for (int c = 0; c < 4; ++c) REQUIRE(out->value.at4(0, c, 0, 0) == 0.0);
}

TEST_CASE("channel zero averages its candidates uniformly") {
  Tensor y({1, 1, 2, 2});
  y.at4(0, 0, 0, 0) = 0.2;
  y.at4(0, 0, 0, 1) = 0.8;
  y.at4(0, 0, 1, 0) = 0.4;
  y.at4(0, 0, 1, 1) = 0.0;
  Var out = nonlocal_rep_conf(constant(y), constant(rho_init(1)));
  // (1,1) sees (0,0), (0,1), (1,0) with zero distances.
  REQUIRE(out->value.at4(0, 0, 1, 1) == Catch::Approx((0.2 + 0.8 + 0.4) / 3.0).epsilon(1e-12));
  REQUIRE(out->value.at4(0, 1, 1, 1) == 0.0);
  REQUIRE(out->value.at4(0, 0, 0, 1) == Catch::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("gradients through the fused pass match finite differences") {
  Rng rng(52);
  const int M = 3, H = 3, W = 4;
  Tensor y({1, M, H, W});
  for (double& v : y.data) v = rng.uniform(0.0, 1.0);
  Tensor readout({1, 2 * M, H, W});
  for (double& v : readout.data) v = rng.normal();
  const Tensor rho = rho_init(M);
  auto fy = [&](const Var& in) {
    return sum_all(mul(nonlocal_rep_conf(in, constant(rho)), constant(readout)));
  };
  REQUIRE(finite_diff_check(fy, y, 1e-5) < 1e-4);
  Var vy = constant(y);
  Var vrho = param("rho", rho);
  auto build = [&]() {
    return sum_all(mul(nonlocal_rep_conf(vy, vrho), constant(readout)));
  };
  REQUIRE(finite_diff_check_param(build, vrho, 1e-5, 9, rng) < 1e-4);
}

TEST_CASE("windowed gradients also match finite differences") {
  Rng rng(53);
  Tensor y({1, 2, 4, 4});
  for (double& v : y.data) v = rng.uniform(0.0, 1.0);
  Tensor readout({1, 4, 4, 4});
  for (double& v : readout.data) v = rng.normal();
  auto fy = [&](const Var& in) {
    return sum_all(mul(nonlocal_rep_conf(in, constant(rho_init(2)), 1), constant(readout)));
  };
  REQUIRE(finite_diff_check(fy, y, 1e-5) < 1e-4);
}
