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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace nlc {

// Error taxonomy. The CLI maps these onto process exit codes, so every
// failure path below must throw one of them rather than a bare exception.
struct dim_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct usage_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct model_mismatch_error : format_error {
  using format_error::format_error;
};
struct corrupt_stream_error : format_error {
  using format_error::format_error;
};
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

// Dense row-major tensor of doubles. All model math runs in doubles so that
// encoder and decoder reproduce probability tables bit-for-bit.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
    int64_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw dim_error("tensor: non-positive dim in " + shape_str(shape));
      n *= d;
    }
    data.assign(static_cast<size_t>(n), fill);
  }
  static Tensor scalar(double v) {
    Tensor t({1});
    t.data[0] = v;
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<size_t>(i)); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // Flat index helpers for the hot 3-d/4-d loops.
  int64_t idx3(int a, int b, int c) const {
    return (static_cast<int64_t>(a) * shape[1] + b) * shape[2] + c;
  }
  int64_t idx4(int a, int b, int c, int d) const {
    return ((static_cast<int64_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d;
  }
  double& at3(int a, int b, int c) { return data[static_cast<size_t>(idx3(a, b, c))]; }
  double at3(int a, int b, int c) const { return data[static_cast<size_t>(idx3(a, b, c))]; }
  double& at4(int a, int b, int c, int d) { return data[static_cast<size_t>(idx4(a, b, c, d))]; }
  double at4(int a, int b, int c, int d) const { return data[static_cast<size_t>(idx4(a, b, c, d))]; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw dim_error(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                    shape_str(b.shape));
}

inline void check_rank(const char* op, const Tensor& t, int rank) {
  if (t.rank() != rank)
    throw dim_error(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                    shape_str(t.shape));
}

// Deterministic RNG. The distributions are implemented here instead of using
// <random> adaptors because their output sequence must be stable for a given
// seed: model init, data shuffles and probes all replay from it.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t raw() { return eng_(); }

  // Uniform in [0, 1) from the top 53 bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; caches the second deviate.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, n), rejection-sampled so it is unbiased.
  uint64_t randint(uint64_t n) {
    if (n == 0) throw usage_error("randint: n must be positive");
    uint64_t lim = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = eng_();
    } while (x >= lim);
    return x % n;
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

inline void fill_uniform(Tensor& t, Rng& rng, double lo, double hi) {
  for (double& v : t.data) v = rng.uniform(lo, hi);
}

// Worker cap shared by the compute kernels; 1 keeps everything serial.
inline int& worker_threads() {
  static int n = 1;
  return n;
}

// Static partition over [0, n). Each worker owns a disjoint contiguous chunk,
// so results never depend on scheduling and match the serial order exactly.
template <class Fn>
void parallel_for(int64_t n, const Fn& fn) {
  int t = worker_threads();
  if (t <= 1 || n < 256) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  int workers = static_cast<int>(std::min<int64_t>(t, n));
  int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    int64_t lo = w * chunk, hi = std::min<int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

// Same static partition without the small-count shortcut, for loops whose
// per-index work is heavy enough to pay for threads at any count.
template <class Fn>
void parallel_for_coarse(int64_t n, const Fn& fn) {
  int t = worker_threads();
  if (t <= 1 || n < 2) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  int workers = static_cast<int>(std::min<int64_t>(t, n));
  int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    int64_t lo = w * chunk, hi = std::min<int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace nlc
