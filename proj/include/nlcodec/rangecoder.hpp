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

#include "nlcodec/tensor.hpp"

namespace nlc {

// Integer range coder, 48-bit logical width with byte-wise renormalization
// and deferred-carry byte output. All state is integer, so identical symbol
// and frequency sequences produce identical bytes on every platform.
//
// Width rationale: with total frequency 2^16 and renormalization at 2^40,
// the per-symbol truncation loss of range/total is at most 2^-24 relative,
// which keeps the whole-stream overhead within the 64-bit budget (7 flush
// bytes plus well under one bit of accumulated truncation at any stream
// size a desk-scale codec can produce).
inline constexpr int kFreqBits = 16;
inline constexpr uint32_t kFreqTotal = 1u << kFreqBits;
inline constexpr uint64_t kRangeTop = 1ull << 40;
inline constexpr uint64_t kRangeMask = (1ull << 48) - 1;

// Cumulative integer frequencies: cum[0] = 0 < cum[1] < ... < cum[L] = 2^16.
// Every symbol keeps frequency >= 1 so any index stays codable.
struct FreqTable {
  std::vector<uint32_t> cum;

  int size() const { return static_cast<int>(cum.size()) - 1; }
  uint32_t freq(int s) const { return cum[static_cast<size_t>(s) + 1] - cum[static_cast<size_t>(s)]; }
  // Symbol s with cum[s] <= dv < cum[s+1].
  int find(uint32_t dv) const {
    return static_cast<int>(std::upper_bound(cum.begin() + 1, cum.end(), dv) - cum.begin()) - 1;
  }
  // Ideal code length of symbol s under the quantized table.
  double bits(int s) const {
    return -std::log2(static_cast<double>(freq(s)) / static_cast<double>(kFreqTotal));
  }
};

// Largest-remainder apportionment of 2^16 among L symbols with a floor of 1:
// f_i = floor(p_i * (2^16 - L)) + 1, then the leftover counts go to the
// largest fractional remainders (ties to the lower index). Deterministic
// given identical input bits, and monotone: p_i >= p_j implies f_i >= f_j.
inline FreqTable freq_quantize(const double* row, int L) {
  if (L < 1 || L > 255) throw usage_error("freq_quantize: L out of range");
  double sum = 0.0;
  for (int l = 0; l < L; ++l) {
    if (!(row[l] >= 0.0)) throw usage_error("freq_quantize: negative or NaN probability");
    sum += row[l];
  }
  if (std::abs(sum - 1.0) > 1e-5)
    throw usage_error("freq_quantize: probabilities sum to " + std::to_string(sum));
  const double scale = static_cast<double>(kFreqTotal - static_cast<uint32_t>(L));
  std::vector<uint32_t> f(static_cast<size_t>(L));
  std::vector<std::pair<double, int>> rem(static_cast<size_t>(L));
  uint32_t used = 0;
  for (int l = 0; l < L; ++l) {
    const double exact = row[l] * scale;
    const double fl = std::floor(exact);
    f[static_cast<size_t>(l)] = static_cast<uint32_t>(fl) + 1;
    rem[static_cast<size_t>(l)] = {exact - fl, l};
    used += f[static_cast<size_t>(l)];
  }
  if (used > kFreqTotal) throw usage_error("freq_quantize: apportionment overflow");
  uint32_t bonus = kFreqTotal - used;
  if (bonus > static_cast<uint32_t>(L)) throw usage_error("freq_quantize: apportionment underflow");
  std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (uint32_t k = 0; k < bonus; ++k) ++f[static_cast<size_t>(rem[k].second)];
  FreqTable t;
  t.cum.resize(static_cast<size_t>(L) + 1, 0);
  for (int l = 0; l < L; ++l) t.cum[static_cast<size_t>(l) + 1] = t.cum[static_cast<size_t>(l)] + f[static_cast<size_t>(l)];
  return t;
}

class RangeEncoder {
 public:
  void encode(uint32_t cumlo, uint32_t cumhi) {
    const uint64_t r = range_ >> kFreqBits;
    low_ += cumlo * r;
    range_ = (cumhi - cumlo) * r;
    while (range_ < kRangeTop) {
      shift_low();
      range_ <<= 8;
    }
  }

  void encode_symbol(const FreqTable& t, int s) {
    encode(t.cum[static_cast<size_t>(s)], t.cum[static_cast<size_t>(s) + 1]);
  }

  // Emits the remaining window; exactly 7 bytes beyond the renormalization
  // bytes, the stream's fixed overhead.
  std::vector<uint8_t> finish() {
    for (int i = 0; i < 7; ++i) shift_low();
    return std::move(out_);
  }

 private:
  // Deferred-carry byte output: a run of 0xFF window bytes is counted, not
  // written, until a byte below 0xFF or a carry settles the run.
  void shift_low() {
    if (low_ < 0xFF0000000000ull || low_ > kRangeMask) {
      const uint8_t carry = static_cast<uint8_t>(low_ >> 48);
      out_.push_back(static_cast<uint8_t>(cache_ + carry));
      while (pending_ > 0) {
        out_.push_back(static_cast<uint8_t>(0xFF + carry));
        --pending_;
      }
      cache_ = static_cast<uint8_t>(low_ >> 40);
    } else {
      ++pending_;
    }
    low_ = (low_ << 8) & kRangeMask;
  }

  uint64_t low_ = 0;
  uint64_t range_ = kRangeMask;
  uint8_t cache_ = 0;
  int64_t pending_ = 0;
  std::vector<uint8_t> out_;
};

class RangeDecoder {
 public:
  RangeDecoder(const uint8_t* data, size_t n) : data_(data), n_(n) {
    for (int i = 0; i < 7; ++i) code_ = ((code_ << 8) | read_byte()) & kRangeMask;
  }

  // Cumulative-frequency position of the pending symbol; pass the bounds of
  // the symbol found there to consume().
  uint32_t decode_target() {
    r_ = range_ >> kFreqBits;
    return static_cast<uint32_t>(std::min<uint64_t>(code_ / r_, kFreqTotal - 1));
  }

  void consume(uint32_t cumlo, uint32_t cumhi) {
    code_ -= cumlo * r_;
    range_ = (cumhi - cumlo) * r_;
    while (range_ < kRangeTop) {
      code_ = ((code_ << 8) | read_byte()) & kRangeMask;
      range_ <<= 8;
    }
  }

  int decode_symbol(const FreqTable& t) {
    const int s = t.find(decode_target());
    consume(t.cum[static_cast<size_t>(s)], t.cum[static_cast<size_t>(s) + 1]);
    return s;
  }

  size_t consumed() const { return pos_; }

 private:
  uint8_t read_byte() {
    if (pos_ >= n_) throw corrupt_stream_error("range decoder: truncated stream");
    return data_[pos_++];
  }

  const uint8_t* data_;
  size_t n_;
  size_t pos_ = 0;
  uint64_t code_ = 0;
  uint64_t range_ = kRangeMask;
  uint64_t r_ = 0;
};

}  // namespace nlc
