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

#include "nlcodec/entropy.hpp"
#include "nlcodec/rangecoder.hpp"
#include "nlcodec/serialize.hpp"

namespace nlc {

inline constexpr char kStreamMagic[4] = {'N', 'L', 'C', 'B'};
inline constexpr uint8_t kStreamVersion = 1;
inline constexpr size_t kHeaderBytes = 20;

// Fixed little-endian stream header. The model hash binds the payload to
// the exact parameter file it was produced with; decoding against anything
// else is refused before any symbol is read.
struct StreamHeader {
  int image_h = 0, image_w = 0;
  int M = 0, L = 0;
  uint64_t model_hash = 0;
};

inline std::vector<uint8_t> pack_header(const StreamHeader& h) {
  if (h.image_h < 1 || h.image_h > 65535 || h.image_w < 1 || h.image_w > 65535 || h.M < 1 ||
      h.M > 65535 || h.L < 2 || h.L > 255)
    throw usage_error("stream header: field out of range");
  std::vector<uint8_t> b;
  b.reserve(kHeaderBytes);
  for (char c : kStreamMagic) put_u8(b, static_cast<uint8_t>(c));
  put_u8(b, kStreamVersion);
  put_u16(b, static_cast<uint16_t>(h.image_h));
  put_u16(b, static_cast<uint16_t>(h.image_w));
  put_u16(b, static_cast<uint16_t>(h.M));
  put_u8(b, static_cast<uint8_t>(h.L));
  put_u64(b, h.model_hash);
  return b;
}

inline StreamHeader parse_header(ByteReader& br) {
  for (char c : kStreamMagic)
    if (br.u8() != static_cast<uint8_t>(c)) throw format_error("not a code stream (bad magic)");
  const uint8_t ver = br.u8();
  if (ver != kStreamVersion)
    throw format_error("unsupported stream version " + std::to_string(ver));
  StreamHeader h;
  h.image_h = br.u16();
  h.image_w = br.u16();
  h.M = br.u16();
  h.L = br.u8();
  h.model_hash = br.u64();
  if (h.image_h < 1 || h.image_w < 1 || h.M < 1 || h.L < 2)
    throw corrupt_stream_error("stream header: field out of range");
  return h;
}

// How often probability tables are recomputed while coding. All drivers
// produce identical bytes: tables for a position depend only on strictly
// earlier groups, which every driver has fully committed by then. The
// one-pass driver is the fast path; the others exist to prove that claim
// and to mirror the decoder's schedule.
enum class CodingDriver { one_pass, per_group, per_position };

// Canonical symbol order: groups ascending, (r,p,q) lexicographic within.
inline std::vector<uint8_t> encode_codes(const PostModel& m, const CodeBlock& y,
                                         const Tensor& centers,
                                         CodingDriver driver = CodingDriver::one_pass,
                                         double* ideal_bits = nullptr) {
  const int L = m.bb.cfg.L;
  GroupSchedule sched(y.M, y.H, y.W);
  RangeEncoder enc;
  double bits = 0.0;
  CodeBlock partial(y.M, y.H, y.W);
  Tensor tables;
  if (driver == CodingDriver::one_pass) tables = post_tables(m, y, centers);
  for (int k = 0; k < sched.K; ++k) {
    if (driver == CodingDriver::per_group) tables = post_tables(m, partial, centers);
    for (const Pos& pos : sched.gp[static_cast<size_t>(k)]) {
      if (driver == CodingDriver::per_position) tables = post_tables(m, partial, centers);
      const double* row =
          &tables.data[((static_cast<size_t>(pos.r) * y.H + pos.p) * y.W + pos.q) * L];
      FreqTable t = freq_quantize(row, L);
      const int s = y.at(pos.r, pos.p, pos.q);
      bits += t.bits(s);
      enc.encode_symbol(t, s);
      partial.at(pos.r, pos.p, pos.q) = static_cast<uint8_t>(s);
    }
  }
  if (ideal_bits) *ideal_bits = bits;
  return enc.finish();
}

inline CodeBlock decode_codes(const PostModel& m, const uint8_t* payload, size_t n, int M, int H,
                              int W, const Tensor& centers,
                              CodingDriver driver = CodingDriver::per_group) {
  if (driver == CodingDriver::one_pass)
    throw usage_error("decode_codes: tables must be recomputed per group or per position");
  const int L = m.bb.cfg.L;
  GroupSchedule sched(M, H, W);
  RangeDecoder dec(payload, n);
  CodeBlock partial(M, H, W);
  Tensor tables;
  for (int k = 0; k < sched.K; ++k) {
    if (driver == CodingDriver::per_group) tables = post_tables(m, partial, centers);
    for (const Pos& pos : sched.gp[static_cast<size_t>(k)]) {
      if (driver == CodingDriver::per_position) tables = post_tables(m, partial, centers);
      const double* row =
          &tables.data[((static_cast<size_t>(pos.r) * H + pos.p) * W + pos.q) * L];
      FreqTable t = freq_quantize(row, L);
      partial.at(pos.r, pos.p, pos.q) = static_cast<uint8_t>(dec.decode_symbol(t));
    }
  }
  return partial;
}

}  // namespace nlc
