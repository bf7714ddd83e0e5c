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

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <unordered_map>

#include "nlcodec/tensor.hpp"

namespace nlc {

// All on-disk integers are little-endian regardless of host order.
inline void put_u8(std::vector<uint8_t>& b, uint8_t v) { b.push_back(v); }
inline void put_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(static_cast<uint8_t>(v));
  b.push_back(static_cast<uint8_t>(v >> 8));
}
inline void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
inline void put_u64(std::vector<uint8_t>& b, uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
inline void put_f64(std::vector<uint8_t>& b, double v) {
  put_u64(b, std::bit_cast<uint64_t>(v));
}

// Bounds-checked cursor; reads past the end raise format_error.
struct ByteReader {
  const uint8_t* p;
  size_t n;
  size_t pos = 0;
  ByteReader(const uint8_t* data, size_t len) : p(data), n(len) {}
  void need(size_t k) const {
    if (pos + k > n) throw format_error("truncated data: need " + std::to_string(k) +
                                        " bytes at offset " + std::to_string(pos));
  }
  uint8_t u8() {
    need(1);
    return p[pos++];
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(p[pos] | (p[pos + 1] << 8));
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(size_t k) {
    need(k);
    std::string s(reinterpret_cast<const char*>(p + pos), k);
    pos += k;
    return s;
  }
};

inline uint64_t fnv1a64(const uint8_t* data, size_t n, uint64_t h = 14695981039346656037ull) {
  for (size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Parameter container: magic "NLCP", version u8, tensor count u32, then per
// tensor: name length u16 + bytes, rank u8, dims u32 each, f64 payload.
// The model hash is FNV-1a 64 over everything after magic+version.
inline constexpr char kModelMagic[4] = {'N', 'L', 'C', 'P'};
inline constexpr uint8_t kModelVersion = 1;

inline std::vector<uint8_t> serialize_model(const NamedTensors& tensors) {
  std::vector<uint8_t> b;
  b.insert(b.end(), kModelMagic, kModelMagic + 4);
  put_u8(b, kModelVersion);
  put_u32(b, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xFFFF) throw usage_error("tensor name too long: " + name);
    put_u16(b, static_cast<uint16_t>(name.size()));
    b.insert(b.end(), name.begin(), name.end());
    put_u8(b, static_cast<uint8_t>(t.rank()));
    for (int d : t.shape) put_u32(b, static_cast<uint32_t>(d));
    for (double v : t.data) put_f64(b, v);
  }
  return b;
}

inline uint64_t model_hash(const std::vector<uint8_t>& serialized) {
  if (serialized.size() < 5) throw format_error("model blob shorter than its header");
  return fnv1a64(serialized.data() + 5, serialized.size() - 5);
}

inline NamedTensors deserialize_model(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes.data(), bytes.size());
  if (r.str(4) != std::string(kModelMagic, 4)) throw format_error("bad model magic");
  uint8_t ver = r.u8();
  if (ver != kModelVersion)
    throw format_error("unsupported model version " + std::to_string(ver));
  uint32_t count = r.u32();
  NamedTensors out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u16());
    int rank = r.u8();
    std::vector<int> shape(static_cast<size_t>(rank));
    int64_t n = 1;
    for (int d = 0; d < rank; ++d) {
      uint32_t v = r.u32();
      if (v == 0 || v > (1u << 28)) throw format_error("bad dim in tensor " + name);
      shape[static_cast<size_t>(d)] = static_cast<int>(v);
      n *= v;
    }
    Tensor t(shape);
    for (int64_t k = 0; k < n; ++k) t[k] = r.f64();
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

// Writes via a temp file in the same directory, renamed on success, so a
// crash never leaves a half-written artifact under the final name.
inline void write_file_atomic(const std::string& path, const std::vector<uint8_t>& bytes) {
  namespace fs = std::filesystem;
  fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open for writing: " + tmp.string());
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw io_error("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw io_error("rename failed: " + target.string() + ": " + ec.message());
  }
}

inline std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace nlc
