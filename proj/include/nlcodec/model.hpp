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

#include "nlcodec/coder.hpp"
#include "nlcodec/entropy.hpp"
#include "nlcodec/metrics.hpp"
#include "nlcodec/transforms.hpp"

namespace nlc {

struct CodecConfig {
  int width = 192;  // transform feature channels
  int M = 192;      // latent code channels
  int L = 8;        // centers per channel
  int C = 3;        // mixture components
  int nt = 3;       // entropy trunk blocks per code channel
  int nres = 3;     // residual trunk depth
  int ks = 2;       // masked conv half-width
  int window = 0;   // non-local search half-width, 0 = whole plane
  int a0 = 2, a1 = 2, a2 = 2;  // U-block factors
  bool nonlocal = true;

  void validate() const {
    if (width < 1) throw usage_error("config: width must be positive");
    if (a0 < 1 || a1 < 1 || a2 < 1) throw usage_error("config: block factors must be positive");
    if (M < 1 || L < 2 || L > 255 || C < 1 || C > 16 || nt < 1 || nres < 0 || ks < 0 ||
        window < 0)
      throw usage_error("config: M >= 1, 2 <= L <= 255, 1 <= C <= 16, nt >= 1 required");
  }
};

inline EntropyConfig entropy_config(const CodecConfig& c) {
  EntropyConfig e;
  e.M = c.M;
  e.L = c.L;
  e.C = c.C;
  e.nt = c.nt;
  e.nres = c.nres;
  e.ks = c.ks;
  e.window = c.window;
  e.nonlocal = c.nonlocal;
  return e;
}

inline TransformConfig transform_config(const CodecConfig& c) {
  TransformConfig t;
  t.width = c.width;
  t.M = c.M;
  t.a0 = c.a0;
  t.a1 = c.a1;
  t.a2 = c.a2;
  return t;
}

// The full codec: analysis and synthesis transforms, the center ladder, the
// mixture model used during optimization, and the categorical model that
// alone drives the range coder.
struct CodecModel {
  CodecConfig cfg;
  ParamStore ps;
  AnalysisTransform ga;
  SynthesisTransform gs;
  Var sigma;  // {M,L} ladder log-gaps
  MoGModel mog;
  PostModel post;
};

inline CodecModel make_codec_model(const CodecConfig& cfg, uint64_t seed) {
  cfg.validate();
  CodecModel m;
  m.cfg = cfg;
  Rng rng(seed);
  const TransformConfig tc = transform_config(cfg);
  m.ga = make_analysis(m.ps, tc, rng);
  m.gs = make_synthesis(m.ps, tc, rng);
  m.sigma = m.ps.add("q.sigma", sigma_init(cfg.M, cfg.L));
  const EntropyConfig ec = entropy_config(cfg);
  m.mog = make_mog_model(m.ps, "mog", ec, rng);
  m.post = make_post_model(m.ps, "post", ec, rng);
  return m;
}

// Config scalars come first so a loader can rebuild the structure before
// touching the parameter tensors. Parameters keep store insertion order,
// which is fixed by construction, so serialization is bit-reproducible.
inline NamedTensors model_tensors(const CodecModel& m) {
  NamedTensors out;
  out.emplace_back("cfg.width", Tensor::scalar(m.cfg.width));
  out.emplace_back("cfg.M", Tensor::scalar(m.cfg.M));
  out.emplace_back("cfg.L", Tensor::scalar(m.cfg.L));
  out.emplace_back("cfg.C", Tensor::scalar(m.cfg.C));
  out.emplace_back("cfg.nt", Tensor::scalar(m.cfg.nt));
  out.emplace_back("cfg.nres", Tensor::scalar(m.cfg.nres));
  out.emplace_back("cfg.ks", Tensor::scalar(m.cfg.ks));
  out.emplace_back("cfg.window", Tensor::scalar(m.cfg.window));
  out.emplace_back("cfg.a0", Tensor::scalar(m.cfg.a0));
  out.emplace_back("cfg.a1", Tensor::scalar(m.cfg.a1));
  out.emplace_back("cfg.a2", Tensor::scalar(m.cfg.a2));
  out.emplace_back("cfg.nonlocal", Tensor::scalar(m.cfg.nonlocal ? 1.0 : 0.0));
  for (const Var& p : m.ps.all()) out.emplace_back(p->name, p->value);
  return out;
}

inline uint64_t codec_model_hash(const CodecModel& m) {
  return model_hash(serialize_model(model_tensors(m)));
}

inline void save_model(const CodecModel& m, const std::string& path) {
  write_file_atomic(path, serialize_model(model_tensors(m)));
}

inline int config_int(const NamedTensors& nt, size_t i, const std::string& name, int lo, int hi) {
  if (i >= nt.size() || nt[i].first != name)
    throw model_mismatch_error("model file: expected " + name + " at slot " + std::to_string(i));
  const Tensor& t = nt[i].second;
  if (t.numel() != 1) throw model_mismatch_error("model file: " + name + " must be a scalar");
  const double v = t.data[0];
  if (v != std::floor(v) || v < lo || v > hi)
    throw model_mismatch_error("model file: " + name + " out of range");
  return static_cast<int>(v);
}

inline CodecModel load_model(const std::string& path) {
  const NamedTensors nt = deserialize_model(read_file(path));
  CodecConfig cfg;
  size_t i = 0;
  cfg.width = config_int(nt, i++, "cfg.width", 1, 1 << 16);
  cfg.M = config_int(nt, i++, "cfg.M", 1, 1 << 16);
  cfg.L = config_int(nt, i++, "cfg.L", 2, 255);
  cfg.C = config_int(nt, i++, "cfg.C", 1, 16);
  cfg.nt = config_int(nt, i++, "cfg.nt", 1, 1 << 16);
  cfg.nres = config_int(nt, i++, "cfg.nres", 0, 1 << 16);
  cfg.ks = config_int(nt, i++, "cfg.ks", 0, 1 << 8);
  cfg.window = config_int(nt, i++, "cfg.window", 0, 1 << 16);
  cfg.a0 = config_int(nt, i++, "cfg.a0", 1, 1 << 8);
  cfg.a1 = config_int(nt, i++, "cfg.a1", 1, 1 << 8);
  cfg.a2 = config_int(nt, i++, "cfg.a2", 1, 1 << 8);
  cfg.nonlocal = config_int(nt, i++, "cfg.nonlocal", 0, 1) != 0;
  CodecModel m = make_codec_model(cfg, 0);
  if (nt.size() != i + m.ps.all().size())
    throw model_mismatch_error("model file: tensor count does not match the configuration");
  for (const Var& p : m.ps.all()) {
    const auto& [name, stored] = nt[i++];
    if (name != p->name)
      throw model_mismatch_error("model file: expected tensor " + p->name + ", found " + name);
    if (!stored.same_shape(p->value))
      throw model_mismatch_error("model file: tensor " + name + " has shape " +
                                 shape_str(stored.shape) + ", expected " +
                                 shape_str(p->value.shape));
    p->value = stored;
  }
  return m;
}

// Code grid for a source image: pad to the transform multiple, then divide
// by the downsampling factor.
inline void code_dims(const CodecConfig& cfg, int image_h, int image_w, int* ch, int* cw) {
  const TransformConfig tc = transform_config(cfg);
  const int mul = required_multiple(tc);
  *ch = (image_h + mul - 1) / mul * mul / 8;
  *cw = (image_w + mul - 1) / mul * mul / 8;
}

inline CodeBlock image_to_codes(const CodecModel& m, const Image& im) {
  NoGradGuard g;
  const Image padded = pad_replicate(im, required_multiple(transform_config(m.cfg)));
  Var y = analysis(m.ga, constant(image_to_tensor(padded)));
  const int M = m.cfg.M, H = y->value.shape[2], W = y->value.shape[3];
  Tensor y3({M, H, W});
  std::copy(y->value.data.begin(), y->value.data.end(), y3.data.begin());
  return quantize_block(y3, centers_from_sigma(m.sigma->value));
}

inline Image codes_to_image(const CodecModel& m, const CodeBlock& codes, int image_h, int image_w) {
  NoGradGuard g;
  const Tensor yv = values_from_block(codes, centers_from_sigma(m.sigma->value));
  Tensor y4({1, codes.M, codes.H, codes.W});
  y4.data = yv.data;
  Var rec = synthesis(m.gs, constant(std::move(y4)));
  Tensor out = rec->value;
  for (double& v : out.data) v = std::min(1.0, std::max(0.0, v));
  Image full = tensor_to_image(out);
  if (full.h < image_h || full.w < image_w)
    throw dim_error("codes_to_image: code grid too small for the requested dims");
  if (full.h == image_h && full.w == image_w) return full;
  Image crop(image_h, image_w);
  for (int c = 0; c < 3; ++c)
    for (int y2 = 0; y2 < image_h; ++y2)
      for (int x2 = 0; x2 < image_w; ++x2) crop.at(c, y2, x2) = full.at(c, y2, x2);
  return crop;
}

inline std::vector<uint8_t> encode_image(const CodecModel& m, uint64_t hash, const Image& im,
                                         CodingDriver driver = CodingDriver::one_pass,
                                         double* ideal_bits = nullptr) {
  NoGradGuard g;
  const CodeBlock codes = image_to_codes(m, im);
  StreamHeader hd;
  hd.image_h = im.h;
  hd.image_w = im.w;
  hd.M = m.cfg.M;
  hd.L = m.cfg.L;
  hd.model_hash = hash;
  std::vector<uint8_t> out = pack_header(hd);
  const Tensor centers = centers_from_sigma(m.sigma->value);
  const std::vector<uint8_t> payload = encode_codes(m.post, codes, centers, driver, ideal_bits);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

inline std::vector<uint8_t> encode_image(const CodecModel& m, const Image& im,
                                         CodingDriver driver = CodingDriver::one_pass,
                                         double* ideal_bits = nullptr) {
  return encode_image(m, codec_model_hash(m), im, driver, ideal_bits);
}

// Refuses streams written by any other model before touching the payload.
inline Image decode_image(const CodecModel& m, uint64_t hash, const uint8_t* bytes, size_t n,
                          CodingDriver driver = CodingDriver::per_group) {
  NoGradGuard g;
  ByteReader br(bytes, n);
  const StreamHeader hd = parse_header(br);
  if (hd.model_hash != hash)
    throw model_mismatch_error("stream was produced by a different model");
  if (hd.M != m.cfg.M || hd.L != m.cfg.L)
    throw model_mismatch_error("stream code layout does not match the model");
  int ch = 0, cw = 0;
  code_dims(m.cfg, hd.image_h, hd.image_w, &ch, &cw);
  const Tensor centers = centers_from_sigma(m.sigma->value);
  const CodeBlock codes =
      decode_codes(m.post, bytes + kHeaderBytes, n - kHeaderBytes, m.cfg.M, ch, cw, centers,
                   driver == CodingDriver::one_pass ? CodingDriver::per_group : driver);
  return codes_to_image(m, codes, hd.image_h, hd.image_w);
}

inline Image decode_image(const CodecModel& m, const uint8_t* bytes, size_t n,
                          CodingDriver driver = CodingDriver::per_group) {
  return decode_image(m, codec_model_hash(m), bytes, n, driver);
}

}  // namespace nlc
