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

#include <vector>

#include "nlcodec/model.hpp"
#include "testutil.hpp"

using namespace nlc;

namespace {

CodecConfig tiny_codec_config() {
  CodecConfig cfg;
  cfg.width = 8;
  cfg.M = 4;
  cfg.L = 4;
  cfg.C = 2;
  cfg.nt = 2;
  cfg.nres = 0;
  cfg.ks = 1;
  return cfg;
}

}  // namespace

TEST_CASE("codec config validation rejects out-of-range fields") {
  CodecConfig cfg = tiny_codec_config();
  cfg.validate();
  cfg.width = 0;
  REQUIRE_THROWS_AS(cfg.validate(), usage_error);
  cfg = tiny_codec_config();
  cfg.L = 300;
  REQUIRE_THROWS_AS(cfg.validate(), usage_error);
  cfg = tiny_codec_config();
  cfg.a1 = 0;
  REQUIRE_THROWS_AS(cfg.validate(), usage_error);
  cfg = tiny_codec_config();
  cfg.C = 17;
  REQUIRE_THROWS_AS(cfg.validate(), usage_error);
}

TEST_CASE("model construction is deterministic in the seed") {
  const CodecConfig cfg = tiny_codec_config();
  CodecModel a = make_codec_model(cfg, 7);
  CodecModel b = make_codec_model(cfg, 7);
  CodecModel c = make_codec_model(cfg, 8);
  REQUIRE(codec_model_hash(a) == codec_model_hash(b));
  REQUIRE(codec_model_hash(a) != codec_model_hash(c));
  const NamedTensors ta = model_tensors(a), tb = model_tensors(b);
  REQUIRE(ta.size() == tb.size());
  for (size_t i = 0; i < ta.size(); ++i) {
    REQUIRE(ta[i].first == tb[i].first);
    REQUIRE(ta[i].second.data == tb[i].second.data);
  }
}

TEST_CASE("configuration scalars precede parameters in the model file") {
  CodecModel m = make_codec_model(tiny_codec_config(), 1);
  const NamedTensors nt = model_tensors(m);
  REQUIRE(nt.size() == 12 + m.ps.all().size());
  REQUIRE(nt[0].first == "cfg.width");
  REQUIRE(nt[1].first == "cfg.M");
  REQUIRE(nt[11].first == "cfg.nonlocal");
  for (size_t i = 0; i < 12; ++i) REQUIRE(nt[i].second.numel() == 1);
}

TEST_CASE("model files round-trip through save and load") {
  testutil::TempDir td;
  const CodecConfig cfg = tiny_codec_config();
  CodecModel m = make_codec_model(cfg, 3);
  save_model(m, td.str("m.nlc"));
  CodecModel back = load_model(td.str("m.nlc"));
  REQUIRE(back.cfg.width == cfg.width);
  REQUIRE(back.cfg.M == cfg.M);
  REQUIRE(back.cfg.L == cfg.L);
  REQUIRE(back.cfg.nonlocal == cfg.nonlocal);
  REQUIRE(codec_model_hash(back) == codec_model_hash(m));
  const NamedTensors ta = model_tensors(m), tb = model_tensors(back);
  for (size_t i = 0; i < ta.size(); ++i) REQUIRE(ta[i].second.data == tb[i].second.data);
}

TEST_CASE("loader refuses renamed tensors, bad counts, and junk files") {
  testutil::TempDir td;
  CodecModel m = make_codec_model(tiny_codec_config(), 4);
  const std::vector<uint8_t> good = serialize_model(model_tensors(m));

  NamedTensors nt = deserialize_model(good);
  nt[12].first += "x";
  write_file_atomic(td.str("renamed.nlc"), serialize_model(nt));
  REQUIRE_THROWS_AS(load_model(td.str("renamed.nlc")), model_mismatch_error);

  nt = deserialize_model(good);
  nt.pop_back();
  write_file_atomic(td.str("short.nlc"), serialize_model(nt));
  REQUIRE_THROWS_AS(load_model(td.str("short.nlc")), model_mismatch_error);

  nt = deserialize_model(good);
  nt[13].second = Tensor({3, 3});
  write_file_atomic(td.str("shape.nlc"), serialize_model(nt));
  REQUIRE_THROWS_AS(load_model(td.str("shape.nlc")), model_mismatch_error);

  nt = deserialize_model(good);
  nt[2].second.data[0] = 1.0;  // L below the valid range
  write_file_atomic(td.str("badcfg.nlc"), serialize_model(nt));
  REQUIRE_THROWS_AS(load_model(td.str("badcfg.nlc")), model_mismatch_error);

  auto junk = good;
  junk[0] = 'Z';
  write_file_atomic(td.str("junk.nlc"), junk);
  REQUIRE_THROWS_AS(load_model(td.str("junk.nlc")), format_error);
  REQUIRE_THROWS_AS(load_model(td.str("absent.nlc")), io_error);
}

TEST_CASE("code grid covers the padded image") {
  const CodecConfig cfg = tiny_codec_config();
  int ch = 0, cw = 0;
  code_dims(cfg, 64, 64, &ch, &cw);
  REQUIRE(ch == 8);
  REQUIRE(cw == 8);
  code_dims(cfg, 65, 70, &ch, &cw);
  REQUIRE(ch == 16);
  REQUIRE(cw == 16);
  code_dims(cfg, 1, 1, &ch, &cw);
  REQUIRE(ch == 8);
  REQUIRE(cw == 8);
}

TEST_CASE("codes and reconstructions have the expected geometry") {
  const CodecConfig cfg = tiny_codec_config();
  CodecModel m = make_codec_model(cfg, 5);
  const Image im = testutil::make_sinusoid_image(65, 70, 6);
  const CodeBlock codes = image_to_codes(m, im);
  REQUIRE(codes.M == cfg.M);
  REQUIRE(codes.H == 16);
  REQUIRE(codes.W == 16);
  for (uint8_t v : codes.idx) REQUIRE(v < cfg.L);
  const Image rec = codes_to_image(m, codes, 65, 70);
  REQUIRE(rec.h == 65);
  REQUIRE(rec.w == 70);
  for (double v : rec.data) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
}

TEST_CASE("stream round-trip reproduces the direct reconstruction bitwise") {
  const CodecConfig cfg = tiny_codec_config();
  CodecModel m = make_codec_model(cfg, 9);
  const Image im = testutil::make_sinusoid_image(64, 64, 10);
  double ideal = 0.0;
  const std::vector<uint8_t> stream = encode_image(m, im, CodingDriver::one_pass, &ideal);
  REQUIRE(stream.size() > kHeaderBytes);
  REQUIRE(8.0 * static_cast<double>(stream.size() - kHeaderBytes) <= ideal + 64.0);
  const Image direct = codes_to_image(m, image_to_codes(m, im), 64, 64);
  const Image via_stream = decode_image(m, stream.data(), stream.size());
  REQUIRE(via_stream.h == 64);
  REQUIRE(via_stream.data == direct.data);
  const Image per_pos =
      decode_image(m, stream.data(), stream.size(), CodingDriver::per_position);
  REQUIRE(per_pos.data == direct.data);
  const Image mapped = decode_image(m, stream.data(), stream.size(), CodingDriver::one_pass);
  REQUIRE(mapped.data == direct.data);
  const std::vector<uint8_t> again = encode_image(m, im, CodingDriver::per_group);
  REQUIRE(again == stream);
}

TEST_CASE("decoder refuses foreign models and corrupted headers") {
  const CodecConfig cfg = tiny_codec_config();
  CodecModel m = make_codec_model(cfg, 11);
  const Image im = testutil::make_sinusoid_image(64, 64, 12);
  const std::vector<uint8_t> stream = encode_image(m, im);

  auto tampered = stream;
  tampered[12] ^= 0xFF;  // model hash field
  REQUIRE_THROWS_AS(decode_image(m, tampered.data(), tampered.size()), model_mismatch_error);

  tampered = stream;
  tampered[9] ^= 0xFF;  // channel count field
  REQUIRE_THROWS_AS(decode_image(m, tampered.data(), tampered.size()), model_mismatch_error);

  tampered = stream;
  tampered[0] = 'Q';
  REQUIRE_THROWS_AS(decode_image(m, tampered.data(), tampered.size()), format_error);

  CodecModel other = make_codec_model(cfg, 12);
  REQUIRE_THROWS_AS(decode_image(other, stream.data(), stream.size()), model_mismatch_error);

  REQUIRE_THROWS_AS(decode_image(m, stream.data(), kHeaderBytes / 2), format_error);
}
