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

#include <chrono>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "nlcodec/training.hpp"

namespace nlc {
namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Image decode problems are input errors, not stream format errors.
Image load_input_image(const std::string& path) {
  try {
    return read_image(path);
  } catch (const format_error& e) {
    throw io_error(std::string(e.what()));
  }
}

void check_image_output_path(const std::string& path) {
  const auto dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext != ".png" && ext != ".ppm")
    throw usage_error("unsupported output extension (use .png or .ppm): " + path);
}

void write_image_atomic(const std::string& path, const Image& img) {
  const auto dot = path.rfind('.');
  const std::string tmp = path.substr(0, dot) + ".tmp" + path.substr(dot);
  try {
    write_image(tmp, img);
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::error_code ec2;
    std::filesystem::remove(tmp, ec2);
    throw io_error("cannot rename " + tmp + " to " + path + ": " + ec.message());
  }
}

// Text outputs stream into a sibling temp file that becomes the requested
// path only once the command has succeeded.
class AtomicText {
 public:
  explicit AtomicText(const std::string& path)
      : path_(path), tmp_(path + ".tmp"), os_(tmp_, std::ios::binary) {
    if (!os_) throw io_error("cannot open " + tmp_ + " for writing");
  }
  ~AtomicText() {
    if (!committed_) {
      os_.close();
      std::error_code ec;
      std::filesystem::remove(tmp_, ec);
    }
  }
  std::ostream& stream() { return os_; }
  void commit() {
    os_.flush();
    if (!os_) throw io_error("write failed: " + tmp_);
    os_.close();
    std::error_code ec;
    std::filesystem::rename(tmp_, path_, ec);
    if (ec) throw io_error("cannot rename " + tmp_ + " to " + path_ + ": " + ec.message());
    committed_ = true;
  }

 private:
  std::string path_, tmp_;
  std::ofstream os_;
  bool committed_ = false;
};

// ---- commands ----

struct TrainArgs {
  std::string config, data, output, metrics;
};

int run_train(const TrainArgs& a, uint64_t seed) {
  const TrainConfig cfg = load_train_config(a.config);
  const std::vector<Image> images = load_image_dir(a.data);
  if (images.empty()) throw usage_error("no usable images in " + a.data);
  const std::vector<Tensor> data = training_tensors(images, cfg.patch);
  CodecModel m = make_codec_model(cfg.model, seed);
  TrainResult res;
  if (!a.metrics.empty()) {
    AtomicText csv(a.metrics);
    res = train_codec(m, data, cfg, seed + 1, &csv.stream());
    csv.commit();
  } else {
    res = train_codec(m, data, cfg, seed + 1, nullptr);
  }
  save_model(m, a.output);
  std::cout << "trained " << res.steps << " steps on " << images.size() << " images, L_D "
            << res.final_ld << ", rate " << res.final_rate_bits << " bits/code\n";
  return 0;
}

struct ExtractArgs {
  std::string model, data, output;
  int crop = 60;
};

int run_extract(const ExtractArgs& a, uint64_t seed) {
  if (a.crop < 1) throw usage_error("--crop must be positive");
  const CodecModel m = load_model(a.model);
  const std::vector<Image> images = load_image_dir(a.data);
  if (images.empty()) throw usage_error("no usable images in " + a.data);
  Rng rng(seed);
  const std::vector<CodeBlock> blocks = extract_codes(m, images, a.crop, rng);
  save_code_dataset(a.output, blocks, m.cfg.L);
  std::cout << "extracted " << blocks.size() << " code blocks\n";
  return 0;
}

struct TrainPostArgs {
  std::string config, model, codes, output, metrics;
};

int run_train_post(const TrainPostArgs& a, uint64_t seed) {
  TrainConfig cfg;
  if (!a.config.empty()) cfg = load_train_config(a.config);
  CodecModel m = load_model(a.model);
  int L = 0;
  const std::vector<CodeBlock> dataset = load_code_dataset(a.codes, &L);
  if (L != m.cfg.L) throw model_mismatch_error("code dataset L does not match the model");
  double bits = 0.0;
  if (!a.metrics.empty()) {
    AtomicText csv(a.metrics);
    bits = train_post_model(m, dataset, cfg, seed, &csv.stream());
    csv.commit();
  } else {
    bits = train_post_model(m, dataset, cfg, seed, nullptr);
  }
  save_model(m, a.output);
  std::cout << "held-out " << bits << " bits/code\n";
  return 0;
}

struct EncodeArgs {
  std::string model, input, output;
};

int run_encode(const EncodeArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const CodecModel m = load_model(a.model);
  const Image im = load_input_image(a.input);
  const std::vector<uint8_t> stream = encode_image(m, im);
  write_file_atomic(a.output, stream);
  std::cout << "encoded " << im.h << "x" << im.w << " to " << stream.size() << " bytes, "
            << bits_per_pixel(stream.size(), im.h, im.w) << " bpp, " << seconds_since(t0)
            << " s\n";
  return 0;
}

struct DecodeArgs {
  std::string model, input, output;
};

int run_decode(const DecodeArgs& a) {
  check_image_output_path(a.output);
  const auto t0 = std::chrono::steady_clock::now();
  const CodecModel m = load_model(a.model);
  const std::vector<uint8_t> stream = read_file(a.input);
  const Image im = decode_image(m, stream.data(), stream.size());
  write_image_atomic(a.output, im);
  std::cout << "decoded " << im.h << "x" << im.w << " in " << seconds_since(t0) << " s\n";
  return 0;
}

struct EvalArgs {
  std::string model, dir, out;
};

void csv_number(std::ostream& os, double v) {
  if (std::isinf(v)) {
    os << (v > 0 ? "inf" : "-inf");
    return;
  }
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  os << buf;
}

int run_eval(const EvalArgs& a) {
  const CodecModel m = load_model(a.model);
  const uint64_t hash = codec_model_hash(m);
  const std::vector<std::string> files = list_image_files(a.dir);
  if (files.empty()) throw usage_error("no images in " + a.dir);
  AtomicText csv(a.out);
  csv.stream() << "image,bytes,bpp,psnr_db,ms_ssim\n";
  double sum_bytes = 0, sum_bpp = 0, sum_psnr = 0, sum_ssim = 0;
  int n = 0;
  for (const std::string& path : files) {
    Image im;
    try {
      im = load_input_image(path);
    } catch (const std::runtime_error& e) {
      std::cerr << "warning: skipping " << path << ": " << e.what() << "\n";
      continue;
    }
    const std::vector<uint8_t> stream = encode_image(m, hash, im);
    const Image dec = decode_image(m, hash, stream.data(), stream.size());
    const Tensor orig = image_to_tensor(im), rec = image_to_tensor(dec);
    const double bpp = bits_per_pixel(stream.size(), im.h, im.w);
    const double psnr = psnr_db(mse(orig, rec));
    const double ssim = ms_ssim_value(orig, rec);
    csv.stream() << std::filesystem::path(path).filename().string() << "," << stream.size()
                 << ",";
    csv_number(csv.stream(), bpp);
    csv.stream() << ",";
    csv_number(csv.stream(), psnr);
    csv.stream() << ",";
    csv_number(csv.stream(), ssim);
    csv.stream() << "\n";
    sum_bytes += static_cast<double>(stream.size());
    sum_bpp += bpp;
    sum_psnr += psnr;
    sum_ssim += ssim;
    ++n;
  }
  if (n == 0) throw usage_error("no readable images in " + a.dir);
  csv.stream() << "mean," << sum_bytes / n << ",";
  csv_number(csv.stream(), sum_bpp / n);
  csv.stream() << ",";
  csv_number(csv.stream(), sum_psnr / n);
  csv.stream() << ",";
  csv_number(csv.stream(), sum_ssim / n);
  csv.stream() << "\n";
  csv.commit();
  std::cout << "evaluated " << n << " images: mean " << sum_bpp / n << " bpp, " << sum_psnr / n
            << " dB, MS-SSIM " << sum_ssim / n << "\n";
  return 0;
}

// ---- selftest ----

struct SelftestFailure {
  std::string check, detail;
};

void selftest_ok(const std::string& name) { std::cout << "selftest: " << name << " ok\n"; }

[[noreturn]] void selftest_fail(const std::string& name, const std::string& detail) {
  throw SelftestFailure{name, detail};
}

void check_causality(Rng& rng) {
  EntropyConfig ec;
  ec.M = 3;
  ec.L = 4;
  ec.C = 2;
  ec.nt = 2;
  ec.nres = 1;
  ec.ks = 1;
  ParamStore ps;
  const MoGModel mog = make_mog_model(ps, "mog", ec, rng);
  const PostModel post = make_post_model(ps, "post", ec, rng);
  const Tensor centers = centers_from_sigma(sigma_init(ec.M, ec.L));
  const int H = 6, W = 6;
  CodeBlock y(ec.M, H, W);
  for (uint8_t& v : y.idx) v = static_cast<uint8_t>(rng.randint(ec.L));
  GroupSchedule sched(ec.M, H, W);
  double worst = 0.0;
  const auto post_fn = [&](const CodeBlock& cb) { return post_tables(post, cb, centers); };
  const auto mog_fn = [&](const CodeBlock& cb) { return mog_tables(mog, cb, centers); };
  for (int k = 1; k < sched.K; ++k) {
    worst = std::max(worst, causality_probe(post_fn, y, k, ec.L, rng));
    worst = std::max(worst, causality_probe(mog_fn, y, k, ec.L, rng));
  }
  if (worst > 1e-12)
    selftest_fail("causality", "future codes moved earlier tables by " + std::to_string(worst));
  selftest_ok("causality");
}

void check_mask_enumeration() {
  for (const MaskKind kind : {MaskKind::input, MaskKind::hidden})
    for (const int ks : {1, 2})
      for (const int M : {1, 3}) {
        const auto taps = build_taps(kind, ks, M);
        for (int r = 0; r < M; ++r) {
          size_t expected = 0;
          for (int s = 0; s < M; ++s)
            for (int u = -ks; u <= ks; ++u)
              for (int v = -ks; v <= ks; ++v) {
                const bool want = mask_allows(kind, r, s, u, v);
                if (want) ++expected;
                bool found = false;
                for (const Tap& t : taps[static_cast<size_t>(r)])
                  if (t.s == s && t.u == u && t.v == v) found = true;
                if (found != want)
                  selftest_fail("mask enumeration", "tap (" + std::to_string(s) + "," +
                                                        std::to_string(u) + "," +
                                                        std::to_string(v) + ") for channel " +
                                                        std::to_string(r));
              }
          if (expected != taps[static_cast<size_t>(r)].size())
            selftest_fail("mask enumeration", "tap count mismatch");
        }
      }
  selftest_ok("mask enumeration");
}

void check_normalization(Rng& rng) {
  EntropyConfig ec;
  ec.M = 2;
  ec.L = 5;
  ec.C = 3;
  ec.nt = 2;
  ec.nres = 1;
  ec.ks = 1;
  ParamStore ps;
  const MoGModel mog = make_mog_model(ps, "mog", ec, rng);
  const PostModel post = make_post_model(ps, "post", ec, rng);
  const Tensor centers = centers_from_sigma(sigma_init(ec.M, ec.L));
  CodeBlock y(ec.M, 5, 5);
  for (uint8_t& v : y.idx) v = static_cast<uint8_t>(rng.randint(ec.L));
  for (const Tensor& tables : {mog_tables(mog, y, centers), post_tables(post, y, centers)}) {
    for (int64_t row = 0; row < tables.numel() / ec.L; ++row) {
      double sum = 0.0;
      for (int l = 0; l < ec.L; ++l) {
        const double p = tables[row * ec.L + l];
        if (p < 0.0) selftest_fail("table normalization", "negative probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-6)
        selftest_fail("table normalization", "row sums to " + std::to_string(sum));
    }
  }
  selftest_ok("table normalization");
}

void check_roundtrip(Rng& rng) {
  EntropyConfig ec;
  ec.M = 3;
  ec.L = 6;
  ec.C = 2;
  ec.nt = 2;
  ec.nres = 1;
  ec.ks = 1;
  ParamStore ps;
  const PostModel post = make_post_model(ps, "post", ec, rng);
  const Tensor centers = centers_from_sigma(sigma_init(ec.M, ec.L));
  for (int trial = 0; trial < 3; ++trial) {
    CodeBlock y(ec.M, 7, 7);
    for (uint8_t& v : y.idx) v = static_cast<uint8_t>(rng.randint(ec.L));
    double ideal = 0.0;
    const std::vector<uint8_t> payload =
        encode_codes(post, y, centers, CodingDriver::one_pass, &ideal);
    const CodeBlock back =
        decode_codes(post, payload.data(), payload.size(), y.M, y.H, y.W, centers);
    if (back.idx != y.idx) selftest_fail("coding round-trip", "decoded codes differ");
    const double slack = 8.0 * static_cast<double>(payload.size()) - ideal;
    if (slack > 64.0)
      selftest_fail("coding round-trip", "payload exceeds ideal by " + std::to_string(slack) +
                                             " bits");
  }
  selftest_ok("coding round-trip");
}

void check_gradients(Rng& rng) {
  // Masked conv wrt its input.
  {
    ParamStore ps;
    const MaskedConv c = make_masked_conv(ps, "t", MaskKind::hidden, 2, 1, 2, 1, rng);
    Tensor x0({1, 2, 4, 4});
    fill_uniform(x0, rng, -1.0, 1.0);
    const double err =
        finite_diff_check([&](const Var& x) { return sum_all(masked_conv(x, c)); }, x0, 1e-5);
    if (err > 1e-4) selftest_fail("gradients", "masked conv input error " + std::to_string(err));
  }
  // Non-local pass wrt input and proxy weights.
  {
    Var rho = param("rho", rho_init(2));
    Tensor y0({1, 2, 4, 4});
    fill_uniform(y0, rng, 0.0, 1.0);
    Tensor wsum({1, 4, 4, 4});
    fill_uniform(wsum, rng, -1.0, 1.0);
    const auto weighted = [&](const Var& y) {
      return sum_all(mul(nonlocal_rep_conf(y, rho, 0), constant(wsum)));
    };
    const double err_y = finite_diff_check(weighted, y0, 1e-5);
    if (err_y > 1e-4) selftest_fail("gradients", "non-local input error " + std::to_string(err_y));
    Var yv = constant(y0);
    const double err_rho = finite_diff_check_param(
        [&] { return sum_all(mul(nonlocal_rep_conf(yv, rho, 0), constant(wsum))); }, rho, 1e-5, 0,
        rng);
    if (err_rho > 1e-4)
      selftest_fail("gradients", "proxy weight error " + std::to_string(err_rho));
  }
  // Mixture probability of chosen codes wrt the code values.
  {
    EntropyConfig ec;
    ec.M = 2;
    ec.L = 4;
    ec.C = 2;
    ec.nt = 2;
    ec.nres = 0;
    ec.ks = 1;
    ParamStore ps;
    const MoGModel mog = make_mog_model(ps, "mog", ec, rng);
    const Tensor centers = centers_from_sigma(sigma_init(ec.M, ec.L));
    std::vector<CodeBlock> codes(1, CodeBlock(ec.M, 4, 4));
    for (uint8_t& v : codes[0].idx) v = static_cast<uint8_t>(rng.randint(ec.L));
    Tensor y0({1, 2, 4, 4});
    fill_uniform(y0, rng, 0.1, 0.9);
    const double err = finite_diff_check(
        [&](const Var& y) {
          return rate_loss_bits(mog_selected_prob(mog_field(mog, y), centers, codes));
        },
        y0, 1e-5);
    if (err > 1e-4) selftest_fail("gradients", "mixture probability error " + std::to_string(err));
  }
  // Straight-through backward is the identity through a linear readout.
  {
    const Tensor centers = centers_from_sigma(sigma_init(2, 4));
    Tensor z0({1, 2, 3, 3});
    fill_uniform(z0, rng, 0.0, 1.0);
    Tensor w({1, 2, 3, 3});
    fill_uniform(w, rng, -1.0, 1.0);
    Var z = param("z", z0);
    Var loss = sum_all(mul(straight_through(z, centers, nullptr), constant(w)));
    backward(loss);
    for (int64_t i = 0; i < w.numel(); ++i)
      if (std::abs(z->grad[i] - w[i]) > 1e-12)
        selftest_fail("gradients", "straight-through gradient is not the identity");
  }
  selftest_ok("gradients");
}

void check_quantizer(Rng& rng) {
  for (int trial = 0; trial < 10; ++trial) {
    const int M = 1 + static_cast<int>(rng.randint(3));
    const int L = 2 + static_cast<int>(rng.randint(7));
    Tensor sigma({M, L});
    fill_uniform(sigma, rng, -4.0, 1.0);
    const Tensor centers = centers_from_sigma(sigma);
    for (int r = 0; r < M; ++r)
      for (int l = 1; l < L; ++l)
        if (!(centers[static_cast<int64_t>(r) * L + l] > centers[static_cast<int64_t>(r) * L + l - 1]))
          selftest_fail("quantizer", "centers not strictly increasing");
    Tensor z({M, 2, 2});
    fill_uniform(z, rng, -0.5, 1.5);
    const CodeBlock once = quantize_block(z, centers);
    const CodeBlock twice = quantize_block(values_from_block(once, centers), centers);
    if (once.idx != twice.idx) selftest_fail("quantizer", "quantization is not idempotent");
  }
  const Tensor init_centers = centers_from_sigma(sigma_init(1, 8));
  for (int l = 0; l < 8; ++l) {
    const double want = (l + 1) / 9.0;
    if (std::abs(init_centers[l] - want) > 1e-12)
      selftest_fail("quantizer", "initial ladder is not uniform on (0,1)");
  }
  selftest_ok("quantizer");
}

void check_stream_refusal(Rng& rng) {
  CodecConfig cc;
  cc.width = 8;
  cc.M = 4;
  cc.L = 4;
  cc.C = 2;
  cc.nt = 1;
  cc.nres = 0;
  cc.ks = 1;
  const CodecModel m = make_codec_model(cc, rng.raw());
  const uint64_t hash = codec_model_hash(m);
  Image im(64, 64);
  for (double& v : im.data) v = rng.uniform();
  std::vector<uint8_t> stream = encode_image(m, hash, im);
  const Image dec = decode_image(m, hash, stream.data(), stream.size());
  const CodeBlock codes = image_to_codes(m, im);
  const Image direct = codes_to_image(m, codes, im.h, im.w);
  if (dec.data != direct.data)
    selftest_fail("stream round-trip", "decode differs from direct synthesis");
  std::vector<uint8_t> tampered = stream;
  tampered[12] ^= 0xFF;  // inside the model hash field
  bool refused = false;
  try {
    (void)decode_image(m, hash, tampered.data(), tampered.size());
  } catch (const model_mismatch_error&) {
    refused = true;
  }
  if (!refused) selftest_fail("stream round-trip", "hash mismatch was not refused");
  tampered = stream;
  tampered[0] = 'X';
  refused = false;
  try {
    (void)decode_image(m, hash, tampered.data(), tampered.size());
  } catch (const format_error&) {
    refused = true;
  }
  if (!refused) selftest_fail("stream round-trip", "bad magic was not refused");
  selftest_ok("stream round-trip");
}

int run_selftest(uint64_t seed, bool sabotage) {
  if (sabotage) sabotage_mask() = true;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(seed ^ 0x5e1f7e57u);
  try {
    check_causality(rng);
    check_mask_enumeration();
    check_normalization(rng);
    check_roundtrip(rng);
    check_gradients(rng);
    check_quantizer(rng);
    check_stream_refusal(rng);
  } catch (const SelftestFailure& f) {
    std::cerr << "selftest failure: " << f.check << ": " << f.detail << "\n";
    return 1;
  }
  std::cout << "selftest passed in " << seconds_since(t0) << " s\n";
  return 0;
}

}  // namespace
}  // namespace nlc

int main(int argc, char** argv) {
  CLI::App app{"nlcodec: lossy image codec with a context-based non-local entropy model"};
  app.require_subcommand(1);
  uint64_t seed = 0;
  int threads = 1;
  app.add_option("--seed", seed, "random seed (default 0)");
  app.add_option("--threads", threads, "worker thread cap (default 1)")
      ->check(CLI::PositiveNumber);

  nlc::TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train transforms, quantizer and entropy model");
  train->fallthrough();
  train->add_option("--config", train_args.config, "key = value config file")->required();
  train->add_option("--data", train_args.data, "directory of training images")->required();
  train->add_option("--output", train_args.output, "model file to write")->required();
  train->add_option("--metrics", train_args.metrics, "CSV metrics file");

  nlc::ExtractArgs extract_args;
  auto* extract = app.add_subcommand("extract-codes", "extract code blocks from images");
  extract->fallthrough();
  extract->add_option("--model", extract_args.model, "trained model file")->required();
  extract->add_option("--data", extract_args.data, "directory of images")->required();
  extract->add_option("--output", extract_args.output, "code dataset file to write")->required();
  extract->add_option("--crop", extract_args.crop, "spatial crop cap (default 60)");

  nlc::TrainPostArgs post_args;
  auto* post = app.add_subcommand("train-post", "train the coding model on extracted codes");
  post->fallthrough();
  post->add_option("--config", post_args.config, "key = value config file");
  post->add_option("--model", post_args.model, "model file to start from")->required();
  post->add_option("--codes", post_args.codes, "code dataset file")->required();
  post->add_option("--output", post_args.output, "model file to write")->required();
  post->add_option("--metrics", post_args.metrics, "CSV metrics file");

  nlc::EncodeArgs encode_args;
  auto* encode = app.add_subcommand("encode", "compress an image to a bitstream");
  encode->fallthrough();
  encode->add_option("--model", encode_args.model, "model file")->required();
  encode->add_option("--input", encode_args.input, "PNG or binary PPM image")->required();
  encode->add_option("--output", encode_args.output, "bitstream file to write")->required();

  nlc::DecodeArgs decode_args;
  auto* decode = app.add_subcommand("decode", "reconstruct an image from a bitstream");
  decode->fallthrough();
  decode->add_option("--model", decode_args.model, "model file")->required();
  decode->add_option("--input", decode_args.input, "bitstream file")->required();
  decode->add_option("--output", decode_args.output, "image file to write (.png or .ppm)")
      ->required();

  nlc::EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "rate and distortion over an image directory");
  eval->fallthrough();
  eval->add_option("--model", eval_args.model, "model file")->required();
  eval->add_option("--dir", eval_args.dir, "directory of images")->required();
  eval->add_option("--out", eval_args.out, "CSV file to write")->required();

  bool sabotage = false;
  auto* selftest = app.add_subcommand("selftest", "run the built-in invariant suite");
  selftest->fallthrough();
  selftest->add_flag("--sabotage", sabotage)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  nlc::worker_threads() = threads;
  try {
    if (train->parsed()) return nlc::run_train(train_args, seed);
    if (extract->parsed()) return nlc::run_extract(extract_args, seed);
    if (post->parsed()) return nlc::run_train_post(post_args, seed);
    if (encode->parsed()) return nlc::run_encode(encode_args);
    if (decode->parsed()) return nlc::run_decode(decode_args);
    if (eval->parsed()) return nlc::run_eval(eval_args);
    if (selftest->parsed()) return nlc::run_selftest(seed, sabotage);
  } catch (const nlc::model_mismatch_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const nlc::corrupt_stream_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const nlc::format_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const nlc::io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
