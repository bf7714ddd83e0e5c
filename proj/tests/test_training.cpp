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
#include <fstream>
#include <sstream>

#include "nlcodec/training.hpp"
#include "testutil.hpp"

namespace nlc {
namespace {

using testutil::TempDir;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
}

CodecConfig tiny_model_config() {
  CodecConfig c;
  c.width = 8;
  c.M = 2;
  c.L = 4;
  c.C = 2;
  c.nt = 2;
  c.nres = 0;
  c.ks = 1;
  c.window = 0;
  c.a0 = 1;
  c.a1 = 1;
  c.a2 = 1;
  c.nonlocal = true;
  return c;
}

TrainConfig tiny_train_config() {
  TrainConfig cfg;
  cfg.model = tiny_model_config();
  cfg.lambda = 0.1;
  cfg.distortion = "mse";
  cfg.lr = 1e-3;
  cfg.patience = 1;
  cfg.patch = 8;
  cfg.batch = 1;
  cfg.warmup_steps = 2;
  cfg.steps_per_epoch = 2;
  cfg.max_steps = 6;
  cfg.csv_every = 1;
  cfg.post_lr = 1e-3;
  cfg.post_batch = 2;
  cfg.post_steps_per_epoch = 2;
  cfg.post_max_steps = 4;
  cfg.crop = 60;
  cfg.holdout = 0.25;
  return cfg;
}

TEST_CASE("config files parse keys, comments and whitespace", "[training][config]") {
  TempDir td;
  const std::string path = td.str("run.cfg");
  write_text(path,
             "# training run\n"
             "width = 8\n"
             "m=2\n"
             "l = 4   # centers\n"
             "c = 2\n"
             "nt = 2\n"
             "nres = 0\n"
             "ks = 1\n"
             "window = 3\n"
             "a0 = 1\n"
             "a1 = 1\n"
             "a2 = 1\n"
             "nonlocal = false\n"
             "\n"
             "lambda = 0.25\n"
             "distortion = mse\n"
             "lr = 0.001\n"
             "patience = 3\n"
             "patch = 16\n"
             "batch = 2\n"
             "warmup_steps = 10\n"
             "steps_per_epoch = 5\n"
             "max_steps = 40\n"
             "csv_every = 2\n"
             "post_lr = 0.01\n"
             "post_batch = 4\n"
             "post_steps_per_epoch = 7\n"
             "post_max_steps = 21\n"
             "crop = 12\n"
             "holdout = 0.5");
  const TrainConfig cfg = load_train_config(path);
  CHECK(cfg.model.width == 8);
  CHECK(cfg.model.M == 2);
  CHECK(cfg.model.L == 4);
  CHECK(cfg.model.C == 2);
  CHECK(cfg.model.nt == 2);
  CHECK(cfg.model.nres == 0);
  CHECK(cfg.model.ks == 1);
  CHECK(cfg.model.window == 3);
  CHECK(cfg.model.a0 == 1);
  CHECK(cfg.model.a1 == 1);
  CHECK(cfg.model.a2 == 1);
  CHECK_FALSE(cfg.model.nonlocal);
  CHECK(cfg.lambda == 0.25);
  CHECK(cfg.distortion == "mse");
  CHECK(cfg.lr == 0.001);
  CHECK(cfg.patience == 3);
  CHECK(cfg.patch == 16);
  CHECK(cfg.batch == 2);
  CHECK(cfg.warmup_steps == 10);
  CHECK(cfg.steps_per_epoch == 5);
  CHECK(cfg.max_steps == 40);
  CHECK(cfg.csv_every == 2);
  CHECK(cfg.post_lr == 0.01);
  CHECK(cfg.post_batch == 4);
  CHECK(cfg.post_steps_per_epoch == 7);
  CHECK(cfg.post_max_steps == 21);
  CHECK(cfg.crop == 12);
  CHECK(cfg.holdout == 0.5);
}

TEST_CASE("an empty config file yields the defaults", "[training][config]") {
  TempDir td;
  const std::string path = td.str("empty.cfg");
  write_text(path, "# nothing but comments\n\n");
  const TrainConfig cfg = load_train_config(path);
  CHECK(cfg.model.width == 192);
  CHECK(cfg.model.M == 192);
  CHECK(cfg.lambda == 0.1);
  CHECK(cfg.distortion == "msssim");
  CHECK(cfg.patch == 256);
}

TEST_CASE("config files refuse malformed lines", "[training][config]") {
  TempDir td;
  auto rejects = [&](const char* name, const std::string& text) {
    const std::string path = td.str(name);
    write_text(path, text);
    CHECK_THROWS_AS(load_train_config(path), usage_error);
  };
  rejects("dup.cfg", "lr = 0.1\nlr = 0.2\n");
  rejects("unknown.cfg", "learning_rate = 0.1\n");
  rejects("noeq.cfg", "lr 0.1\n");
  rejects("emptyval.cfg", "lr =\n");
  rejects("emptykey.cfg", "= 0.1\n");
  rejects("badint.cfg", "batch = 2x\n");
  rejects("badfloat.cfg", "lambda = 0.1.2\n");
  rejects("badbool.cfg", "nonlocal = yes\n");
  rejects("partial.cfg", "batch = 2 4\n");
}

TEST_CASE("config validation refuses inconsistent settings", "[training][config]") {
  auto rejects = [](auto&& tweak) {
    TrainConfig cfg = tiny_train_config();
    tweak(cfg);
    CHECK_THROWS_AS(cfg.validate(), usage_error);
  };
  rejects([](TrainConfig& c) { c.lambda = 0.0; });
  rejects([](TrainConfig& c) { c.distortion = "l1"; });
  rejects([](TrainConfig& c) { c.lr = 0.0; });
  rejects([](TrainConfig& c) { c.patience = 0; });
  rejects([](TrainConfig& c) { c.patch = 12; });  // not a multiple of 8
  rejects([](TrainConfig& c) { c.patch = 0; });
  rejects([](TrainConfig& c) { c.batch = 0; });
  rejects([](TrainConfig& c) { c.warmup_steps = -1; });
  rejects([](TrainConfig& c) { c.steps_per_epoch = 0; });
  rejects([](TrainConfig& c) { c.csv_every = 0; });
  rejects([](TrainConfig& c) { c.crop = 0; });
  rejects([](TrainConfig& c) { c.holdout = 1.0; });
  rejects([](TrainConfig& c) { c.holdout = -0.1; });
  TrainConfig ok = tiny_train_config();
  CHECK_NOTHROW(ok.validate());
}

TEST_CASE("the optimizer matches a scalar reference update", "[training][adam]") {
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.05;
  ParamStore ps;
  Tensor t0({3});
  t0[0] = 1.0;
  t0[1] = -2.0;
  t0[2] = 0.5;
  Var w = ps.add("w", t0);
  Adam opt({w}, b1, b2, eps);

  // Reference state updated alongside the optimizer.
  std::array<double, 3> val = {1.0, -2.0, 0.5};
  std::array<double, 3> mr = {0, 0, 0}, vr = {0, 0, 0};
  const std::array<std::array<double, 3>, 3> grads = {
      {{0.3, -1.2, 0.04}, {-0.7, 0.5, 0.0}, {2.0, 2.0, -3.0}}};
  for (int step = 1; step <= 3; ++step) {
    const auto& g = grads[static_cast<size_t>(step - 1)];
    w->grad = Tensor({3});
    for (int j = 0; j < 3; ++j) w->grad[j] = g[static_cast<size_t>(j)];
    opt.step(lr);
    const double c1 = 1.0 - std::pow(b1, step);
    const double c2 = 1.0 - std::pow(b2, step);
    for (size_t j = 0; j < 3; ++j) {
      mr[j] = b1 * mr[j] + (1.0 - b1) * g[j];
      vr[j] = b2 * vr[j] + (1.0 - b2) * g[j] * g[j];
      val[j] -= lr * (mr[j] / c1) / (std::sqrt(vr[j] / c2) + eps);
      CHECK(w->value[static_cast<int64_t>(j)] == Catch::Approx(val[j]).margin(1e-15));
    }
  }
}

TEST_CASE("the optimizer skips parameters without gradients", "[training][adam]") {
  ParamStore ps;
  Var w = ps.add("w", Tensor({2}));
  w->value[0] = 3.0;
  w->value[1] = -1.0;
  Adam opt({w});
  opt.step(0.1);  // grad never allocated
  CHECK(w->value[0] == 3.0);
  CHECK(w->value[1] == -1.0);
}

TEST_CASE("the rate schedule drops twice and then stops", "[training][schedule]") {
  LrSchedule s{1.0, 2};
  s.observe(5.0);
  CHECK(s.best == 5.0);
  s.observe(4.0);
  CHECK(s.best == 4.0);
  CHECK(s.stale == 0);

  s.observe(4.5);
  CHECK(s.stale == 1);
  CHECK(s.lr == 1.0);
  s.observe(4.6);  // second stale epoch: first drop
  CHECK(s.drops == 1);
  CHECK(s.stale == 0);
  CHECK(s.lr == Catch::Approx(0.1));
  CHECK_FALSE(s.done);

  s.observe(3.0);  // recovery resets the stale counter
  CHECK(s.best == 3.0);
  s.observe(3.5);
  s.observe(3.6);  // second drop
  CHECK(s.drops == 2);
  CHECK(s.lr == Catch::Approx(0.01));
  CHECK_FALSE(s.done);

  s.observe(3.7);
  s.observe(3.8);  // third plateau ends the run without another drop
  CHECK(s.done);
  CHECK(s.drops == 2);
  CHECK(s.lr == Catch::Approx(0.01));

  s.observe(0.001);  // ignored once done
  CHECK(s.best == 3.0);
  CHECK(s.done);
}

TEST_CASE("parameters split cleanly between the two stages", "[training][params]") {
  const CodecModel m = make_codec_model(tiny_model_config(), 7);
  const std::vector<Var> rd = rd_params(m);
  const std::vector<Var> post = post_params(m);
  REQUIRE_FALSE(rd.empty());
  REQUIRE_FALSE(post.empty());
  CHECK(rd.size() + post.size() == m.ps.all().size());
  for (const Var& p : rd) CHECK(p->name.rfind("post.", 0) != 0);
  for (const Var& p : post) CHECK(p->name.rfind("post.", 0) == 0);
}

TEST_CASE("one joint update moves codec weights and spares the coder head",
          "[training][step]") {
  CodecModel m = make_codec_model(tiny_model_config(), 11);
  TrainConfig cfg = tiny_train_config();
  Rng rng(5);
  Tensor batch({1, 3, 8, 8});
  for (auto& v : batch.data) v = rng.uniform();

  std::vector<Tensor> post_before;
  for (const Var& p : post_params(m)) post_before.push_back(p->value);
  const Tensor sigma_before = m.sigma->value;

  Adam opt(rd_params(m));
  const StepStats warm = rd_step(m, batch, cfg, opt, 1e-3, false);
  CHECK(warm.applied);
  CHECK(warm.rate_bits == 0.0);
  CHECK(warm.ld > 0.0);
  CHECK(std::isfinite(warm.total));
  CHECK(warm.total == Catch::Approx(warm.ld + warm.lq).margin(1e-12));

  // The ladder moved; the categorical coder did not.
  bool sigma_moved = false;
  for (int64_t j = 0; j < sigma_before.numel(); ++j)
    if (m.sigma->value[j] != sigma_before[j]) sigma_moved = true;
  CHECK(sigma_moved);
  const std::vector<Var> post_after = post_params(m);
  for (size_t i = 0; i < post_after.size(); ++i)
    for (int64_t j = 0; j < post_before[i].numel(); ++j)
      CHECK(post_after[i]->value[j] == post_before[i][j]);

  const StepStats full = rd_step(m, batch, cfg, opt, 1e-3, true);
  CHECK(full.applied);
  CHECK(full.rate_bits > 0.0);
  CHECK(full.total ==
        Catch::Approx(full.ld + cfg.lambda * full.rate_bits + full.lq).margin(1e-9));
}

TEST_CASE("csv rows carry step, losses and rate in fixed order", "[training][csv]") {
  std::ostringstream os;
  write_csv_row(os, 3, 0.5, 1.25, 1e-3);
  CHECK(os.str() == "3,0.5,1.25,0.001\n");
  std::ostringstream os2;
  write_csv_row(os2, 12000, 0.0001220703125, 0.0, 1e-05);
  CHECK(os2.str() == "12000,0.0001220703125,0,1e-05\n");
}

TEST_CASE("patch sampling draws in-range windows from the dataset", "[training][data]") {
  Rng fill(3);
  Tensor im({3, 10, 12});
  for (auto& v : im.data) v = fill.uniform();
  const std::vector<Tensor> images = {im};

  Rng rng(19);
  const Tensor batch = sample_patch_batch(images, 10, 3, rng);
  REQUIRE(batch.shape == std::vector<int>{3, 3, 10, 10});
  // Height leaves no slack, so each patch is a column shift of the source.
  for (int b = 0; b < 3; ++b) {
    int x0 = -1;
    for (int cand = 0; cand <= 2; ++cand)
      if (batch.at4(b, 0, 0, 0) == im.at3(0, 0, cand)) x0 = cand;
    REQUIRE(x0 >= 0);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x)
          REQUIRE(batch.at4(b, c, y, x) == im.at3(c, y, x0 + x));
  }

  Rng r1(77), r2(77);
  const Tensor b1 = sample_patch_batch(images, 4, 2, r1);
  const Tensor b2 = sample_patch_batch(images, 4, 2, r2);
  CHECK(b1.data == b2.data);

  const std::vector<Tensor> none;
  Rng r3(1);
  CHECK_THROWS_AS(sample_patch_batch(none, 4, 1, r3), usage_error);
}

TEST_CASE("small images are edge-padded up to the patch size", "[training][data]") {
  Image im(5, 6);
  Rng rng(4);
  for (auto& v : im.data) v = rng.uniform();
  const std::vector<Tensor> ts = training_tensors({im}, 8);
  REQUIRE(ts.size() == 1);
  REQUIRE(ts[0].shape == std::vector<int>{3, 8, 8});
  CHECK(ts[0].at3(1, 2, 3) == im.at(1, 2, 3));
  CHECK(ts[0].at3(0, 7, 7) == im.at(0, 4, 5));  // replicated corner
  CHECK(ts[0].at3(2, 7, 2) == im.at(2, 4, 2));  // replicated bottom edge
}

TEST_CASE("directory listing keeps images, sorts them and skips junk", "[training][data]") {
  TempDir td;
  Image a(4, 4), b(4, 4);
  for (double& v : a.data) v = 0.25;
  for (double& v : b.data) v = 0.75;
  write_image(td.str("b.png"), b);
  write_image(td.str("a.ppm"), a);
  write_text(td.str("notes.txt"), "not an image");
  write_text(td.str("broken.png"), "junk bytes");

  const std::vector<std::string> files = list_image_files(td.path().string());
  REQUIRE(files.size() == 3);  // broken.png still has an image extension
  CHECK(files[0].find("a.ppm") != std::string::npos);
  CHECK(files[1].find("b.png") != std::string::npos);
  CHECK(files[2].find("broken.png") != std::string::npos);

  const std::vector<Image> loaded = load_image_dir(td.path().string());
  REQUIRE(loaded.size() == 2);  // the broken file is skipped, not fatal
  CHECK(loaded[0].at(0, 1, 1) == Catch::Approx(0.25).margin(1e-2));
  CHECK(loaded[1].at(0, 1, 1) == Catch::Approx(0.75).margin(1e-2));

  CHECK_THROWS_AS(list_image_files(td.str("missing_dir")), io_error);
}

TEST_CASE("the stage one driver reports steps and writes the loss log",
          "[training][driver]") {
  CodecModel m = make_codec_model(tiny_model_config(), 23);
  const TrainConfig cfg = tiny_train_config();
  Rng rng(6);
  std::vector<Tensor> images;
  for (int i = 0; i < 2; ++i) {
    Tensor t({3, 8, 8});
    for (auto& v : t.data) v = rng.uniform();
    images.push_back(std::move(t));
  }
  std::ostringstream csv;
  const TrainResult res = train_codec(m, images, cfg, 99, &csv);
  CHECK(res.steps == 6);
  CHECK(std::isfinite(res.final_ld));
  CHECK(std::isfinite(res.final_rate_bits));

  std::istringstream is(csv.str());
  std::string line;
  REQUIRE(std::getline(is, line));
  CHECK(line == "step,L_D,L_R,lr");
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    std::istringstream ls(line);
    std::string step_s, ld_s, lr_field, lr_s;
    REQUIRE(std::getline(ls, step_s, ','));
    REQUIRE(std::getline(ls, ld_s, ','));
    REQUIRE(std::getline(ls, lr_field, ','));
    REQUIRE(std::getline(ls, lr_s, ','));
    CHECK(std::stoll(step_s) == rows);
    if (rows <= 2) CHECK(lr_field == "0");  // rate term off during warmup
  }
  CHECK(rows == 6);
  CHECK_THROWS_AS(train_codec(m, {}, cfg, 1, nullptr), usage_error);
}

TEST_CASE("code datasets survive a save and load cycle", "[training][dataset]") {
  TempDir td;
  Rng rng(31);
  std::vector<CodeBlock> blocks;
  blocks.push_back(CodeBlock(2, 3, 4));
  blocks.push_back(CodeBlock(1, 5, 2));
  blocks.push_back(CodeBlock(2, 3, 4));
  for (CodeBlock& b : blocks)
    for (uint8_t& v : b.idx) v = static_cast<uint8_t>(rng.randint(7));
  const std::string path = td.str("codes.nlcd");
  save_code_dataset(path, blocks, 7);

  int L = 0;
  const std::vector<CodeBlock> back = load_code_dataset(path, &L);
  CHECK(L == 7);
  REQUIRE(back.size() == blocks.size());
  for (size_t i = 0; i < blocks.size(); ++i) {
    CHECK(back[i].M == blocks[i].M);
    CHECK(back[i].H == blocks[i].H);
    CHECK(back[i].W == blocks[i].W);
    CHECK(back[i].idx == blocks[i].idx);
  }
}

TEST_CASE("code dataset files refuse damage and bad writes", "[training][dataset]") {
  TempDir td;
  Rng rng(8);
  std::vector<CodeBlock> blocks = {CodeBlock(2, 2, 3)};
  for (uint8_t& v : blocks[0].idx) v = static_cast<uint8_t>(rng.randint(4));
  const std::string path = td.str("codes.nlcd");
  save_code_dataset(path, blocks, 4);
  const std::vector<uint8_t> good = read_file(path);

  // Writer-side refusals.
  CHECK_THROWS_AS(save_code_dataset(td.str("bad1"), blocks, 1), usage_error);
  CHECK_THROWS_AS(save_code_dataset(td.str("bad2"), blocks, 300), usage_error);
  std::vector<CodeBlock> oob = blocks;
  oob[0].idx[2] = 200;
  CHECK_THROWS_AS(save_code_dataset(td.str("bad3"), oob, 4), usage_error);

  // Reader-side refusals, one corruption at a time.
  auto corrupt = [&](auto&& mutate) {
    std::vector<uint8_t> bytes = good;
    mutate(bytes);
    const std::string p = td.str("corrupt.nlcd");
    write_file_atomic(p, bytes);
    CHECK_THROWS_AS(load_code_dataset(p, nullptr), format_error);
  };
  corrupt([](std::vector<uint8_t>& b) { b[0] = 'X'; });                   // magic
  corrupt([](std::vector<uint8_t>& b) { b[4] = 2; });                     // version
  corrupt([](std::vector<uint8_t>& b) { b[5] = 1; });                     // L too small
  corrupt([](std::vector<uint8_t>& b) { b.resize(b.size() - 2); });       // truncated
  corrupt([](std::vector<uint8_t>& b) { b.push_back(0); });               // trailing
  corrupt([](std::vector<uint8_t>& b) { b[10] = 0; b[11] = 0; });         // zero dim
  corrupt([](std::vector<uint8_t>& b) { b.back() = 9; });                 // index >= L
  CHECK_THROWS_AS(load_code_dataset(td.str("absent.nlcd"), nullptr), io_error);
}

TEST_CASE("code blocks stack into a batch of center values", "[training][dataset]") {
  Tensor centers({2, 3});
  centers[0] = 0.1;
  centers[1] = 0.5;
  centers[2] = 0.9;
  centers[3] = 0.2;
  centers[4] = 0.4;
  centers[5] = 0.8;
  CodeBlock a(2, 1, 2), b(2, 1, 2);
  a.at(0, 0, 0) = 0;
  a.at(0, 0, 1) = 2;
  a.at(1, 0, 0) = 1;
  a.at(1, 0, 1) = 1;
  b.at(0, 0, 0) = 1;
  b.at(0, 0, 1) = 1;
  b.at(1, 0, 0) = 0;
  b.at(1, 0, 1) = 2;
  const Tensor vals = values_batch({&a, &b}, centers);
  REQUIRE(vals.shape == std::vector<int>{2, 2, 1, 2});
  CHECK(vals.at4(0, 0, 0, 0) == 0.1);
  CHECK(vals.at4(0, 0, 0, 1) == 0.9);
  CHECK(vals.at4(0, 1, 0, 0) == 0.4);
  CHECK(vals.at4(0, 1, 0, 1) == 0.4);
  CHECK(vals.at4(1, 0, 0, 0) == 0.5);
  CHECK(vals.at4(1, 1, 0, 1) == 0.8);

  CodeBlock odd(2, 2, 2);
  CHECK_THROWS_AS(values_batch({&a, &odd}, centers), dim_error);
}

TEST_CASE("held-out bits match a direct loss evaluation", "[training][dataset]") {
  const CodecModel m = make_codec_model(tiny_model_config(), 41);
  Rng rng(9);
  std::vector<CodeBlock> blocks = testutil::make_uniform_codes(3, 2, 4, 4, 4, rng);
  std::vector<const CodeBlock*> ptrs = testutil::block_ptrs(blocks);

  const double bits = post_eval_bits(m, ptrs);
  NoGradGuard g;
  const Tensor centers = centers_from_sigma(m.sigma->value);
  const Tensor vals = values_batch(ptrs, centers);
  const Var direct = post_loss_bits_per_code(m.post, constant(vals), blocks);
  CHECK(bits == Catch::Approx(direct->value.data[0]).epsilon(1e-12));

  // Mixed dims fall into per-shape groups weighted by code count.
  std::vector<CodeBlock> mixed = blocks;
  mixed.push_back(testutil::make_uniform_codes(1, 2, 2, 6, 4, rng)[0]);
  const std::vector<const CodeBlock*> mp = testutil::block_ptrs(mixed);
  const double all_bits = post_eval_bits(m, mp);
  const double big = post_eval_bits(m, {mp[0], mp[1], mp[2]});
  const double small = post_eval_bits(m, {mp[3]});
  const double n_big = 3.0 * 2 * 4 * 4, n_small = 1.0 * 2 * 2 * 6;
  CHECK(all_bits ==
        Catch::Approx((big * n_big + small * n_small) / (n_big + n_small)).epsilon(1e-12));
}

TEST_CASE("code extraction caps crops at the requested side", "[training][dataset]") {
  const CodecModel m = make_codec_model(tiny_model_config(), 13);
  std::vector<Image> images;
  for (int i = 0; i < 3; ++i) images.push_back(testutil::make_sinusoid_image(40, 48, 100 + i));

  Rng r1(2);
  const std::vector<CodeBlock> caps = extract_codes(m, images, 4, r1);
  REQUIRE(caps.size() == 3);
  for (const CodeBlock& b : caps) {
    CHECK(b.M == 2);
    CHECK(b.H == 4);
    CHECK(b.W == 4);
    for (uint8_t v : b.idx) CHECK(v < 4);
  }

  Rng r2(2);
  const std::vector<CodeBlock> full = extract_codes(m, images, 60, r2);
  for (const CodeBlock& b : full) {
    CHECK(b.H == 5);  // 40/8
    CHECK(b.W == 6);  // 48/8
  }
  // An uncropped block equals the direct encoding.
  const CodeBlock direct = image_to_codes(m, images[0]);
  CHECK(full[0].idx == direct.idx);
}

TEST_CASE("the stage two driver trains on codes and reports held-out bits",
          "[training][driver]") {
  CodecModel m = make_codec_model(tiny_model_config(), 55);
  TrainConfig cfg = tiny_train_config();
  Rng rng(12);
  std::vector<CodeBlock> dataset = testutil::make_uniform_codes(6, 2, 6, 6, 4, rng);

  std::vector<Tensor> rd_before;
  for (const Var& p : rd_params(m)) rd_before.push_back(p->value);

  std::ostringstream csv;
  const double bits = train_post_model(m, dataset, cfg, 3, &csv);
  CHECK(std::isfinite(bits));
  CHECK(bits > 0.0);
  CHECK(bits < 8.0 * 2.0);  // log2(L) = 2 plus generous slack
  std::istringstream is(csv.str());
  std::string line;
  REQUIRE(std::getline(is, line));
  CHECK(line == "step,L_D,L_R,lr");

  // Only the categorical coder moved.
  const std::vector<Var> rd_after = rd_params(m);
  for (size_t i = 0; i < rd_after.size(); ++i)
    CHECK(rd_after[i]->value.data == rd_before[i].data);

  CHECK_THROWS_AS(train_post_model(m, {}, cfg, 1, nullptr), usage_error);
  std::vector<CodeBlock> wrong_m = testutil::make_uniform_codes(2, 3, 4, 4, 4, rng);
  CHECK_THROWS_AS(train_post_model(m, wrong_m, cfg, 1, nullptr), model_mismatch_error);
  std::vector<CodeBlock> wrong_l = testutil::make_uniform_codes(2, 2, 4, 4, 4, rng);
  wrong_l[0].idx[0] = 9;
  CHECK_THROWS_AS(train_post_model(m, wrong_l, cfg, 1, nullptr), model_mismatch_error);
}

}  // namespace
}  // namespace nlc
