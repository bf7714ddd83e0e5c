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

#include <filesystem>
#include <iostream>
#include <map>

#include "nlcodec/model.hpp"

namespace nlc {

// ---- configuration ----

struct TrainConfig {
  CodecConfig model;
  double lambda = 0.1;
  std::string distortion = "msssim";  // "mse" or "msssim"
  double lr = 1e-5;
  int patience = 5;    // epochs without a new best before a rate drop
  int patch = 256;     // square patch side
  int batch = 4;
  int warmup_steps = 2000;  // distortion + ladder only before the rate term
  int steps_per_epoch = 100;
  int max_steps = 20000;
  int csv_every = 1;
  // second stage: categorical model on extracted code blocks
  double post_lr = 1e-3;
  int post_batch = 8;
  int post_steps_per_epoch = 100;
  int post_max_steps = 4000;
  int crop = 60;          // code crop side cap
  double holdout = 0.125;  // held-out fraction of the code dataset

  void validate() const {
    model.validate();
    if (!(lambda > 0.0)) throw usage_error("config: lambda must be positive");
    if (distortion != "mse" && distortion != "msssim")
      throw usage_error("config: distortion must be mse or msssim");
    if (!(lr > 0.0) || !(post_lr > 0.0)) throw usage_error("config: lr must be positive");
    if (patience < 1) throw usage_error("config: patience must be at least 1");
    const int mul = required_multiple(transform_config(model));
    if (patch < mul || patch % mul != 0)
      throw usage_error("config: patch must be a positive multiple of " + std::to_string(mul));
    if (batch < 1 || post_batch < 1) throw usage_error("config: batch must be positive");
    if (warmup_steps < 0 || max_steps < 0 || post_max_steps < 0)
      throw usage_error("config: step counts must be nonnegative");
    if (steps_per_epoch < 1 || post_steps_per_epoch < 1 || csv_every < 1)
      throw usage_error("config: epoch and csv intervals must be positive");
    if (crop < 1) throw usage_error("config: crop must be positive");
    if (!(holdout >= 0.0) || holdout >= 1.0)
      throw usage_error("config: holdout must be in [0,1)");
  }
};

inline int64_t parse_int_value(const std::string& key, const std::string& s) {
  size_t used = 0;
  int64_t v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    throw usage_error("config: bad integer for " + key + ": " + s);
  }
  if (used != s.size()) throw usage_error("config: bad integer for " + key + ": " + s);
  return v;
}

inline double parse_double_value(const std::string& key, const std::string& s) {
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw usage_error("config: bad number for " + key + ": " + s);
  }
  if (used != s.size()) throw usage_error("config: bad number for " + key + ": " + s);
  return v;
}

inline bool parse_bool_value(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw usage_error("config: bad boolean for " + key + ": " + s);
}

inline void apply_config_key(TrainConfig& c, const std::string& key, const std::string& val) {
  auto iv = [&] { return static_cast<int>(parse_int_value(key, val)); };
  if (key == "width") c.model.width = iv();
  else if (key == "m") c.model.M = iv();
  else if (key == "l") c.model.L = iv();
  else if (key == "c") c.model.C = iv();
  else if (key == "nt") c.model.nt = iv();
  else if (key == "nres") c.model.nres = iv();
  else if (key == "ks") c.model.ks = iv();
  else if (key == "window") c.model.window = iv();
  else if (key == "a0") c.model.a0 = iv();
  else if (key == "a1") c.model.a1 = iv();
  else if (key == "a2") c.model.a2 = iv();
  else if (key == "nonlocal") c.model.nonlocal = parse_bool_value(key, val);
  else if (key == "lambda") c.lambda = parse_double_value(key, val);
  else if (key == "distortion") c.distortion = val;
  else if (key == "lr") c.lr = parse_double_value(key, val);
  else if (key == "patience") c.patience = iv();
  else if (key == "patch") c.patch = iv();
  else if (key == "batch") c.batch = iv();
  else if (key == "warmup_steps") c.warmup_steps = iv();
  else if (key == "steps_per_epoch") c.steps_per_epoch = iv();
  else if (key == "max_steps") c.max_steps = iv();
  else if (key == "csv_every") c.csv_every = iv();
  else if (key == "post_lr") c.post_lr = parse_double_value(key, val);
  else if (key == "post_batch") c.post_batch = iv();
  else if (key == "post_steps_per_epoch") c.post_steps_per_epoch = iv();
  else if (key == "post_max_steps") c.post_max_steps = iv();
  else if (key == "crop") c.crop = iv();
  else if (key == "holdout") c.holdout = parse_double_value(key, val);
  else throw usage_error("config: unknown key " + key);
}

inline std::string trim_ws(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// One `key = value` per line; '#' starts a comment; unknown keys refuse.
inline TrainConfig load_train_config(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  TrainConfig cfg;
  std::string line;
  size_t lineno = 0;
  std::map<std::string, bool> seen;
  auto handle = [&] {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim_ws(line);
    if (line.empty()) return;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw usage_error("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim_ws(line.substr(0, eq));
    const std::string val = trim_ws(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw usage_error("config line " + std::to_string(lineno) + ": empty key or value");
    if (seen[key]) throw usage_error("config: duplicate key " + key);
    seen[key] = true;
    apply_config_key(cfg, key, val);
  };
  line.clear();
  for (uint8_t b : bytes) {
    if (b == '\n') {
      handle();
      line.clear();
    } else {
      line.push_back(static_cast<char>(b));
    }
  }
  if (!line.empty()) handle();
  cfg.validate();
  return cfg;
}

// ---- optimization ----

class Adam {
 public:
  explicit Adam(std::vector<Var> params, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), b1_(b1), b2_(b2), eps_(eps) {
    for (const Var& p : params_) {
      m_.emplace_back(p->value.shape);
      v_.emplace_back(p->value.shape);
    }
  }

  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Node* p = params_[i].get();
      if (p->grad.data.empty()) continue;
      Tensor& mi = m_[i];
      Tensor& vi = v_[i];
      for (int64_t j = 0; j < p->value.numel(); ++j) {
        const double g = p->grad[j];
        mi[j] = b1_ * mi[j] + (1.0 - b1_) * g;
        vi[j] = b2_ * vi[j] + (1.0 - b2_) * g * g;
        p->value[j] -= lr * (mi[j] / c1) / (std::sqrt(vi[j] / c2) + eps_);
      }
    }
  }

 private:
  std::vector<Var> params_;
  std::vector<Tensor> m_, v_;
  double b1_, b2_, eps_;
  int64_t t_ = 0;
};

// Divides the rate by 10 whenever patience epochs pass without a new best
// loss, and stops after a plateau at the third rate.
struct LrSchedule {
  double lr;
  int patience;
  int drops = 0;
  int stale = 0;
  double best = std::numeric_limits<double>::infinity();
  bool done = false;

  void observe(double epoch_loss) {
    if (done) return;
    if (epoch_loss < best) {
      best = epoch_loss;
      stale = 0;
      return;
    }
    if (++stale >= patience) {
      stale = 0;
      if (drops >= 2) done = true;
      else {
        ++drops;
        lr /= 10.0;
      }
    }
  }
};

inline std::vector<Var> rd_params(const CodecModel& m) {
  std::vector<Var> out;
  for (const Var& p : m.ps.all())
    if (p->name.rfind("post.", 0) != 0) out.push_back(p);
  return out;
}

inline std::vector<Var> post_params(const CodecModel& m) {
  std::vector<Var> out;
  for (const Var& p : m.ps.all())
    if (p->name.rfind("post.", 0) == 0) out.push_back(p);
  return out;
}

struct StepStats {
  double ld = 0.0;       // distortion
  double rate_bits = 0.0;  // bits per code (0 while the rate term is off)
  double lq = 0.0;       // ladder loss
  double total = 0.0;
  bool applied = false;  // false when a non-finite loss aborted the update
};

// One joint update of transforms, ladder and the mixture entropy model. The
// categorical coding model is untouched here; it trains on extracted codes.
inline StepStats rd_step(CodecModel& m, const Tensor& batch, const TrainConfig& cfg, Adam& opt,
                         double lr_now, bool rate_on) {
  m.ps.zero_grad();
  Var x = constant(batch);
  Var y = analysis(m.ga, x);
  const Tensor centers = centers_from_sigma(m.sigma->value);
  std::vector<CodeBlock> codes;
  Var phi = straight_through(y, centers, &codes);
  const Tensor z_snapshot = y->value;
  Var ld = cfg.distortion == "mse" ? mse_loss(synthesis(m.gs, phi), x)
                                   : msssim_loss(synthesis(m.gs, phi), x);
  Var lq = quant_loss(m.sigma, z_snapshot, codes);
  StepStats st;
  Var total;
  if (rate_on) {
    const MoGField f = mog_field(m.mog, phi);
    Var psel = mog_selected_prob(f, centers, codes);
    Var bits = mul_scalar(rate_loss_bits(psel), 1.0 / static_cast<double>(psel->value.numel()));
    st.rate_bits = bits->value.data[0];
    total = add(add(ld, mul_scalar(bits, cfg.lambda)), lq);
  } else {
    total = add(ld, lq);
  }
  st.ld = ld->value.data[0];
  st.lq = lq->value.data[0];
  st.total = total->value.data[0];
  if (!std::isfinite(st.total)) return st;
  backward(total);
  opt.step(lr_now);
  st.applied = true;
  return st;
}

// ---- data ----

inline bool has_image_extension(const std::filesystem::path& p) {
  std::string e = p.extension().string();
  for (char& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e == ".png" || e == ".ppm";
}

inline std::vector<std::string> list_image_files(const std::string& dir) {
  std::error_code ec;
  std::filesystem::directory_iterator it(dir, ec);
  if (ec) throw io_error("cannot list directory " + dir + ": " + ec.message());
  std::vector<std::string> out;
  for (const auto& entry : it)
    if (entry.is_regular_file() && has_image_extension(entry.path()))
      out.push_back(entry.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

// Unreadable files are skipped with a warning so one bad image cannot sink
// a long run.
inline std::vector<Image> load_image_dir(const std::string& dir) {
  std::vector<Image> out;
  for (const std::string& path : list_image_files(dir)) {
    try {
      out.push_back(read_image(path));
    } catch (const std::runtime_error& e) {
      std::cerr << "warning: skipping " << path << ": " << e.what() << "\n";
    }
  }
  return out;
}

// Images smaller than the patch are edge-padded up to it once at load time.
inline std::vector<Tensor> training_tensors(const std::vector<Image>& images, int patch) {
  std::vector<Tensor> out;
  out.reserve(images.size());
  for (const Image& im : images) {
    const Image fit = pad_replicate_to(im, std::max(im.h, patch), std::max(im.w, patch));
    Tensor t({3, fit.h, fit.w});
    std::copy(fit.data.begin(), fit.data.end(), t.data.begin());
    out.push_back(std::move(t));
  }
  return out;
}

inline Tensor sample_patch_batch(const std::vector<Tensor>& images, int patch, int batch,
                                 Rng& rng) {
  if (images.empty()) throw usage_error("sample_patch_batch: empty dataset");
  Tensor out({batch, 3, patch, patch});
  for (int b = 0; b < batch; ++b) {
    const Tensor& im = images[static_cast<size_t>(rng.randint(static_cast<int64_t>(images.size())))];
    const int H = im.shape[1], W = im.shape[2];
    const int y0 = static_cast<int>(rng.randint(H - patch + 1));
    const int x0 = static_cast<int>(rng.randint(W - patch + 1));
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < patch; ++y)
        for (int x = 0; x < patch; ++x)
          out.at4(b, c, y, x) = im.at3(c, y0 + y, x0 + x);
  }
  return out;
}

// ---- stage one driver ----

struct TrainResult {
  int64_t steps = 0;
  double final_ld = 0.0;
  double final_rate_bits = 0.0;
};

inline void write_csv_row(std::ostream& os, int64_t step, double ld, double rate_bits,
                          double lr) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%lld,%.10g,%.10g,%.10g\n", static_cast<long long>(step), ld,
                rate_bits, lr);
  os << buf;
}

inline TrainResult train_codec(CodecModel& m, const std::vector<Tensor>& images,
                               const TrainConfig& cfg, uint64_t seed, std::ostream* csv) {
  if (images.empty()) throw usage_error("train: no usable images");
  Rng rng(seed);
  Adam opt(rd_params(m));
  if (csv) *csv << "step,L_D,L_R,lr\n";
  TrainResult res;
  auto one = [&](double lr_now, bool rate_on) {
    const Tensor batch = sample_patch_batch(images, cfg.patch, cfg.batch, rng);
    const StepStats st = rd_step(m, batch, cfg, opt, lr_now, rate_on);
    ++res.steps;
    if (!st.applied)
      std::cerr << "step " << res.steps << ": non-finite loss (L_D " << st.ld << ", L_q " << st.lq
                << "), update skipped\n";
    if (csv && res.steps % cfg.csv_every == 0)
      write_csv_row(*csv, res.steps, st.ld, st.rate_bits, lr_now);
    res.final_ld = st.ld;
    res.final_rate_bits = st.rate_bits;
    return st;
  };
  for (int i = 0; i < cfg.warmup_steps && res.steps < cfg.max_steps; ++i) one(cfg.lr, false);
  LrSchedule sched{cfg.lr, cfg.patience};
  while (!sched.done && res.steps < cfg.max_steps) {
    double acc = 0.0;
    int n = 0;
    for (int i = 0; i < cfg.steps_per_epoch && res.steps < cfg.max_steps; ++i) {
      acc += one(sched.lr, true).total;
      ++n;
    }
    sched.observe(acc / n);
  }
  return res;
}

// ---- stage two: code datasets and the categorical model ----

inline CodeBlock crop_block(const CodeBlock& b, int p0, int q0, int h, int w) {
  if (p0 < 0 || q0 < 0 || p0 + h > b.H || q0 + w > b.W)
    throw usage_error("crop_block: window out of range");
  CodeBlock out(b.M, h, w);
  for (int r = 0; r < b.M; ++r)
    for (int p = 0; p < h; ++p)
      for (int q = 0; q < w; ++q) out.at(r, p, q) = b.at(r, p0 + p, q0 + q);
  return out;
}

inline std::vector<CodeBlock> extract_codes(const CodecModel& m, const std::vector<Image>& images,
                                            int crop, Rng& rng) {
  std::vector<CodeBlock> out;
  out.reserve(images.size());
  for (const Image& im : images) {
    const CodeBlock cb = image_to_codes(m, im);
    const int h = std::min(crop, cb.H), w = std::min(crop, cb.W);
    const int p0 = cb.H == h ? 0 : static_cast<int>(rng.randint(cb.H - h + 1));
    const int q0 = cb.W == w ? 0 : static_cast<int>(rng.randint(cb.W - w + 1));
    out.push_back(crop_block(cb, p0, q0, h, w));
  }
  return out;
}

inline constexpr char kDatasetMagic[4] = {'N', 'L', 'C', 'D'};

inline void save_code_dataset(const std::string& path, const std::vector<CodeBlock>& blocks,
                              int L) {
  if (L < 2 || L > 255) throw usage_error("code dataset: L out of range");
  std::vector<uint8_t> out(kDatasetMagic, kDatasetMagic + 4);
  out.push_back(1);  // version
  out.push_back(static_cast<uint8_t>(L));
  put_u32(out, static_cast<uint32_t>(blocks.size()));
  for (const CodeBlock& b : blocks) {
    if (b.M > 0xFFFF || b.H > 0xFFFF || b.W > 0xFFFF)
      throw usage_error("code dataset: block dims exceed the format");
    put_u16(out, static_cast<uint16_t>(b.M));
    put_u16(out, static_cast<uint16_t>(b.H));
    put_u16(out, static_cast<uint16_t>(b.W));
    for (uint8_t v : b.idx) {
      if (v >= L) throw usage_error("code dataset: index out of range");
      out.push_back(v);
    }
  }
  write_file_atomic(path, out);
}

inline std::vector<CodeBlock> load_code_dataset(const std::string& path, int* L_out) {
  const std::vector<uint8_t> bytes = read_file(path);
  ByteReader br(bytes.data(), bytes.size());
  char magic[4];
  for (char& c : magic) c = static_cast<char>(br.u8());
  if (std::memcmp(magic, kDatasetMagic, 4) != 0)
    throw format_error("code dataset: bad magic");
  if (br.u8() != 1) throw format_error("code dataset: unsupported version");
  const int L = br.u8();
  if (L < 2) throw format_error("code dataset: L out of range");
  const uint32_t count = br.u32();
  std::vector<CodeBlock> out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const int M = br.u16(), H = br.u16(), W = br.u16();
    if (M < 1 || H < 1 || W < 1) throw format_error("code dataset: bad block dims");
    CodeBlock b(M, H, W);
    for (uint8_t& v : b.idx) {
      v = br.u8();
      if (v >= L) throw format_error("code dataset: index out of range");
    }
    out.push_back(std::move(b));
  }
  if (br.pos != bytes.size()) throw format_error("code dataset: trailing bytes");
  if (L_out) *L_out = L;
  return out;
}

// Stacks equal-sized blocks into a {B,M,H,W} tensor of center values.
inline Tensor values_batch(const std::vector<const CodeBlock*>& blocks, const Tensor& centers) {
  const CodeBlock& first = *blocks.front();
  Tensor out({static_cast<int>(blocks.size()), first.M, first.H, first.W});
  const int L = centers.shape[1];
  for (size_t b = 0; b < blocks.size(); ++b) {
    const CodeBlock& cb = *blocks[b];
    if (cb.M != first.M || cb.H != first.H || cb.W != first.W)
      throw dim_error("values_batch: mixed block dims");
    for (int r = 0; r < cb.M; ++r)
      for (int p = 0; p < cb.H; ++p)
        for (int q = 0; q < cb.W; ++q)
          out.at4(static_cast<int>(b), r, p, q) =
              centers[static_cast<int64_t>(r) * L + cb.at(r, p, q)];
  }
  return out;
}

inline double post_eval_bits(const CodecModel& m, const std::vector<const CodeBlock*>& blocks) {
  NoGradGuard g;
  const Tensor centers = centers_from_sigma(m.sigma->value);
  std::map<std::pair<int, int>, std::vector<const CodeBlock*>> groups;
  for (const CodeBlock* b : blocks) groups[{b->H, b->W}].push_back(b);
  double bits = 0.0;
  int64_t n = 0;
  for (const auto& [dims, grp] : groups) {
    Tensor vals = values_batch(grp, centers);
    std::vector<CodeBlock> codes;
    codes.reserve(grp.size());
    for (const CodeBlock* b : grp) codes.push_back(*b);
    Var loss = post_loss_bits_per_code(m.post, constant(std::move(vals)), codes);
    const int64_t cnt = static_cast<int64_t>(grp.size()) * codes[0].count();
    bits += loss->value.data[0] * static_cast<double>(cnt);
    n += cnt;
  }
  return bits / static_cast<double>(n);
}

// Trains the categorical coding model on code blocks with the backbone of
// the mixture model left untouched. Reports bits per code on the held-out
// split after every epoch and drives the rate schedule with it.
inline double train_post_model(CodecModel& m, const std::vector<CodeBlock>& dataset,
                               const TrainConfig& cfg, uint64_t seed, std::ostream* csv) {
  if (dataset.empty()) throw usage_error("train-post: empty code dataset");
  for (const CodeBlock& b : dataset) {
    if (b.M != m.cfg.M) throw model_mismatch_error("train-post: dataset channels != model");
    for (uint8_t v : b.idx)
      if (v >= m.cfg.L) throw model_mismatch_error("train-post: code index >= L");
  }
  Rng rng(seed);
  const size_t n = dataset.size();
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  for (size_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.randint(static_cast<int64_t>(i + 1))]);
  size_t nhold = n >= 2 ? std::max<size_t>(1, static_cast<size_t>(std::llround(
                              cfg.holdout * static_cast<double>(n))))
                        : 0;
  if (nhold >= n) nhold = n - 1;
  std::vector<size_t> train_idx(idx.begin(), idx.end() - static_cast<ptrdiff_t>(nhold));
  std::vector<const CodeBlock*> held;
  for (size_t i = n - nhold; i < n; ++i) held.push_back(&dataset[idx[i]]);
  if (held.empty()) {
    std::cerr << "warning: single-block dataset, reporting bits on the training block\n";
    held.push_back(&dataset[train_idx[0]]);
  }
  Adam opt(post_params(m));
  LrSchedule sched{cfg.post_lr, cfg.patience};
  const Tensor centers = centers_from_sigma(m.sigma->value);
  if (csv) *csv << "step,L_D,L_R,lr\n";
  int64_t step = 0;
  double held_bits = post_eval_bits(m, held);
  while (!sched.done && step < cfg.post_max_steps) {
    for (int i = 0; i < cfg.post_steps_per_epoch && step < cfg.post_max_steps; ++i) {
      m.ps.zero_grad();
      std::map<std::pair<int, int>, std::vector<const CodeBlock*>> groups;
      for (int b = 0; b < cfg.post_batch; ++b) {
        const CodeBlock* cb = &dataset[train_idx[static_cast<size_t>(
            rng.randint(static_cast<int64_t>(train_idx.size())))]];
        groups[{cb->H, cb->W}].push_back(cb);
      }
      int64_t total_codes = 0;
      for (const auto& [dims, grp] : groups)
        total_codes += static_cast<int64_t>(grp.size()) * grp[0]->count();
      Var loss;
      for (const auto& [dims, grp] : groups) {
        std::vector<CodeBlock> codes;
        codes.reserve(grp.size());
        for (const CodeBlock* b : grp) codes.push_back(*b);
        Var part = post_loss_bits_per_code(m.post, constant(values_batch(grp, centers)), codes);
        const double wgt = static_cast<double>(static_cast<int64_t>(grp.size()) *
                                               codes[0].count()) /
                           static_cast<double>(total_codes);
        part = mul_scalar(part, wgt);
        loss = loss ? add(loss, part) : part;
      }
      ++step;
      const double bits = loss->value.data[0];
      if (!std::isfinite(bits)) {
        std::cerr << "step " << step << ": non-finite post loss, update skipped\n";
        continue;
      }
      backward(loss);
      opt.step(sched.lr);
      if (csv && step % cfg.csv_every == 0) write_csv_row(*csv, step, 0.0, bits, sched.lr);
    }
    held_bits = post_eval_bits(m, held);
    sched.observe(held_bits);
  }
  return held_bits;
}

}  // namespace nlc
