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

#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "nlcodec/tensor.hpp"

namespace nlc {

// Reverse-mode graph node. Ops allocate a node per result; backward_fn reads
// this node's grad and accumulates into the parents' grads. Graphs are DAGs
// built dynamically per evaluation and freed when the last Var goes away.
class Node {
 public:
  Tensor value;
  Tensor grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  bool is_leaf = false;
  std::string name;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;

  void ensure_grad() {
    if (grad.data.empty()) grad = Tensor(value.shape);
  }
};

using Var = std::shared_ptr<Node>;

// When disabled, ops compute values only: no parents, no backward closures.
// The coding paths run entirely with gradients off.
inline bool& grad_enabled() {
  thread_local bool on = true;
  return on;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_enabled()) { grad_enabled() = false; }
  ~NoGradGuard() { grad_enabled() = prev; }
};

inline Var constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return n;
}

inline Var param(std::string name, Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  n->is_leaf = true;
  n->name = std::move(name);
  return n;
}

// Wires value/parents; the caller attaches backward_fn iff requires_grad.
inline Var make_op(Tensor value, std::vector<Var> parents) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (grad_enabled()) {
    for (const auto& p : parents)
      if (p->requires_grad) {
        n->requires_grad = true;
        break;
      }
    if (n->requires_grad) n->parents = std::move(parents);
  }
  return n;
}

// Gradients flow to every reachable leaf; leaves not on a path to the loss
// keep whatever their grad buffer held (zero after zero_grad).
inline void backward(const Var& loss) {
  if (loss->value.numel() != 1)
    throw usage_error("backward: loss must be scalar, got " + shape_str(loss->value.shape));
  if (!loss->requires_grad) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  visited.insert(loss.get());
  stack.emplace_back(loss.get(), 0);
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  loss->ensure_grad();
  loss->grad.data[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn();
    }
  }
}

// ---- elementwise ----

inline Var add(const Var& a, const Var& b) {
  check_same_shape("add", a->value, b->value);
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
  Var n = make_op(std::move(out), {a, b});
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), a, b] {
      for (const Var& p : {a, b})
        if (p->requires_grad) {
          p->ensure_grad();
          for (int64_t i = 0; i < self->grad.numel(); ++i) p->grad[i] += self->grad[i];
        }
    };
  return n;
}

inline Var sub(const Var& a, const Var& b) {
  check_same_shape("sub", a->value, b->value);
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
  Var n = make_op(std::move(out), {a, b});
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), a, b] {
      if (a->requires_grad) {
        a->ensure_grad();
        for (int64_t i = 0; i < self->grad.numel(); ++i) a->grad[i] += self->grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (int64_t i = 0; i < self->grad.numel(); ++i) b->grad[i] -= self->grad[i];
      }
    };
  return n;
}

inline Var mul(const Var& a, const Var& b) {
  check_same_shape("mul", a->value, b->value);
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
  Var n = make_op(std::move(out), {a, b});
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), a, b] {
      if (a->requires_grad) {
        a->ensure_grad();
        for (int64_t i = 0; i < self->grad.numel(); ++i) a->grad[i] += self->grad[i] * b->value[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (int64_t i = 0; i < self->grad.numel(); ++i) b->grad[i] += self->grad[i] * a->value[i];
      }
    };
  return n;
}

inline Var div(const Var& a, const Var& b) {
  check_same_shape("div", a->value, b->value);
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] /= b->value[i];
  Var n = make_op(std::move(out), {a, b});
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), a, b] {
      if (a->requires_grad) {
        a->ensure_grad();
        for (int64_t i = 0; i < self->grad.numel(); ++i) a->grad[i] += self->grad[i] / b->value[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (int64_t i = 0; i < self->grad.numel(); ++i) {
          double bv = b->value[i];
          b->grad[i] -= self->grad[i] * a->value[i] / (bv * bv);
        }
      }
    };
  return n;
}

// value = k*x + c
inline Var affine(const Var& x, double k, double c) {
  Tensor out = x->value;
  for (double& v : out.data) v = k * v + c;
  Var n = make_op(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), x, k] {
      x->ensure_grad();
      for (int64_t i = 0; i < self->grad.numel(); ++i) x->grad[i] += k * self->grad[i];
    };
  return n;
}

inline Var mul_scalar(const Var& x, double k) { return affine(x, k, 0.0); }
inline Var neg(const Var& x) { return affine(x, -1.0, 0.0); }

inline Var exp_v(const Var& x) {
  Tensor out = x->value;
  for (double& v : out.data) v = std::exp(v);
  Var n = make_op(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), x] {
      x->ensure_grad();
      for (int64_t i = 0; i < self->grad.numel(); ++i)
        x->grad[i] += self->grad[i] * self->value[i];
    };
  return n;
}

// Caller guarantees positive inputs (rate paths clamp first).
inline Var log_v(const Var& x) {
  Tensor out = x->value;
  for (double& v : out.data) v = std::log(v);
  Var n = make_op(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), x] {
      x->ensure_grad();
      for (int64_t i = 0; i < self->grad.numel(); ++i) x->grad[i] += self->grad[i] / x->value[i];
    };
  return n;
}

inline Var relu(const Var& x) {
  Tensor out = x->value;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  Var n = make_op(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), x] {
      x->ensure_grad();
      for (int64_t i = 0; i < self->grad.numel(); ++i)
        if (x->value[i] > 0.0) x->grad[i] += self->grad[i];
    };
  return n;
}

inline Var sigmoid_v(const Var& x) {
  Tensor out = x->value;
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  Var n = make_op(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), x] {
      x->ensure_grad();
      for (int64_t i = 0; i < self->grad.numel(); ++i) {
        double s = self->value[i];
        x->grad[i] += self->grad[i] * s * (1.0 - s);
      }
    };
  return n;
}

// Clamp with pass-through gradient inside [lo, hi], zero outside.
inline Var clamp_v(const Var& x, double lo, double hi) {
  Tensor out = x->value;
  for (double& v : out.data) v = std::min(hi, std::max(lo, v));
  Var n = make_op(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), x, lo, hi] {
      x->ensure_grad();
      for (int64_t i = 0; i < self->grad.numel(); ++i) {
        double v = x->value[i];
        if (v >= lo && v <= hi) x->grad[i] += self->grad[i];
      }
    };
  return n;
}

// value = max(x, floor)^p. Gradient is zero where the floor is active.
inline Var pow_const(const Var& x, double p, double floor = 1e-12) {
  Tensor out = x->value;
  for (double& v : out.data) v = std::pow(std::max(v, floor), p);
  Var n = make_op(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), x, p, floor] {
      x->ensure_grad();
      for (int64_t i = 0; i < self->grad.numel(); ++i) {
        double v = x->value[i];
        if (v > floor) x->grad[i] += self->grad[i] * p * std::pow(v, p - 1.0);
      }
    };
  return n;
}

// Learnable leaky slope per index of `axis`; slope applies to x <= 0.
inline Var prelu(const Var& x, const Var& slope, int axis) {
  check_rank("prelu slope", slope->value, 1);
  if (axis < 0 || axis >= x->value.rank() || x->value.shape[axis] != slope->value.shape[0])
    throw dim_error("prelu: slope size " + shape_str(slope->value.shape) + " does not match axis " +
                    std::to_string(axis) + " of " + shape_str(x->value.shape));
  int64_t inner = 1, outer = 1;
  for (int i = axis + 1; i < x->value.rank(); ++i) inner *= x->value.shape[i];
  for (int i = 0; i < axis; ++i) outer *= x->value.shape[i];
  int k = x->value.shape[axis];
  Tensor out = x->value;
  for (int64_t o = 0; o < outer; ++o)
    for (int c = 0; c < k; ++c) {
      double a = slope->value[c];
      double* row = &out.data[static_cast<size_t>((o * k + c) * inner)];
      for (int64_t i = 0; i < inner; ++i)
        if (row[i] <= 0.0) row[i] *= a;
    }
  Var n = make_op(std::move(out), {x, slope});
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), x, slope, outer, inner, k] {
      if (x->requires_grad) x->ensure_grad();
      if (slope->requires_grad) slope->ensure_grad();
      for (int64_t o = 0; o < outer; ++o)
        for (int c = 0; c < k; ++c) {
          double a = slope->value[c];
          int64_t base = (o * k + c) * inner;
          for (int64_t i = 0; i < inner; ++i) {
            double xv = x->value[base + i];
            double g = self->grad[base + i];
            if (x->requires_grad) x->grad[base + i] += xv > 0.0 ? g : a * g;
            if (slope->requires_grad && xv <= 0.0) slope->grad[c] += g * xv;
          }
        }
    };
  return n;
}

// Softmax along one axis; numerically shifted by the lane max.
inline Var softmax_axis(const Var& x, int axis) {
  if (axis < 0 || axis >= x->value.rank())
    throw dim_error("softmax: axis " + std::to_string(axis) + " out of range for " +
                    shape_str(x->value.shape));
  int64_t inner = 1, outer = 1;
  for (int i = axis + 1; i < x->value.rank(); ++i) inner *= x->value.shape[i];
  for (int i = 0; i < axis; ++i) outer *= x->value.shape[i];
  int k = x->value.shape[axis];
  Tensor out = x->value;
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      int64_t base = o * k * inner + i;
      double m = out.data[static_cast<size_t>(base)];
      for (int c = 1; c < k; ++c) m = std::max(m, out.data[static_cast<size_t>(base + c * inner)]);
      double z = 0.0;
      for (int c = 0; c < k; ++c) {
        double e = std::exp(out.data[static_cast<size_t>(base + c * inner)] - m);
        out.data[static_cast<size_t>(base + c * inner)] = e;
        z += e;
      }
      for (int c = 0; c < k; ++c) out.data[static_cast<size_t>(base + c * inner)] /= z;
    }
  Var n = make_op(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), x, outer, inner, k] {
      x->ensure_grad();
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < inner; ++i) {
          int64_t base = o * k * inner + i;
          double dot = 0.0;
          for (int c = 0; c < k; ++c)
            dot += self->grad[base + c * inner] * self->value[base + c * inner];
          for (int c = 0; c < k; ++c) {
            int64_t j = base + c * inner;
            x->grad[j] += self->value[j] * (self->grad[j] - dot);
          }
        }
    };
  return n;
}

// ---- reductions ----

inline Var sum_all(const Var& x) {
  double s = 0.0;
  for (double v : x->value.data) s += v;
  Var n = make_op(Tensor::scalar(s), {x});
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), x] {
      x->ensure_grad();
      double g = self->grad[0];
      for (int64_t i = 0; i < x->grad.numel(); ++i) x->grad[i] += g;
    };
  return n;
}

inline Var mean_all(const Var& x) {
  return mul_scalar(sum_all(x), 1.0 / static_cast<double>(x->value.numel()));
}

// ---- layout ----

inline Var concat0(const std::vector<Var>& parts) {
  if (parts.empty()) throw usage_error("concat0: no inputs");
  std::vector<int> shape = parts[0]->value.shape;
  int64_t stride = parts[0]->value.numel() / shape[0];
  int total = 0;
  for (const Var& p : parts) {
    if (p->value.rank() != static_cast<int>(shape.size()) ||
        !std::equal(shape.begin() + 1, shape.end(), p->value.shape.begin() + 1))
      throw dim_error("concat0: trailing dims differ: " + shape_str(shape) + " vs " +
                      shape_str(p->value.shape));
    total += p->value.shape[0];
  }
  shape[0] = total;
  Tensor out(shape);
  int64_t off = 0;
  for (const Var& p : parts) {
    std::copy(p->value.data.begin(), p->value.data.end(), out.data.begin() + off);
    off += p->value.numel();
  }
  Var n = make_op(std::move(out), std::vector<Var>(parts));
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), parts, stride] {
      (void)stride;
      int64_t pos = 0;
      for (const Var& p : parts) {
        int64_t m = p->value.numel();
        if (p->requires_grad) {
          p->ensure_grad();
          for (int64_t i = 0; i < m; ++i) p->grad[i] += self->grad[pos + i];
        }
        pos += m;
      }
    };
  return n;
}

inline Var slice0(const Var& x, int start, int len) {
  if (start < 0 || len <= 0 || start + len > x->value.shape.at(0))
    throw dim_error("slice0: [" + std::to_string(start) + "," + std::to_string(start + len) +
                    ") out of range for " + shape_str(x->value.shape));
  std::vector<int> shape = x->value.shape;
  int64_t stride = x->value.numel() / shape[0];
  shape[0] = len;
  Tensor out(shape);
  std::copy(x->value.data.begin() + start * stride,
            x->value.data.begin() + (start + len) * stride, out.data.begin());
  Var n = make_op(std::move(out), {x});
  if (n->requires_grad)
    n->backward_fn = [self = n.get(), x, start, stride] {
      x->ensure_grad();
      int64_t off = start * stride;
      for (int64_t i = 0; i < self->grad.numel(); ++i) x->grad[off + i] += self->grad[i];
    };
  return n;
}

// Same flat data under a new shape; gradient passes through untouched.
inline Var reshape(const Var& x, std::vector<int> shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  if (n != x->value.numel())
    throw dim_error("reshape: " + shape_str(x->value.shape) + " to " + shape_str(shape) +
                    " changes element count");
  Tensor out(std::move(shape));
  out.data = x->value.data;
  Var nv = make_op(std::move(out), {x});
  if (nv->requires_grad)
    nv->backward_fn = [self = nv.get(), x] {
      x->ensure_grad();
      for (int64_t i = 0; i < self->grad.numel(); ++i) x->grad[i] += self->grad[i];
    };
  return nv;
}

// Ordered registry of trainable leaves. Registration order is the
// serialization order, which keeps files and optimizer state reproducible.
class ParamStore {
 public:
  Var add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw usage_error("duplicate parameter: " + name);
    Var v = param(name, std::move(init));
    index_[name] = params_.size();
    params_.push_back(v);
    return v;
  }
  const std::vector<Var>& all() const { return params_; }
  Var find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second];
  }
  void zero_grad() {
    for (const Var& p : params_) p->grad = Tensor(p->value.shape);
  }

 private:
  std::vector<Var> params_;
  std::unordered_map<std::string, size_t> index_;
};

// ---- gradient verification ----

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// Throws numeric_error if any probe evaluates non-finite.
inline double finite_diff_check(const std::function<Var(const Var&)>& f, const Tensor& point,
                                double eps) {
  Var x = param("fd.x", point);
  Var loss = f(x);
  if (loss->value.numel() != 1) throw usage_error("finite_diff_check: f must produce a scalar");
  backward(loss);
  x->ensure_grad();
  Tensor analytic = x->grad;
  double worst = 0.0;
  NoGradGuard ng;
  for (int64_t i = 0; i < point.numel(); ++i) {
    Tensor p = point;
    p[i] += eps;
    double fp = f(constant(p))->value[0];
    p[i] -= 2.0 * eps;
    double fm = f(constant(p))->value[0];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw numeric_error("finite_diff_check: non-finite probe at coordinate " + std::to_string(i));
    double fd = (fp - fm) / (2.0 * eps);
    double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

// Same check against one parameter inside a larger model. `build` must
// re-evaluate the loss from current parameter values on every call.
inline double finite_diff_check_param(const std::function<Var()>& build, const Var& p, double eps,
                                      int max_coords, Rng& rng) {
  p->grad = Tensor(p->value.shape);
  Var loss = build();
  if (loss->value.numel() != 1)
    throw usage_error("finite_diff_check_param: loss must be a scalar");
  backward(loss);
  Tensor analytic = p->grad;
  std::vector<int64_t> coords;
  int64_t n = p->value.numel();
  if (max_coords <= 0 || max_coords >= n)
    for (int64_t i = 0; i < n; ++i) coords.push_back(i);
  else
    for (int c = 0; c < max_coords; ++c) coords.push_back(static_cast<int64_t>(rng.randint(n)));
  double worst = 0.0;
  NoGradGuard ng;
  for (int64_t i : coords) {
    double keep = p->value[i];
    p->value[i] = keep + eps;
    double fp = build()->value[0];
    p->value[i] = keep - eps;
    double fm = build()->value[0];
    p->value[i] = keep;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw numeric_error("finite_diff_check_param: non-finite probe at coordinate " +
                          std::to_string(i));
    double fd = (fp - fm) / (2.0 * eps);
    double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace nlc
