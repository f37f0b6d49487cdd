// Copyright 2026 The dsmt Authors
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
//
// Reverse-mode tape over dense matrices. One tape per forward pass; ops
// append nodes, backward() walks them in reverse. Templated on the scalar so
// the float64 instantiation that the gradient oracles check is the same code
// the float32 training path runs.

#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "dsmt/common.hpp"
#include "dsmt/losses.hpp"
#include "dsmt/mat.hpp"

namespace dsmt {

template <typename T>
class Tape {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  Var leaf(Mat<T> value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, requires_grad});
    return Var{int(nodes_.size()) - 1};
  }
  Var constant(Mat<T> value) { return leaf(std::move(value), false); }

  const Mat<T>& value(Var v) const { return nodes_[std::size_t(v.id)].value; }

  Mat<T>& grad(Var v) {
    Node& n = nodes_[std::size_t(v.id)];
    if (n.grad.rows == 0) n.grad = Mat<T>(n.value.rows, n.value.cols);
    return n.grad;
  }
  bool has_grad(Var v) const { return nodes_[std::size_t(v.id)].grad.rows != 0; }

  /// Seeds d(out)/d(out) = 1 and runs every recorded backprop in reverse.
  void backward(Var out) {
    if (value(out).rows != 1 || value(out).cols != 1)
      throw ShapeError("backward: output must be scalar");
    grad(out)(0, 0) = T(1);
    for (int i = out.id; i >= 0; --i) {
      Node& n = nodes_[std::size_t(i)];
      if (n.backprop && n.grad.rows != 0) n.backprop(*this);
    }
  }

  // ---- arithmetic ----

  Var matmul(Var a, Var b) {
    Var c = make(dsmt::matmul(value(a), value(b)), needs(a, b));
    record(c, [a, b, c](Tape& t) {
      const Mat<T>& dc = t.grad(c);
      if (t.wants(a)) t.grad(a).map() += dc.map() * t.value(b).map().transpose();
      if (t.wants(b)) t.grad(b).map() += t.value(a).map().transpose() * dc.map();
    });
    return c;
  }

  // c = a * b^T
  Var matmul_nt(Var a, Var b) {
    Var c = make(dsmt::matmul_nt(value(a), value(b)), needs(a, b));
    record(c, [a, b, c](Tape& t) {
      const Mat<T>& dc = t.grad(c);
      if (t.wants(a)) t.grad(a).map() += dc.map() * t.value(b).map();
      if (t.wants(b)) t.grad(b).map() += dc.map().transpose() * t.value(a).map();
    });
    return c;
  }

  Var add(Var a, Var b) {
    if (!value(a).same_shape(value(b))) throw ShapeError("add: shape mismatch");
    Mat<T> v = value(a);
    v.map() += value(b).map();
    Var c = make(std::move(v), needs(a, b));
    record(c, [a, b, c](Tape& t) {
      if (t.wants(a)) t.grad(a).map() += t.grad(c).map();
      if (t.wants(b)) t.grad(b).map() += t.grad(c).map();
    });
    return c;
  }

  Var add_rowvec(Var a, Var bias) {
    if (value(bias).rows != 1 || value(bias).cols != value(a).cols)
      throw ShapeError("add_rowvec: bias must be 1 x cols");
    Mat<T> v = value(a);
    v.map().rowwise() += typename Mat<T>::ConstEigenMap(value(bias).data.data(), 1,
                                                        value(bias).cols)
                             .row(0);
    Var c = make(std::move(v), needs(a, bias));
    record(c, [a, bias, c](Tape& t) {
      if (t.wants(a)) t.grad(a).map() += t.grad(c).map();
      if (t.wants(bias)) t.grad(bias).map() += t.grad(c).map().colwise().sum();
    });
    return c;
  }

  Var add_const(Var a, const Mat<T>& k) {
    if (!value(a).same_shape(k)) throw ShapeError("add_const: shape mismatch");
    Mat<T> v = value(a);
    v.map() += k.map();
    Var c = make(std::move(v), needs(a));
    record(c, [a, c](Tape& t) {
      if (t.wants(a)) t.grad(a).map() += t.grad(c).map();
    });
    return c;
  }

  Var scale(Var a, T s) {
    Mat<T> v = value(a);
    v.map() *= s;
    Var c = make(std::move(v), needs(a));
    record(c, [a, c, s](Tape& t) {
      if (t.wants(a)) t.grad(a).map() += s * t.grad(c).map();
    });
    return c;
  }

  // ---- shape ----

  Var rows_slice(Var a, int r0, int r1) {
    const Mat<T>& av = value(a);
    if (r0 < 0 || r1 > av.rows || r0 >= r1) throw ShapeError("rows_slice: bad range");
    Mat<T> v(r1 - r0, av.cols);
    v.map() = av.map().middleRows(r0, r1 - r0);
    Var c = make(std::move(v), needs(a));
    record(c, [a, c, r0, r1](Tape& t) {
      if (t.wants(a)) t.grad(a).map().middleRows(r0, r1 - r0) += t.grad(c).map();
    });
    return c;
  }

  Var rows_concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("rows_concat: empty");
    int rows = 0, cols = value(parts[0]).cols;
    for (Var p : parts) {
      if (value(p).cols != cols) throw ShapeError("rows_concat: column mismatch");
      rows += value(p).rows;
    }
    Mat<T> v(rows, cols);
    int r = 0;
    for (Var p : parts) {
      v.map().middleRows(r, value(p).rows) = value(p).map();
      r += value(p).rows;
    }
    bool rg = false;
    for (Var p : parts) rg = rg || requires_grad_of(p);
    Var c = make(std::move(v), rg);
    record(c, [parts, c](Tape& t) {
      int r0 = 0;
      for (Var p : parts) {
        int n = t.value(p).rows;
        if (t.wants(p)) t.grad(p).map() += t.grad(c).map().middleRows(r0, n);
        r0 += n;
      }
    });
    return c;
  }

  Var cols_slice(Var a, int c0, int c1) {
    const Mat<T>& av = value(a);
    if (c0 < 0 || c1 > av.cols || c0 >= c1) throw ShapeError("cols_slice: bad range");
    Mat<T> v(av.rows, c1 - c0);
    v.map() = av.map().middleCols(c0, c1 - c0);
    Var c = make(std::move(v), needs(a));
    record(c, [a, c, c0, c1](Tape& t) {
      if (t.wants(a)) t.grad(a).map().middleCols(c0, c1 - c0) += t.grad(c).map();
    });
    return c;
  }

  Var cols_concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("cols_concat: empty");
    int cols = 0, rows = value(parts[0]).rows;
    for (Var p : parts) {
      if (value(p).rows != rows) throw ShapeError("cols_concat: row mismatch");
      cols += value(p).cols;
    }
    Mat<T> v(rows, cols);
    int c0 = 0;
    for (Var p : parts) {
      v.map().middleCols(c0, value(p).cols) = value(p).map();
      c0 += value(p).cols;
    }
    bool rg = false;
    for (Var p : parts) rg = rg || requires_grad_of(p);
    Var c = make(std::move(v), rg);
    record(c, [parts, c](Tape& t) {
      int cc = 0;
      for (Var p : parts) {
        int n = t.value(p).cols;
        if (t.wants(p)) t.grad(p).map() += t.grad(c).map().middleCols(cc, n);
        cc += n;
      }
    });
    return c;
  }

  // ---- nonlinearities ----

  Var tanh_(Var a) {
    Mat<T> v = value(a);
    for (T& x : v.data) x = std::tanh(x);
    Var c = make(std::move(v), needs(a));
    record(c, [a, c](Tape& t) {
      if (!t.wants(a)) return;
      Mat<T>& da = t.grad(a);
      const Mat<T>& cv = t.value(c);
      const Mat<T>& dc = t.grad(c);
      for (std::size_t i = 0; i < da.size(); ++i)
        da.data[i] += dc.data[i] * (T(1) - cv.data[i] * cv.data[i]);
    });
    return c;
  }

  Var gelu(Var a) {
    Mat<T> v = value(a);
    for (T& x : v.data) x = x * T(0.5) * (T(1) + std::erf(x / T(std::sqrt(2.0))));
    Var c = make(std::move(v), needs(a));
    record(c, [a, c](Tape& t) {
      if (!t.wants(a)) return;
      const Mat<T>& av = t.value(a);
      Mat<T>& da = t.grad(a);
      const Mat<T>& dc = t.grad(c);
      const T inv_sqrt2 = T(1) / T(std::sqrt(2.0));
      const T inv_sqrt2pi = T(1) / T(std::sqrt(2.0 * M_PI));
      for (std::size_t i = 0; i < da.size(); ++i) {
        T x = av.data[i];
        T phi = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
        T pdf = std::exp(T(-0.5) * x * x) * inv_sqrt2pi;
        da.data[i] += dc.data[i] * (phi + x * pdf);
      }
    });
    return c;
  }

  Var layer_norm(Var x, Var gain, Var bias, T eps = T(1e-5)) {
    const Mat<T>& xv = value(x);
    if (value(gain).cols != xv.cols || value(bias).cols != xv.cols)
      throw ShapeError("layer_norm: gain/bias must match feature dim");
    Mat<T> v(xv.rows, xv.cols);
    Mat<T> xhat(xv.rows, xv.cols);
    std::vector<T> inv_sigma(std::size_t(xv.rows));
    for (int r = 0; r < xv.rows; ++r) {
      T mean = 0;
      for (int c = 0; c < xv.cols; ++c) mean += xv(r, c);
      mean /= T(xv.cols);
      T var = 0;
      for (int c = 0; c < xv.cols; ++c) {
        T d = xv(r, c) - mean;
        var += d * d;
      }
      var /= T(xv.cols);
      T is = T(1) / std::sqrt(var + eps);
      inv_sigma[std::size_t(r)] = is;
      for (int c = 0; c < xv.cols; ++c) {
        xhat(r, c) = (xv(r, c) - mean) * is;
        v(r, c) = value(gain)(0, c) * xhat(r, c) + value(bias)(0, c);
      }
    }
    Var out = make(std::move(v), needs(x, gain, bias));
    record(out, [x, gain, bias, out, xhat = std::move(xhat),
                 inv_sigma = std::move(inv_sigma)](Tape& t) {
      const Mat<T>& dy = t.grad(out);
      const int cols = dy.cols;
      for (int r = 0; r < dy.rows; ++r) {
        if (t.wants(gain))
          for (int c = 0; c < cols; ++c) t.grad(gain)(0, c) += dy(r, c) * xhat(r, c);
        if (t.wants(bias))
          for (int c = 0; c < cols; ++c) t.grad(bias)(0, c) += dy(r, c);
        if (t.wants(x)) {
          T mean_u = 0, mean_ux = 0;
          for (int c = 0; c < cols; ++c) {
            T u = t.value(gain)(0, c) * dy(r, c);
            mean_u += u;
            mean_ux += u * xhat(r, c);
          }
          mean_u /= T(cols);
          mean_ux /= T(cols);
          for (int c = 0; c < cols; ++c) {
            T u = t.value(gain)(0, c) * dy(r, c);
            t.grad(x)(r, c) += (u - mean_u - xhat(r, c) * mean_ux) * inv_sigma[std::size_t(r)];
          }
        }
      }
    });
    return out;
  }

  /// Row-wise softmax over columns [0, bounds[r]); all other entries are
  /// exactly zero. bounds[r] == 0 yields an all-zero row.
  Var softmax_bounded(Var scores, std::vector<int> bounds) {
    const Mat<T>& sv = value(scores);
    if (int(bounds.size()) != sv.rows) throw ShapeError("softmax_bounded: one bound per row");
    Mat<T> v(sv.rows, sv.cols);
    for (int r = 0; r < sv.rows; ++r) {
      int b = bounds[std::size_t(r)];
      if (b <= 0) continue;
      if (b > sv.cols) throw ShapeError("softmax_bounded: bound exceeds columns");
      T mx = sv(r, 0);
      for (int c = 1; c < b; ++c) mx = std::max(mx, sv(r, c));
      T sum = 0;
      for (int c = 0; c < b; ++c) sum += std::exp(sv(r, c) - mx);
      for (int c = 0; c < b; ++c) v(r, c) = std::exp(sv(r, c) - mx) / sum;
    }
    Var out = make(std::move(v), needs(scores));
    record(out, [scores, out, bounds = std::move(bounds)](Tape& t) {
      if (!t.wants(scores)) return;
      const Mat<T>& w = t.value(out);
      const Mat<T>& dw = t.grad(out);
      Mat<T>& ds = t.grad(scores);
      for (int r = 0; r < w.rows; ++r) {
        int b = bounds[std::size_t(r)];
        if (b <= 0) continue;
        T dot = 0;
        for (int c = 0; c < b; ++c) dot += dw(r, c) * w(r, c);
        for (int c = 0; c < b; ++c) ds(r, c) += w(r, c) * (dw(r, c) - dot);
      }
    });
    return out;
  }

  // ---- embedding and masking ----

  Var gather_rows(Var table, std::vector<int> ids) {
    const Mat<T>& tv = value(table);
    for (int id : ids)
      if (id < 0 || id >= tv.rows) throw IndexError("gather_rows: id out of range");
    Mat<T> v(int(ids.size()), tv.cols);
    for (std::size_t i = 0; i < ids.size(); ++i)
      v.map().row(int(i)) = tv.map().row(ids[i]);
    Var c = make(std::move(v), needs(table));
    record(c, [table, c, ids = std::move(ids)](Tape& t) {
      if (!t.wants(table)) return;
      for (std::size_t i = 0; i < ids.size(); ++i)
        t.grad(table).map().row(ids[i]) += t.grad(c).map().row(int(i));
    });
    return c;
  }

  /// out[r] = flags[r] ? mask_vec : x[r]
  Var replace_rows(Var x, Var mask_vec, std::vector<char> flags) {
    const Mat<T>& xv = value(x);
    if (int(flags.size()) != xv.rows) throw ShapeError("replace_rows: one flag per row");
    if (value(mask_vec).rows != 1 || value(mask_vec).cols != xv.cols)
      throw ShapeError("replace_rows: mask vector must be 1 x cols");
    Mat<T> v = xv;
    for (int r = 0; r < xv.rows; ++r)
      if (flags[std::size_t(r)]) v.map().row(r) = value(mask_vec).map().row(0);
    Var c = make(std::move(v), needs(x, mask_vec));
    record(c, [x, mask_vec, c, flags = std::move(flags)](Tape& t) {
      const Mat<T>& dc = t.grad(c);
      for (int r = 0; r < dc.rows; ++r) {
        if (flags[std::size_t(r)]) {
          if (t.wants(mask_vec)) t.grad(mask_vec).map().row(0) += dc.map().row(r);
        } else {
          if (t.wants(x)) t.grad(x).map().row(r) += dc.map().row(r);
        }
      }
    });
    return c;
  }

  Var dropout(Var a, double p, Rng& rng) {
    if (p <= 0) return a;
    if (p >= 1) throw ConfigError("dropout rate must be < 1");
    std::bernoulli_distribution keep(1.0 - p);
    const Mat<T>& av = value(a);
    std::vector<char> mask(av.size());
    for (auto& m : mask) m = keep(rng) ? 1 : 0;
    const T s = T(1.0 / (1.0 - p));
    Mat<T> v = av;
    for (std::size_t i = 0; i < v.size(); ++i) v.data[i] = mask[i] ? v.data[i] * s : T(0);
    Var c = make(std::move(v), needs(a));
    record(c, [a, c, mask = std::move(mask), s](Tape& t) {
      if (!t.wants(a)) return;
      for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) t.grad(a).data[i] += t.grad(c).data[i] * s;
    });
    return c;
  }

  // ---- structured ops ----

  /// C[i*Rb + j] = a[i] + b[j]; the transducer joint combination.
  Var pairwise_row_add(Var a, Var b) {
    const Mat<T>& av = value(a);
    const Mat<T>& bv = value(b);
    if (av.cols != bv.cols) throw ShapeError("pairwise_row_add: column mismatch");
    Mat<T> v(av.rows * bv.rows, av.cols);
    for (int i = 0; i < av.rows; ++i)
      for (int j = 0; j < bv.rows; ++j)
        v.map().row(i * bv.rows + j) = av.map().row(i) + bv.map().row(j);
    Var c = make(std::move(v), needs(a, b));
    record(c, [a, b, c](Tape& t) {
      const Mat<T>& dc = t.grad(c);
      int rb = t.value(b).rows;
      for (int i = 0; i < t.value(a).rows; ++i)
        for (int j = 0; j < rb; ++j) {
          if (t.wants(a)) t.grad(a).map().row(i) += dc.map().row(i * rb + j);
          if (t.wants(b)) t.grad(b).map().row(j) += dc.map().row(i * rb + j);
        }
    });
    return c;
  }

  /// Depthwise stride-2 convolution over time, kernel 3, zero padding of one
  /// frame on the left and anything at or past valid_len on the right.
  /// Output has ceil(valid_len/2) rows.
  Var downsample_conv(Var x, Var w, Var b, int valid_len) {
    const Mat<T>& xv = value(x);
    if (value(w).rows != 3 || value(w).cols != xv.cols)
      throw ShapeError("downsample_conv: w must be 3 x d");
    if (valid_len < 1 || valid_len > xv.rows) throw ShapeError("downsample_conv: bad valid_len");
    const int out_rows = (valid_len + 1) / 2;
    Mat<T> v(out_rows, xv.cols);
    for (int o = 0; o < out_rows; ++o)
      for (int c = 0; c < xv.cols; ++c) {
        T acc = value(b)(0, c);
        for (int k = 0; k < 3; ++k) {
          int tdx = 2 * o - 1 + k;
          if (tdx < 0 || tdx >= valid_len) continue;
          acc += value(w)(k, c) * xv(tdx, c);
        }
        v(o, c) = acc;
      }
    Var out = make(std::move(v), needs(x, w, b));
    record(out, [x, w, b, out, valid_len](Tape& t) {
      const Mat<T>& dy = t.grad(out);
      for (int o = 0; o < dy.rows; ++o)
        for (int c = 0; c < dy.cols; ++c) {
          if (t.wants(b)) t.grad(b)(0, c) += dy(o, c);
          for (int k = 0; k < 3; ++k) {
            int tdx = 2 * o - 1 + k;
            if (tdx < 0 || tdx >= valid_len) continue;
            if (t.wants(w)) t.grad(w)(k, c) += t.value(x)(tdx, c) * dy(o, c);
            if (t.wants(x)) t.grad(x)(tdx, c) += t.value(w)(k, c) * dy(o, c);
          }
        }
    });
    return out;
  }

  Var weighted_sum_scalars(const std::vector<Var>& xs, const std::vector<T>& weights) {
    if (xs.size() != weights.size() || xs.empty())
      throw ShapeError("weighted_sum_scalars: size mismatch");
    T acc = 0;
    bool rg = false;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const Mat<T>& v = value(xs[i]);
      if (v.rows != 1 || v.cols != 1) throw ShapeError("weighted_sum_scalars: non-scalar input");
      acc += weights[i] * v(0, 0);
      rg = rg || requires_grad_of(xs[i]);
    }
    Var c = make(Mat<T>(1, 1, acc), rg);
    record(c, [xs, weights, c](Tape& t) {
      T up = t.grad(c)(0, 0);
      for (std::size_t i = 0; i < xs.size(); ++i)
        if (t.wants(xs[i])) t.grad(xs[i])(0, 0) += weights[i] * up;
    });
    return c;
  }

  // ---- loss heads (manual exact gradients chained into the tape) ----

  struct LossVar {
    Var var;
    bool reachable = true;
    T loss = T(0);
  };

  LossVar ctc(Var logits, const std::vector<int>& targets) {
    LossResult<T> res = ctc_loss(value(logits), targets);
    LossVar out;
    out.reachable = res.reachable;
    out.loss = res.loss;
    out.var = make(Mat<T>(1, 1, res.reachable ? res.loss : T(0)), needs(logits));
    if (res.reachable)
      record(out.var, [logits, v = out.var, g = std::move(res.grad_logits)](Tape& t) {
        if (t.wants(logits)) t.grad(logits).map() += t.grad(v)(0, 0) * g.map();
      });
    return out;
  }

  LossVar rnnt(Var joint_logits, const std::vector<int>& targets, int frames) {
    LossResult<T> res = rnnt_loss(value(joint_logits), targets, frames);
    LossVar out;
    out.reachable = res.reachable;
    out.loss = res.loss;
    out.var = make(Mat<T>(1, 1, res.reachable ? res.loss : T(0)), needs(joint_logits));
    if (res.reachable)
      record(out.var, [joint_logits, v = out.var, g = std::move(res.grad_logits)](Tape& t) {
        if (t.wants(joint_logits)) t.grad(joint_logits).map() += t.grad(v)(0, 0) * g.map();
      });
    return out;
  }

  LossVar ce(Var logits, const std::vector<int>& targets, double label_smoothing) {
    LossResult<T> res = ce_loss(value(logits), targets, label_smoothing);
    LossVar out;
    out.loss = res.loss;
    out.var = make(Mat<T>(1, 1, res.loss), needs(logits));
    record(out.var, [logits, v = out.var, g = std::move(res.grad_logits)](Tape& t) {
      if (t.wants(logits)) t.grad(logits).map() += t.grad(v)(0, 0) * g.map();
    });
    return out;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat<T> value;
    Mat<T> grad;
    std::function<void(Tape&)> backprop;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;

  bool requires_grad_of(Var v) const { return nodes_[std::size_t(v.id)].requires_grad; }
  bool needs(Var a) const { return requires_grad_of(a); }
  bool needs(Var a, Var b) const { return requires_grad_of(a) || requires_grad_of(b); }
  bool needs(Var a, Var b, Var c) const { return requires_grad_of(a) || requires_grad_of(b) || requires_grad_of(c); }

  // A node participates in backward only if it requires grad and gradient
  // actually flowed into it.
  bool wants(Var v) {
    if (!requires_grad_of(v)) return false;
    grad(v);
    return true;
  }

  Var make(Mat<T> value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, requires_grad});
    return Var{int(nodes_.size()) - 1};
  }

  void record(Var v, std::function<void(Tape&)> fn) {
    if (nodes_[std::size_t(v.id)].requires_grad)
      nodes_[std::size_t(v.id)].backprop = std::move(fn);
  }
};

}  // namespace dsmt
