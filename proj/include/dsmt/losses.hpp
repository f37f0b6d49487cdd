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
// Sequence losses with exact gradients w.r.t. the unnormalized logits, all in
// log space. CTC follows Graves et al. (ICML 2006); the transducer loss
// follows Graves (2012). Blank lives at logit column 0 and vocabulary token v
// at column v+1 for both.

#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "dsmt/common.hpp"
#include "dsmt/mat.hpp"

namespace dsmt {

template <typename T>
struct LossResult {
  T loss = T(0);          // -log p(targets), +inf when the target is unreachable
  Mat<T> grad_logits;     // dLoss/dlogits, zero when unreachable
  bool reachable = true;
};

namespace detail {

template <typename T>
inline void log_softmax_rows(const Mat<T>& logits, Mat<T>* out) {
  *out = Mat<T>(logits.rows, logits.cols);
  for (int r = 0; r < logits.rows; ++r) {
    const T* in = logits.row_ptr(r);
    T* o = out->row_ptr(r);
    T mx = in[0];
    for (int c = 1; c < logits.cols; ++c) mx = std::max(mx, in[c]);
    T sum = T(0);
    for (int c = 0; c < logits.cols; ++c) sum += std::exp(in[c] - mx);
    T lse = mx + std::log(sum);
    for (int c = 0; c < logits.cols; ++c) o[c] = in[c] - lse;
  }
}

}  // namespace detail

/// CTC loss over per-frame logits (T' x (|V|+1)). Targets are raw vocabulary
/// ids in [0,|V|). Unreachable targets yield loss = +inf with reachable=false
/// rather than throwing.
template <typename T>
inline LossResult<T> ctc_loss(const Mat<T>& logits, const std::vector<int>& targets) {
  if (targets.empty()) throw ValidationError("ctc_loss: empty target");
  const int frames = logits.rows;
  const int vocab = logits.cols;  // |V|+1
  for (int u : targets)
    if (u < 0 || u + 1 >= vocab) throw IndexError("ctc_loss: target id out of range");

  Mat<T> lp;
  detail::log_softmax_rows(logits, &lp);

  const int U = int(targets.size());
  const int S = 2 * U + 1;
  auto label = [&](int s) { return s % 2 == 0 ? 0 : targets[std::size_t(s / 2)] + 1; };
  const T ninf = -std::numeric_limits<T>::infinity();

  Mat<T> alpha(frames, S, ninf), beta(frames, S, ninf);
  alpha(0, 0) = lp(0, 0);
  if (S > 1) alpha(0, 1) = lp(0, label(1));
  for (int t = 1; t < frames; ++t)
    for (int s = 0; s < S; ++s) {
      T a = alpha(t - 1, s);
      if (s >= 1) a = log_sum_exp(a, alpha(t - 1, s - 1));
      if (s >= 2 && label(s) != 0 && label(s) != label(s - 2))
        a = log_sum_exp(a, alpha(t - 1, s - 2));
      alpha(t, s) = a + lp(t, label(s));
    }
  T log_p = alpha(frames - 1, S - 1);
  if (S > 1) log_p = log_sum_exp(log_p, alpha(frames - 1, S - 2));

  LossResult<T> res;
  res.grad_logits = Mat<T>(frames, vocab);
  if (log_p == ninf) {
    res.loss = std::numeric_limits<T>::infinity();
    res.reachable = false;
    return res;
  }
  res.loss = -log_p;

  beta(frames - 1, S - 1) = lp(frames - 1, label(S - 1));
  if (S > 1) beta(frames - 1, S - 2) = lp(frames - 1, label(S - 2));
  for (int t = frames - 2; t >= 0; --t)
    for (int s = 0; s < S; ++s) {
      T b = beta(t + 1, s);
      if (s + 1 < S) b = log_sum_exp(b, beta(t + 1, s + 1));
      if (s + 2 < S && label(s + 2) != 0 && label(s + 2) != label(s))
        b = log_sum_exp(b, beta(t + 1, s + 2));
      beta(t, s) = b + lp(t, label(s));
    }

  // d(-log p)/dlogit(t,k) = softmax(t,k) - posterior(t,k); the alpha*beta
  // product double-counts the emission at (t,s), hence the subtraction.
  for (int t = 0; t < frames; ++t) {
    std::vector<T> post_label(std::size_t(vocab), ninf);
    for (int s = 0; s < S; ++s) {
      if (alpha(t, s) == ninf || beta(t, s) == ninf) continue;
      int k = label(s);
      T v = alpha(t, s) + beta(t, s) - lp(t, label(s));
      post_label[std::size_t(k)] = log_sum_exp(post_label[std::size_t(k)], v);
    }
    for (int k = 0; k < vocab; ++k) {
      T post = post_label[std::size_t(k)] == ninf ? T(0) : std::exp(post_label[std::size_t(k)] - log_p);
      res.grad_logits(t, k) = std::exp(lp(t, k)) - post;
    }
  }
  return res;
}

/// Transducer loss. joint_logits has T'*(U+1) rows of |V|+1 logits; row
/// t*(U+1)+u scores the decision at encoder frame t after emitting u target
/// tokens. An empty target is valid: the only path emits T' blanks.
template <typename T>
inline LossResult<T> rnnt_loss(const Mat<T>& joint_logits, const std::vector<int>& targets,
                               int frames) {
  const int U = int(targets.size());
  if (frames < 1) throw ShapeError("rnnt_loss: need at least one frame");
  if (joint_logits.rows != frames * (U + 1))
    throw ShapeError("rnnt_loss: joint logits rows != T'*(U+1)");
  const int vocab = joint_logits.cols;
  for (int u : targets)
    if (u < 0 || u + 1 >= vocab) throw IndexError("rnnt_loss: target id out of range");

  Mat<T> lp;
  detail::log_softmax_rows(joint_logits, &lp);
  auto at = [&](int t, int u) { return lp.row_ptr(t * (U + 1) + u); };
  const T ninf = -std::numeric_limits<T>::infinity();

  Mat<T> alpha(frames, U + 1, ninf), beta(frames, U + 1, ninf);
  alpha(0, 0) = T(0);
  for (int t = 0; t < frames; ++t)
    for (int u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) continue;
      T a = ninf;
      if (t > 0) a = log_sum_exp(a, alpha(t - 1, u) + at(t - 1, u)[0]);
      if (u > 0) a = log_sum_exp(a, alpha(t, u - 1) + at(t, u - 1)[targets[std::size_t(u - 1)] + 1]);
      alpha(t, u) = a;
    }
  T log_p = alpha(frames - 1, U) + at(frames - 1, U)[0];

  LossResult<T> res;
  res.grad_logits = Mat<T>(joint_logits.rows, vocab);
  if (log_p == ninf || std::isnan(double(log_p))) {
    res.loss = std::numeric_limits<T>::infinity();
    res.reachable = false;
    return res;
  }
  res.loss = -log_p;

  beta(frames - 1, U) = at(frames - 1, U)[0];
  for (int t = frames - 1; t >= 0; --t)
    for (int u = U; u >= 0; --u) {
      if (t == frames - 1 && u == U) continue;
      T b = ninf;
      if (t + 1 < frames) b = log_sum_exp(b, at(t, u)[0] + beta(t + 1, u));
      if (u + 1 <= U) b = log_sum_exp(b, at(t, u)[targets[std::size_t(u)] + 1] + beta(t, u + 1));
      beta(t, u) = b;
    }

  // Posterior of using transition (t,u,k), then chain through log-softmax.
  for (int t = 0; t < frames; ++t)
    for (int u = 0; u <= U; ++u) {
      int row = t * (U + 1) + u;
      if (alpha(t, u) == ninf) continue;
      std::vector<T> g(std::size_t(vocab), T(0));
      T gsum = T(0);
      // blank transition
      {
        T next = (t + 1 < frames) ? beta(t + 1, u) : (u == U ? T(0) : ninf);
        if (next != ninf) {
          T post = std::exp(alpha(t, u) + at(t, u)[0] + next - log_p);
          g[0] = -post;
          gsum += -post;
        }
      }
      if (u < U) {
        T next = beta(t, u + 1);
        if (next != ninf) {
          int k = targets[std::size_t(u)] + 1;
          T post = std::exp(alpha(t, u) + at(t, u)[k] + next - log_p);
          g[std::size_t(k)] += -post;
          gsum += -post;
        }
      }
      for (int k = 0; k < vocab; ++k)
        res.grad_logits(row, k) = g[std::size_t(k)] - std::exp(at(t, u)[k]) * gsum;
    }
  return res;
}

/// Token-mean cross entropy with optional label smoothing. Row m of logits
/// scores targets[m]; the caller appends the eos slot itself.
template <typename T>
inline LossResult<T> ce_loss(const Mat<T>& logits, const std::vector<int>& targets,
                             double label_smoothing = 0.0) {
  if (int(targets.size()) != logits.rows)
    throw ShapeError("ce_loss: one logit row per target required");
  if (logits.rows == 0) throw ValidationError("ce_loss: empty target");
  const int vocab = logits.cols;
  for (int y : targets)
    if (y < 0 || y >= vocab) throw IndexError("ce_loss: target id out of range");

  Mat<T> lp;
  detail::log_softmax_rows(logits, &lp);
  const T eps = T(label_smoothing);
  const T inv_m = T(1) / T(logits.rows);

  LossResult<T> res;
  res.grad_logits = Mat<T>(logits.rows, vocab);
  T loss = T(0);
  for (int m = 0; m < logits.rows; ++m) {
    int y = targets[std::size_t(m)];
    T row_loss = T(0);
    for (int k = 0; k < vocab; ++k) {
      T q = eps / T(vocab) + (k == y ? T(1) - eps : T(0));
      row_loss -= q * lp(m, k);
      res.grad_logits(m, k) = inv_m * (std::exp(lp(m, k)) - q);
    }
    loss += row_loss;
  }
  res.loss = loss * inv_m;
  return res;
}

}  // namespace dsmt
