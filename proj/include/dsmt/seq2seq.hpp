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
// The numerical heart: token embedding with time-masking, a pre-norm
// self-attention encoder with an intermediate tap for the source CTC head,
// an attention decoder, transducer prediction/joint networks, and the
// interpolated multi-task loss. One code path serves ST and MT examples; the
// input ids are the only place the modalities differ.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dsmt/common.hpp"
#include "dsmt/dataset.hpp"
#include "dsmt/model.hpp"
#include "dsmt/tape.hpp"

namespace dsmt {

struct SeqExample {
  std::vector<int> x;  // may carry trailing pad ids
  int len = 0;         // true length of x
  std::vector<int> y_src;
  std::vector<int> y_tgt;
};

inline SeqExample example_from_triplet(const Triplet& t) {
  SeqExample e;
  e.x = t.x.ids;
  e.len = int(t.x.ids.size());
  e.y_src = t.y_src.ids;
  e.y_tgt = t.y_tgt.ids;
  return e;
}

inline std::vector<SeqExample> examples_from_batch(const Batch& b) {
  std::vector<SeqExample> out;
  auto rows = b.padded_x();
  for (std::size_t i = 0; i < b.items.size(); ++i) {
    SeqExample e;
    e.x = rows[i];
    e.len = int(b.items[i].x.ids.size());
    e.y_src = b.items[i].y_src.ids;
    e.y_tgt = b.items[i].y_tgt.ids;
    out.push_back(std::move(e));
  }
  return out;
}

struct LossBreakdown {
  double l_src_ctc = 0;
  double l_tgt_ctc = 0;
  double l_third = 0;  // CE or transducer loss; 0 for pure CTC models
  double total = 0;
  std::array<double, 3> lambdas{};
  int n_examples = 0;
  // Examples whose CTC target was unreachable, excluded from that head's mean.
  int n_src_skipped = 0;
  int n_tgt_skipped = 0;
};

template <typename T>
struct ForwardResult {
  LossBreakdown breakdown;
  std::map<std::string, Mat<T>> grads;  // by parameter name; absent = zero
};

/// Builds forward graphs for one model on one tape. Create one per batch.
template <typename T>
class GraphBuilder {
 public:
  using Var = typename Tape<T>::Var;

  GraphBuilder(const ModelConfig& cfg, const Parameters<T>& params, bool want_grads)
      : cfg_(cfg), params_(params), want_grads_(want_grads) {}

  Tape<T>& tape() { return tape_; }

  Var pvar(const std::string& name) {
    auto it = pvars_.find(name);
    if (it != pvars_.end()) return it->second;
    Var v = tape_.leaf(params_.at(name), want_grads_);
    pvars_.emplace(name, v);
    return v;
  }

  /// Embedding lookup + sinusoidal positions; during training, time-mask
  /// spans are replaced by the learned mask vector.
  Var embed_x(const std::vector<int>& ids, int len, bool training, Rng* rng) {
    Var e = tape_.gather_rows(pvar("embed.table"), ids);
    e = tape_.scale(e, T(std::sqrt(double(cfg_.d_model))));
    e = tape_.add_const(e, positional_encoding<T>(int(ids.size()), cfg_.d_model));
    if (training && cfg_.time_mask_spans > 0 && rng) {
      std::vector<char> flags(ids.size(), 0);
      int max_w = cfg_.time_mask_max_width > 0 ? cfg_.time_mask_max_width
                                               : std::max(1, len / 10);
      std::uniform_int_distribution<int> width(0, max_w);
      for (int s = 0; s < cfg_.time_mask_spans; ++s) {
        int w = std::min(width(*rng), len);
        if (w == 0) continue;
        std::uniform_int_distribution<int> start(0, len - w);
        int s0 = start(*rng);
        for (int t = s0; t < s0 + w; ++t) flags[std::size_t(t)] = 1;
      }
      e = tape_.replace_rows(e, pvar("embed.mask"), std::move(flags));
    }
    if (training && cfg_.dropout > 0 && rng) e = tape_.dropout(e, cfg_.dropout, *rng);
    return e;
  }

  struct EncOut {
    Var tap;           // raw output of block tap_layer, padded rows
    Var final_states;  // normed, sliced to the valid length, downsampled
    int final_len = 0;
  };

  EncOut encode(Var emb, int len, bool training, Rng* rng) {
    Var x = emb;
    std::vector<int> bounds(std::size_t(tape_.value(emb).rows), len);
    EncOut out;
    for (int l = 0; l < cfg_.n_enc_layers; ++l) {
      std::string pre = "enc." + std::to_string(l);
      Var h = tape_.layer_norm(x, pvar(pre + ".ln1.g"), pvar(pre + ".ln1.b"));
      Var a = attention(h, h, pre + ".attn", bounds);
      if (training && cfg_.dropout > 0 && rng) a = tape_.dropout(a, cfg_.dropout, *rng);
      x = tape_.add(x, a);
      Var h2 = tape_.layer_norm(x, pvar(pre + ".ln2.g"), pvar(pre + ".ln2.b"));
      Var f = feed_forward(h2, pre + ".ff");
      if (training && cfg_.dropout > 0 && rng) f = tape_.dropout(f, cfg_.dropout, *rng);
      x = tape_.add(x, f);
      if (!tape_.value(x).all_finite())
        throw NumericalError("non-finite activations in encoder block " + std::to_string(l));
      if (l + 1 == cfg_.tap_layer) out.tap = x;
    }
    Var normed = tape_.layer_norm(x, pvar("enc.final_ln.g"), pvar("enc.final_ln.b"));
    if (cfg_.post_encoder_downsample == 2) {
      out.final_states = tape_.downsample_conv(normed, pvar("ds.w"), pvar("ds.b"), len);
      out.final_len = (len + 1) / 2;
    } else {
      out.final_states =
          len == tape_.value(normed).rows ? normed : tape_.rows_slice(normed, 0, len);
      out.final_len = len;
    }
    return out;
  }

  Var src_ctc_logits(Var tap_raw, int len) {
    Var t = len == tape_.value(tap_raw).rows ? tap_raw : tape_.rows_slice(tap_raw, 0, len);
    t = tape_.layer_norm(t, pvar("enc.tap_ln.g"), pvar("enc.tap_ln.b"));
    return tape_.add_rowvec(tape_.matmul(t, pvar("src_ctc.w")), pvar("src_ctc.b"));
  }

  Var tgt_ctc_logits(Var final_states) {
    return tape_.add_rowvec(tape_.matmul(final_states, pvar("tgt_ctc.w")), pvar("tgt_ctc.b"));
  }

  /// Teacher-forced decoder logits: input bos + y, one logit row per input
  /// position (the last row scores eos).
  Var decoder_logits(Var enc_final, int enc_len, const std::vector<int>& y, bool training,
                     Rng* rng) {
    std::vector<int> input;
    input.push_back(kBosId);
    input.insert(input.end(), y.begin(), y.end());
    const int m = int(input.size());
    Var x = tape_.gather_rows(pvar("dec.embed"), input);
    x = tape_.scale(x, T(std::sqrt(double(cfg_.d_model))));
    x = tape_.add_const(x, positional_encoding<T>(m, cfg_.d_model));
    if (training && cfg_.dropout > 0 && rng) x = tape_.dropout(x, cfg_.dropout, *rng);

    std::vector<int> causal(std::size_t(m), 0);
    for (int r = 0; r < m; ++r) causal[std::size_t(r)] = r + 1;
    std::vector<int> xbounds(std::size_t(m), enc_len);

    for (int l = 0; l < cfg_.n_dec_layers; ++l) {
      std::string pre = "dec." + std::to_string(l);
      Var h = tape_.layer_norm(x, pvar(pre + ".ln1.g"), pvar(pre + ".ln1.b"));
      Var a = attention(h, h, pre + ".selfattn", causal);
      if (training && cfg_.dropout > 0 && rng) a = tape_.dropout(a, cfg_.dropout, *rng);
      x = tape_.add(x, a);
      Var h2 = tape_.layer_norm(x, pvar(pre + ".ln2.g"), pvar(pre + ".ln2.b"));
      Var c = attention(h2, enc_final, pre + ".xattn", xbounds);
      if (training && cfg_.dropout > 0 && rng) c = tape_.dropout(c, cfg_.dropout, *rng);
      x = tape_.add(x, c);
      Var h3 = tape_.layer_norm(x, pvar(pre + ".ln3.g"), pvar(pre + ".ln3.b"));
      Var f = feed_forward(h3, pre + ".ff");
      if (training && cfg_.dropout > 0 && rng) f = tape_.dropout(f, cfg_.dropout, *rng);
      x = tape_.add(x, f);
    }
    x = tape_.layer_norm(x, pvar("dec.final_ln.g"), pvar("dec.final_ln.b"));
    return tape_.add_rowvec(tape_.matmul(x, pvar("dec.out.w")), pvar("dec.out.b"));
  }

  /// Transducer joint logits for all (t,u) pairs, row t*(U+1)+u. The
  /// prediction network is a single tanh recurrence over the target history;
  /// history slot 0 is the empty-history zero state.
  Var joint_logits(Var enc_final, const std::vector<int>& y) {
    const int d = cfg_.d_model;
    std::vector<Var> pred_rows;
    pred_rows.push_back(tape_.constant(Mat<T>(1, d)));
    Var h = pred_rows[0];
    for (int token : y) {
      Var x = tape_.gather_rows(pvar("pred.embed"), {token});
      Var pre = tape_.add_rowvec(tape_.matmul(x, pvar("pred.wx")), pvar("pred.b"));
      pre = tape_.add(pre, tape_.matmul(h, pvar("pred.wh")));
      h = tape_.tanh_(pre);
      pred_rows.push_back(h);
    }
    Var pred = pred_rows.size() == 1 ? pred_rows[0] : tape_.rows_concat(pred_rows);
    Var enc_proj = tape_.matmul(enc_final, pvar("joint.enc_w"));
    Var pred_proj = tape_.matmul(pred, pvar("joint.pred_w"));
    Var joint = tape_.pairwise_row_add(enc_proj, pred_proj);
    joint = tape_.add_rowvec(joint, pvar("joint.b"));
    joint = tape_.tanh_(joint);
    return tape_.add_rowvec(tape_.matmul(joint, pvar("joint.out_w")), pvar("joint.out_b"));
  }

  std::map<std::string, Mat<T>> extract_grads() {
    std::map<std::string, Mat<T>> grads;
    for (const auto& [name, var] : pvars_)
      if (tape_.has_grad(var)) grads.emplace(name, tape_.grad(var));
    return grads;
  }

 private:
  Var attention(Var queries, Var memory, const std::string& prefix,
                const std::vector<int>& bounds) {
    const int d = cfg_.d_model;
    const int dh = d / cfg_.n_heads;
    Var q = tape_.add_rowvec(tape_.matmul(queries, pvar(prefix + ".wq")), pvar(prefix + ".bq"));
    Var k = tape_.add_rowvec(tape_.matmul(memory, pvar(prefix + ".wk")), pvar(prefix + ".bk"));
    Var v = tape_.add_rowvec(tape_.matmul(memory, pvar(prefix + ".wv")), pvar(prefix + ".bv"));
    std::vector<Var> heads;
    for (int hd = 0; hd < cfg_.n_heads; ++hd) {
      Var qh = tape_.cols_slice(q, hd * dh, (hd + 1) * dh);
      Var kh = tape_.cols_slice(k, hd * dh, (hd + 1) * dh);
      Var vh = tape_.cols_slice(v, hd * dh, (hd + 1) * dh);
      Var scores = tape_.scale(tape_.matmul_nt(qh, kh), T(1.0 / std::sqrt(double(dh))));
      Var w = tape_.softmax_bounded(scores, bounds);
      heads.push_back(tape_.matmul(w, vh));
    }
    Var ctx = heads.size() == 1 ? heads[0] : tape_.cols_concat(heads);
    return tape_.add_rowvec(tape_.matmul(ctx, pvar(prefix + ".wo")), pvar(prefix + ".bo"));
  }

  Var feed_forward(Var x, const std::string& prefix) {
    Var h = tape_.add_rowvec(tape_.matmul(x, pvar(prefix + ".w1")), pvar(prefix + ".b1"));
    h = tape_.gelu(h);
    return tape_.add_rowvec(tape_.matmul(h, pvar(prefix + ".w2")), pvar(prefix + ".b2"));
  }

  const ModelConfig& cfg_;
  const Parameters<T>& params_;
  bool want_grads_;
  Tape<T> tape_;
  std::map<std::string, Var> pvars_;
};

/// Interpolated loss over a batch, with exact gradients for every parameter
/// that participates. Examples whose CTC target cannot be aligned are
/// excluded from that head's batch mean and counted in the breakdown.
template <typename T>
inline ForwardResult<T> forward_loss(const std::vector<SeqExample>& batch,
                                     const Parameters<T>& params, const ModelConfig& cfg,
                                     bool training, std::uint64_t seed, bool want_grads = true) {
  cfg.validate();
  if (batch.empty()) throw ValidationError("forward_loss: empty batch");
  GraphBuilder<T> g(cfg, params, want_grads);
  using Var = typename Tape<T>::Var;

  std::vector<Var> src_terms, tgt_terms, third_terms;
  LossBreakdown bd;
  bd.lambdas = cfg.lambdas;
  if (cfg.model_type == ModelType::CTC) bd.lambdas[2] = 0;
  bd.n_examples = int(batch.size());

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const SeqExample& ex = batch[i];
    if (ex.len < 1 || ex.len > int(ex.x.size()))
      throw ValidationError("forward_loss: bad example length");
    Rng rng(derive_seed(seed, 0xE0 + i));
    Var emb = g.embed_x(ex.x, ex.len, training, &rng);
    auto enc = g.encode(emb, ex.len, training, &rng);

    auto src = g.tape().ctc(g.src_ctc_logits(enc.tap, ex.len), ex.y_src);
    if (src.reachable)
      src_terms.push_back(src.var);
    else
      ++bd.n_src_skipped;

    auto tgt = g.tape().ctc(g.tgt_ctc_logits(enc.final_states), ex.y_tgt);
    if (tgt.reachable)
      tgt_terms.push_back(tgt.var);
    else
      ++bd.n_tgt_skipped;

    if (cfg.has_decoder()) {
      Var logits = g.decoder_logits(enc.final_states, enc.final_len, ex.y_tgt, training, &rng);
      std::vector<int> ce_targets = ex.y_tgt;
      ce_targets.push_back(kEosId);
      third_terms.push_back(g.tape().ce(logits, ce_targets, cfg.label_smoothing).var);
    } else if (cfg.has_predictor()) {
      Var joint = g.joint_logits(enc.final_states, ex.y_tgt);
      auto r = g.tape().rnnt(joint, ex.y_tgt, enc.final_len);
      if (r.reachable) third_terms.push_back(r.var);
    }
  }

  auto mean_of = [&](const std::vector<Var>& terms) -> Var {
    std::vector<T> w(terms.size(), T(1) / T(terms.size()));
    return g.tape().weighted_sum_scalars(terms, w);
  };

  std::vector<Var> heads;
  std::vector<T> weights;
  if (!src_terms.empty()) {
    Var m = mean_of(src_terms);
    bd.l_src_ctc = double(g.tape().value(m)(0, 0));
    heads.push_back(m);
    weights.push_back(T(bd.lambdas[0]));
  }
  if (!tgt_terms.empty()) {
    Var m = mean_of(tgt_terms);
    bd.l_tgt_ctc = double(g.tape().value(m)(0, 0));
    heads.push_back(m);
    weights.push_back(T(bd.lambdas[1]));
  }
  if (!third_terms.empty()) {
    Var m = mean_of(third_terms);
    bd.l_third = double(g.tape().value(m)(0, 0));
    heads.push_back(m);
    weights.push_back(T(bd.lambdas[2]));
  }
  bd.total = bd.lambdas[0] * bd.l_src_ctc + bd.lambdas[1] * bd.l_tgt_ctc +
             bd.lambdas[2] * bd.l_third;

  ForwardResult<T> result;
  result.breakdown = bd;
  if (!heads.empty() && want_grads) {
    Var total = g.tape().weighted_sum_scalars(heads, weights);
    g.tape().backward(total);
    result.grads = g.extract_grads();
  }
  return result;
}

/// Inference-side forward pieces (no gradients). Used by the decoders.
template <typename T>
struct Inference {
  const ModelConfig& cfg;
  const Parameters<T>& params;

  struct Encoded {
    Mat<T> tap;           // valid rows only
    Mat<T> final_states;  // post-norm, post-downsample
    Mat<T> src_logits;    // CTC head over the tap
    Mat<T> tgt_logits;    // CTC head over the final states
  };

  Encoded encode(const std::vector<int>& x_ids) const {
    GraphBuilder<T> g(cfg, params, false);
    Var_t emb = g.embed_x(x_ids, int(x_ids.size()), false, nullptr);
    auto enc = g.encode(emb, int(x_ids.size()), false, nullptr);
    Encoded out;
    out.tap = g.tape().value(g.tape().rows_slice(enc.tap, 0, int(x_ids.size())));
    out.final_states = g.tape().value(enc.final_states);
    out.src_logits = g.tape().value(g.src_ctc_logits(enc.tap, int(x_ids.size())));
    out.tgt_logits = g.tape().value(g.tgt_ctc_logits(enc.final_states));
    return out;
  }

  /// Full-prefix decoder run; returns logits for the position after `prefix`.
  Mat<T> next_token_logits(const Mat<T>& enc_final, const std::vector<int>& prefix) const {
    GraphBuilder<T> g(cfg, params, false);
    Var_t enc = g.tape().constant(enc_final);
    Var_t logits = g.decoder_logits(enc, enc_final.rows, prefix, false, nullptr);
    const Mat<T>& lv = g.tape().value(logits);
    Mat<T> row(1, lv.cols);
    row.map() = lv.map().row(lv.rows - 1);
    return row;
  }

  // Transducer pieces for time-synchronous search.
  Mat<T> predictor_start() const { return Mat<T>(1, cfg.d_model); }

  Mat<T> predictor_advance(const Mat<T>& h, int token) const {
    Mat<T> x(1, cfg.d_model);
    x.map() = typename Mat<T>::ConstEigenMap(params.at("pred.embed").row_ptr(token), 1,
                                             cfg.d_model);
    Mat<T> pre = matmul(x, params.at("pred.wx"));
    Mat<T> rec = matmul(h, params.at("pred.wh"));
    pre.map() += rec.map();
    pre.map() += params.at("pred.b").map();
    for (T& v : pre.data) v = std::tanh(v);
    return pre;
  }

  Mat<T> joint_row(const Mat<T>& enc_final, int t, const Mat<T>& pred_state) const {
    Mat<T> enc_row(1, cfg.d_model);
    enc_row.map() = enc_final.map().row(t);
    Mat<T> a = matmul(enc_row, params.at("joint.enc_w"));
    Mat<T> b = matmul(pred_state, params.at("joint.pred_w"));
    a.map() += b.map();
    a.map() += params.at("joint.b").map();
    for (T& v : a.data) v = std::tanh(v);
    Mat<T> out = matmul(a, params.at("joint.out_w"));
    out.map() += params.at("joint.out_b").map();
    return out;
  }

 private:
  using Var_t = typename Tape<T>::Var;
};

}  // namespace dsmt
