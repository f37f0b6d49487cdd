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

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dsmt/common.hpp"
#include "dsmt/mat.hpp"

namespace dsmt {

enum class ModelType { CTC, RNNT, AED, CTC_ATTN };

inline const char* model_type_name(ModelType m) {
  switch (m) {
    case ModelType::CTC: return "ctc";
    case ModelType::RNNT: return "rnnt";
    case ModelType::AED: return "aed";
    case ModelType::CTC_ATTN: return "ctc-attn";
  }
  return "?";
}

inline ModelType model_type_from_name(const std::string& s) {
  if (s == "ctc") return ModelType::CTC;
  if (s == "rnnt") return ModelType::RNNT;
  if (s == "aed") return ModelType::AED;
  if (s == "ctc-attn" || s == "ctc_attn") return ModelType::CTC_ATTN;
  throw ConfigError("unknown model type: " + s);
}

struct ModelConfig {
  ModelType model_type = ModelType::CTC_ATTN;
  int d_model = 64;
  int d_ff = 256;
  int n_heads = 2;
  int n_enc_layers = 6;
  int tap_layer = 4;  // intermediate block whose output feeds the source CTC head
  int n_dec_layers = 2;
  double dropout = 0.0;
  std::array<double, 3> lambdas = {0.3, 0.3, 1.0};
  int time_mask_spans = 2;
  int time_mask_max_width = 0;  // 0 = one tenth of the utterance length
  int post_encoder_downsample = 1;
  double label_smoothing = 0.0;
  int max_len = 4096;  // positional table capacity

  int vocab_cross = 0;
  int vocab_src = 0;
  int vocab_tgt = 0;

  bool has_decoder() const {
    return model_type == ModelType::AED || model_type == ModelType::CTC_ATTN;
  }
  bool has_predictor() const { return model_type == ModelType::RNNT; }

  void validate() const {
    if (d_model < 1 || d_ff < 1 || n_heads < 1 || n_enc_layers < 1)
      throw ConfigError("model dims must be positive");
    if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
    if (tap_layer < 1 || tap_layer >= n_enc_layers)
      throw ConfigError("tap_layer must satisfy 1 <= tap < n_enc_layers");
    if (has_decoder() && n_dec_layers < 1) throw ConfigError("decoder needs >= 1 layer");
    if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout must be in [0,1)");
    if (post_encoder_downsample != 1 && post_encoder_downsample != 2)
      throw ConfigError("post_encoder_downsample must be 1 or 2");
    if (vocab_cross < kNumSpecialsForModel || vocab_src < kNumSpecialsForModel ||
        vocab_tgt < kNumSpecialsForModel)
      throw ConfigError("vocabulary sizes not set");
    if (model_type == ModelType::CTC && (lambdas[0] != 1.0 || lambdas[1] != 1.0))
      throw ConfigError("pure CTC training uses lambda1 = lambda2 = 1");
    for (double l : lambdas)
      if (l < 0) throw ConfigError("lambdas must be nonnegative");
  }

  static constexpr int kNumSpecialsForModel = 5;

  /// tap defaults to two thirds of the encoder depth.
  static int default_tap(int n_enc_layers) {
    return std::max(1, std::min(n_enc_layers - 1, 2 * n_enc_layers / 3));
  }

  static ModelConfig desk_scale(ModelType type) {
    ModelConfig c;
    c.model_type = type;
    c.d_model = 64;
    c.d_ff = 256;
    c.n_heads = 2;
    c.n_enc_layers = 6;
    c.tap_layer = default_tap(6);
    c.n_dec_layers = 2;
    if (type == ModelType::CTC) c.lambdas = {1.0, 1.0, 0.0};
    return c;
  }
  static ModelConfig base_preset(ModelType type) {
    ModelConfig c = desk_scale(type);
    c.d_model = 256;
    c.d_ff = 1024;
    c.n_heads = 4;
    c.n_enc_layers = 18;
    c.tap_layer = 12;
    c.n_dec_layers = 6;
    return c;
  }
  static ModelConfig large_preset(ModelType type) {
    ModelConfig c = base_preset(type);
    c.d_model = 512;
    c.d_ff = 2048;
    c.n_heads = 8;
    return c;
  }
};

/// Named tensors plus a freeze mask. Iteration order is insertion order so
/// optimizer accumulation is deterministic.
template <typename T>
struct Parameters {
  struct Entry {
    std::string name;
    Mat<T> value;
    bool frozen = false;
  };
  std::vector<Entry> entries;
  std::map<std::string, int> index;

  void add(const std::string& name, Mat<T> value) {
    if (index.count(name)) throw ConfigError("duplicate parameter: " + name);
    index[name] = int(entries.size());
    entries.push_back({name, std::move(value), false});
  }
  bool has(const std::string& name) const { return index.count(name) != 0; }
  Mat<T>& at(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw IndexError("no such parameter: " + name);
    return entries[std::size_t(it->second)].value;
  }
  const Mat<T>& at(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw IndexError("no such parameter: " + name);
    return entries[std::size_t(it->second)].value;
  }
  void set_frozen(const std::string& name, bool frozen) {
    entries[std::size_t(index.at(name))].frozen = frozen;
  }
  bool is_frozen(const std::string& name) const {
    return entries[std::size_t(index.at(name))].frozen;
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.value.size();
    return n;
  }

  template <typename U>
  Parameters<U> cast() const {
    Parameters<U> out;
    for (const auto& e : entries) {
      Mat<U> m(e.value.rows, e.value.cols);
      for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = U(e.value.data[i]);
      out.add(e.name, std::move(m));
      out.set_frozen(e.name, e.frozen);
    }
    return out;
  }
};

namespace detail {

template <typename T>
inline Mat<T> init_matrix(int rows, int cols, double scale, Rng& rng) {
  std::normal_distribution<double> g(0.0, scale);
  Mat<T> m(rows, cols);
  for (auto& v : m.data) v = T(g(rng));
  return m;
}

template <typename T>
inline void add_attention_block(Parameters<T>& p, const std::string& prefix, int d, Rng& rng) {
  const double s = 1.0 / std::sqrt(double(d));
  for (const char* w : {"wq", "wk", "wv", "wo"})
    p.add(prefix + "." + w, init_matrix<T>(d, d, s, rng));
  for (const char* b : {"bq", "bk", "bv", "bo"}) p.add(prefix + "." + b, Mat<T>(1, d));
}

template <typename T>
inline void add_norm(Parameters<T>& p, const std::string& prefix, int d) {
  p.add(prefix + ".g", Mat<T>(1, d, T(1)));
  p.add(prefix + ".b", Mat<T>(1, d));
}

template <typename T>
inline void add_ff(Parameters<T>& p, const std::string& prefix, int d, int d_ff, Rng& rng) {
  p.add(prefix + ".w1", init_matrix<T>(d, d_ff, 1.0 / std::sqrt(double(d)), rng));
  p.add(prefix + ".b1", Mat<T>(1, d_ff));
  p.add(prefix + ".w2", init_matrix<T>(d_ff, d, 1.0 / std::sqrt(double(d_ff)), rng));
  p.add(prefix + ".b2", Mat<T>(1, d));
}

}  // namespace detail

template <typename T>
inline Parameters<T> init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, 0x9a));
  Parameters<T> p;
  const int d = cfg.d_model;

  p.add("embed.table", detail::init_matrix<T>(cfg.vocab_cross, d, 1.0 / std::sqrt(double(d)), rng));
  p.add("embed.mask", detail::init_matrix<T>(1, d, 1.0 / std::sqrt(double(d)), rng));

  for (int l = 0; l < cfg.n_enc_layers; ++l) {
    std::string pre = "enc." + std::to_string(l);
    detail::add_norm(p, pre + ".ln1", d);
    detail::add_attention_block(p, pre + ".attn", d, rng);
    detail::add_norm(p, pre + ".ln2", d);
    detail::add_ff(p, pre + ".ff", d, cfg.d_ff, rng);
  }
  detail::add_norm(p, "enc.final_ln", d);
  detail::add_norm(p, "enc.tap_ln", d);
  if (cfg.post_encoder_downsample == 2) {
    p.add("ds.w", detail::init_matrix<T>(3, d, 1.0 / std::sqrt(3.0), rng));
    p.add("ds.b", Mat<T>(1, d));
  }

  p.add("src_ctc.w", detail::init_matrix<T>(d, cfg.vocab_src + 1, 1.0 / std::sqrt(double(d)), rng));
  p.add("src_ctc.b", Mat<T>(1, cfg.vocab_src + 1));
  p.add("tgt_ctc.w", detail::init_matrix<T>(d, cfg.vocab_tgt + 1, 1.0 / std::sqrt(double(d)), rng));
  p.add("tgt_ctc.b", Mat<T>(1, cfg.vocab_tgt + 1));

  if (cfg.has_decoder()) {
    p.add("dec.embed", detail::init_matrix<T>(cfg.vocab_tgt, d, 1.0 / std::sqrt(double(d)), rng));
    for (int l = 0; l < cfg.n_dec_layers; ++l) {
      std::string pre = "dec." + std::to_string(l);
      detail::add_norm(p, pre + ".ln1", d);
      detail::add_attention_block(p, pre + ".selfattn", d, rng);
      detail::add_norm(p, pre + ".ln2", d);
      detail::add_attention_block(p, pre + ".xattn", d, rng);
      detail::add_norm(p, pre + ".ln3", d);
      detail::add_ff(p, pre + ".ff", d, cfg.d_ff, rng);
    }
    detail::add_norm(p, "dec.final_ln", d);
    p.add("dec.out.w", detail::init_matrix<T>(d, cfg.vocab_tgt, 1.0 / std::sqrt(double(d)), rng));
    p.add("dec.out.b", Mat<T>(1, cfg.vocab_tgt));
  }

  if (cfg.has_predictor()) {
    p.add("pred.embed", detail::init_matrix<T>(cfg.vocab_tgt, d, 1.0 / std::sqrt(double(d)), rng));
    p.add("pred.wx", detail::init_matrix<T>(d, d, 1.0 / std::sqrt(double(d)), rng));
    p.add("pred.wh", detail::init_matrix<T>(d, d, 1.0 / std::sqrt(double(d)), rng));
    p.add("pred.b", Mat<T>(1, d));
    p.add("joint.enc_w", detail::init_matrix<T>(d, d, 1.0 / std::sqrt(double(d)), rng));
    p.add("joint.pred_w", detail::init_matrix<T>(d, d, 1.0 / std::sqrt(double(d)), rng));
    p.add("joint.b", Mat<T>(1, d));
    p.add("joint.out_w",
          detail::init_matrix<T>(d, cfg.vocab_tgt + 1, 1.0 / std::sqrt(double(d)), rng));
    p.add("joint.out_b", Mat<T>(1, cfg.vocab_tgt + 1));
  }
  return p;
}

/// Sinusoidal positional encodings, rows 0..len-1.
template <typename T>
inline Mat<T> positional_encoding(int len, int d) {
  Mat<T> pe(len, d);
  for (int t = 0; t < len; ++t)
    for (int i = 0; i < d; ++i) {
      double angle = t / std::pow(10000.0, double(2 * (i / 2)) / d);
      pe(t, i) = T(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  return pe;
}

}  // namespace dsmt
