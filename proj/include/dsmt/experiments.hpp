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
// Desk-scale experiment harness on a synthetic translation task. Source
// strings come from a small symbol alphabet; each symbol deterministically
// emits one or two target symbols (monotonic, so CTC-style models can learn
// it), and "speech" realizes each source symbol as a fixed short sequence of
// latent units rendered as noisy feature frames. The full pipeline runs:
// k-means discretization, repeat collapse, subword modeling, up-sampled MT
// twins, multi-task training, decoding, BLEU.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsmt/bleu.hpp"
#include "dsmt/decoding.hpp"
#include "dsmt/feature_io.hpp"
#include "dsmt/kmeans.hpp"
#include "dsmt/tokenizer.hpp"
#include "dsmt/training.hpp"

namespace dsmt {

struct SynthTaskSpec {
  int n_symbols = 12;
  int units_per_symbol_min = 2;
  int units_per_symbol_max = 4;
  std::pair<int, int> frames_per_unit = {2, 3};
  double noise_stddev = 0.05;
  int feature_dim = 8;
  std::pair<int, int> symbols_per_utt = {3, 8};
  int speech_vocab_extra = 24;  // learned multi-unit pieces beyond the unit alphabet
  int tgt_emit_min = 1;
  int tgt_emit_max = 2;
  int n_train = 300;
  int n_valid = 40;
  int n_test = 60;
  std::uint64_t seed = 1;
};

struct TaskData {
  SynthTaskSpec spec;
  KMeansModel kmeans;
  UnigramModel speech_tok, src_tok, tgt_tok;
  Vocabulary v_spe, v_src, v_tgt, v_cross;
  std::vector<Triplet> train_st, valid_st, test_st;
  std::vector<std::string> test_refs;  // space-joined target symbols
  std::map<char, std::string> tgt_map;
};

namespace detail {

inline std::string space_join_chars(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ' ';
    out += s[i];
  }
  return out;
}

}  // namespace detail

/// Joins decoded target pieces into a space-separated symbol string,
/// skipping any special ids a weak model may have produced.
inline std::string render_hypothesis(const UnigramModel& tgt_tok, const std::vector<int>& ids) {
  std::string flat;
  for (int id : ids) {
    if (id < kNumSpecials || id >= tgt_tok.size()) continue;
    for (int sym : tgt_tok.pieces[std::size_t(id)].syms)
      flat += tgt_tok.alphabet[std::size_t(sym)];
  }
  return detail::space_join_chars(flat);
}

inline TaskData build_synth_task(const SynthTaskSpec& ts) {
  if (ts.n_symbols < 2 || ts.n_symbols > 20) throw ConfigError("n_symbols must be in [2,20]");
  if (ts.units_per_symbol_min < 1 || ts.units_per_symbol_min > ts.units_per_symbol_max)
    throw ConfigError("units_per_symbol bounds invalid");
  TaskData task;
  task.spec = ts;

  // Deterministic grammar: symbol i draws its unit count and its 1..2-symbol
  // target emission from the task seed. Unit ids live in per-symbol blocks so
  // collapse can never merge across symbol boundaries.
  Rng rng(derive_seed(ts.seed, 0x7A51));
  std::uniform_int_distribution<int> ucount(ts.units_per_symbol_min, ts.units_per_symbol_max);
  std::uniform_int_distribution<int> ecount(ts.tgt_emit_min, ts.tgt_emit_max);
  SynthSpec synth;
  synth.dim = ts.feature_dim;
  synth.noise_stddev = ts.noise_stddev;
  synth.frames_per_unit = ts.frames_per_unit;
  synth.symbols_per_utt = ts.symbols_per_utt;
  std::vector<int> used_units;
  const int tgt_alpha = 14;
  std::uniform_int_distribution<int> tchar(0, tgt_alpha - 1);
  for (int i = 0; i < ts.n_symbols; ++i) {
    char sym = char('a' + i);
    int n = ucount(rng);
    std::vector<int> ids;
    for (int k = 0; k < n; ++k) {
      int id = i * ts.units_per_symbol_max + k;
      ids.push_back(id);
      used_units.push_back(id);
    }
    synth.latent_grammar[sym] = ids;
    int emits = ecount(rng);
    std::string emitted;
    for (int k = 0; k < emits; ++k) emitted += char('A' + tchar(rng));
    task.tgt_map[sym] = emitted;
  }
  synth.n_latent_clusters = ts.n_symbols * ts.units_per_symbol_max;

  const int total = ts.n_train + ts.n_valid + ts.n_test;
  auto corpus = synth_corpus(synth, total, ts.seed);

  // Discretize: k-means over training frames only.
  int train_frames = 0;
  for (int i = 0; i < ts.n_train; ++i) train_frames += corpus[std::size_t(i)].features.frames.rows;
  Mat<float> pooled(train_frames, ts.feature_dim);
  int row = 0;
  for (int i = 0; i < ts.n_train; ++i) {
    const auto& f = corpus[std::size_t(i)].features.frames;
    for (int t = 0; t < f.rows; ++t, ++row)
      std::copy(f.row_ptr(t), f.row_ptr(t) + f.cols, pooled.row_ptr(row));
  }
  task.kmeans = kmeans_train(pooled, int(used_units.size()), 100, 1e-6, derive_seed(ts.seed, 2));

  // Unit strings for every utterance.
  std::vector<UnitString> unit_strings(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i)
    unit_strings[i] = cluster_units(collapse_repeats(assign(task.kmeans, corpus[i].features)));

  // Tokenizers: learned pieces for speech, plain characters for text.
  std::vector<UnitString> speech_corpus(unit_strings.begin(),
                                        unit_strings.begin() + ts.n_train);
  int unit_alpha = 0;
  {
    std::set<std::string> syms;
    for (const auto& u : speech_corpus)
      for (const auto& s : u.symbols) syms.insert(s);
    unit_alpha = int(syms.size());
  }
  task.speech_tok =
      unigram_train(speech_corpus, kNumSpecials + unit_alpha + ts.speech_vocab_extra);

  std::vector<UnitString> src_corpus, tgt_corpus;
  for (int i = 0; i < ts.n_train; ++i) {
    src_corpus.push_back(text_units(corpus[std::size_t(i)].source_symbols));
    std::string tgt;
    for (char c : corpus[std::size_t(i)].source_symbols) tgt += task.tgt_map.at(c);
    tgt_corpus.push_back(text_units(tgt));
  }
  {
    std::set<std::string> syms;
    for (const auto& u : src_corpus)
      for (const auto& s : u.symbols) syms.insert(s);
    task.src_tok = unigram_train(src_corpus, kNumSpecials + int(syms.size()));
  }
  {
    std::set<std::string> syms;
    for (const auto& u : tgt_corpus)
      for (const auto& s : u.symbols) syms.insert(s);
    task.tgt_tok = unigram_train(tgt_corpus, kNumSpecials + int(syms.size()));
  }
  task.v_spe = vocabulary(task.speech_tok, "spe");
  task.v_src = vocabulary(task.src_tok, "src");
  task.v_tgt = vocabulary(task.tgt_tok, "tgt");
  task.v_cross = build_joint_vocab(task.v_spe, task.v_src);

  auto to_triplet = [&](std::size_t i) {
    const auto& utt = corpus[i];
    Triplet t;
    t.utterance_id = utt.features.utterance_id;
    t.x = cross_map_speech(encode_viterbi(task.speech_tok, unit_strings[i], "spe"));
    t.x.vocab_name = "cross";
    t.y_src = encode_viterbi(task.src_tok, text_units(utt.source_symbols), "src");
    std::string tgt;
    for (char c : utt.source_symbols) tgt += task.tgt_map.at(c);
    t.y_tgt = encode_viterbi(task.tgt_tok, text_units(tgt), "tgt");
    t.origin = Origin::ST;
    return t;
  };
  for (int i = 0; i < ts.n_train; ++i) task.train_st.push_back(to_triplet(std::size_t(i)));
  for (int i = ts.n_train; i < ts.n_train + ts.n_valid; ++i)
    task.valid_st.push_back(to_triplet(std::size_t(i)));
  for (int i = ts.n_train + ts.n_valid; i < total; ++i) {
    task.test_st.push_back(to_triplet(std::size_t(i)));
    std::string tgt;
    for (char c : corpus[std::size_t(i)].source_symbols) tgt += task.tgt_map.at(c);
    task.test_refs.push_back(detail::space_join_chars(tgt));
  }
  return task;
}

inline ModelConfig task_model_config(const TaskData& task, ModelType type) {
  ModelConfig c;
  c.model_type = type;
  c.d_model = 32;
  c.d_ff = 64;
  c.n_heads = 2;
  c.n_enc_layers = 3;
  c.tap_layer = 2;
  c.n_dec_layers = 1;
  c.dropout = 0.0;
  c.time_mask_spans = 1;
  c.vocab_cross = task.v_cross.size();
  c.vocab_src = task.v_src.size();
  c.vocab_tgt = task.v_tgt.size();
  if (type == ModelType::CTC) c.lambdas = {1.0, 1.0, 0.0};
  return c;
}

/// Decodes one input with the decoding rule the paper pairs with each model
/// family: greedy for CTC, beam search elsewhere.
template <typename T>
inline std::vector<int> decode_input(const Inference<T>& inf, const std::vector<int>& x_ids,
                                     int beam_size, double ctc_weight, double max_len_ratio) {
  switch (inf.cfg.model_type) {
    case ModelType::CTC:
      return ctc_greedy(inf.encode(x_ids).tgt_logits).ids;
    case ModelType::RNNT:
      return rnnt_beam(inf, x_ids, beam_size).tokens.ids;
    case ModelType::AED:
      return attn_beam(inf, x_ids, beam_size, max_len_ratio).tokens.ids;
    case ModelType::CTC_ATTN:
      return joint_ctc_attn_beam(inf, x_ids, beam_size, ctc_weight, max_len_ratio).tokens.ids;
  }
  throw ConfigError("unknown model type");
}

struct EvalSettings {
  int beam_size = 10;
  double ctc_weight = 0.3;
  double max_len_ratio = 1.0;
};

inline BleuReport score_test_set(const TaskData& task, const ModelConfig& cfg,
                                 const Parameters<float>& params, const EvalSettings& ev) {
  Inference<float> inf{cfg, params};
  std::vector<std::string> hyps;
  for (const auto& t : task.test_st)
    hyps.push_back(render_hypothesis(task.tgt_tok, decode_input(inf, t.x.ids, ev.beam_size,
                                                                ev.ctc_weight, ev.max_len_ratio)));
  return bleu(hyps, task.test_refs);
}

struct SystemResult {
  ModelType model_type;
  bool multi_task = false;
  double bleu = 0;
  double final_valid_loss = 0;
  int iterations = 0;
};

/// Trains one system (single- or multi-task) end to end and scores it with
/// best-checkpoint averaging.
inline SystemResult run_system(const TaskData& task, ModelType type, bool multi_task, int factor,
                               TrainConfig tcfg, const EvalSettings& ev,
                               std::optional<ModelConfig> cfg_override = std::nullopt) {
  ModelConfig mcfg = cfg_override ? *cfg_override : task_model_config(task, type);
  std::vector<Triplet> mt;
  if (multi_task)
    for (const auto& st : task.train_st) mt.push_back(make_mt_example(st, factor, task.v_spe));
  std::vector<Triplet> data = mix_datasets(task.train_st, mt, derive_seed(tcfg.seed, 0x31));

  auto outcome = train(tcfg, mcfg, data, task.valid_st, init_parameters<float>(mcfg, tcfg.seed));
  Parameters<float> final_params = outcome.final_params;
  if (!outcome.index.entries.empty()) {
    int n = std::min<int>(tcfg.keep_best, int(outcome.index.entries.size()));
    final_params = average_checkpoints(outcome.index, n).cast<float>();
  }

  SystemResult res;
  res.model_type = type;
  res.multi_task = multi_task;
  res.iterations = outcome.iterations_run;
  res.final_valid_loss = outcome.index.entries.empty()
                             ? std::numeric_limits<double>::quiet_NaN()
                             : outcome.index.entries.front().valid_loss;
  res.bleu = score_test_set(task, mcfg, final_params, ev).bleu;
  return res;
}

struct AblationRow {
  bool mt_enabled = false;
  std::optional<int> upsample_factor;
  std::optional<double> length_ratio;  // mean |X_disc| / mean |X_text|
  double bleu = 0;
};

/// Up-sampling factor sweep on the CTC/attention system with a shared seed.
inline std::vector<AblationRow> ablate_upsampling(const TaskData& task,
                                                  const std::vector<std::pair<bool, int>>& settings,
                                                  TrainConfig tcfg, const EvalSettings& ev) {
  if (settings.empty()) throw ConfigError("ablate_upsampling: empty settings");
  double mean_disc = 0;
  for (const auto& t : task.train_st) mean_disc += double(t.x.ids.size());
  mean_disc /= double(task.train_st.size());
  double mean_src = 0;
  for (const auto& t : task.train_st) mean_src += double(t.y_src.ids.size());
  mean_src /= double(task.train_st.size());

  std::vector<AblationRow> rows;
  for (auto [mt_enabled, factor] : settings) {
    AblationRow row;
    row.mt_enabled = mt_enabled;
    if (mt_enabled) {
      row.upsample_factor = factor;
      row.length_ratio = mean_disc / (double(factor) * mean_src);
    }
    SystemResult sys =
        run_system(task, ModelType::CTC_ATTN, mt_enabled, mt_enabled ? factor : 1, tcfg, ev);
    row.bleu = sys.bleu;
    rows.push_back(row);
  }
  return rows;
}

struct ComparisonRow {
  ModelType model_type;
  bool multi_task = false;
  std::vector<double> bleus;  // one per seed
  double mean = 0;
  double stddev = 0;
};

/// Single-task vs. multi-task sweep over model families and seeds with an
/// identical iteration budget in every arm.
inline std::vector<ComparisonRow> compare_single_vs_multi(const TaskData& task,
                                                          const std::vector<ModelType>& types,
                                                          const std::vector<std::uint64_t>& seeds,
                                                          int factor, TrainConfig tcfg,
                                                          const EvalSettings& ev) {
  if (seeds.empty()) throw ConfigError("compare: need at least one seed");
  std::vector<ComparisonRow> rows;
  for (ModelType type : types) {
    for (bool multi : {false, true}) {
      ComparisonRow row;
      row.model_type = type;
      row.multi_task = multi;
      for (std::uint64_t seed : seeds) {
        TrainConfig t = tcfg;
        t.seed = seed;
        t.run_dir = tcfg.run_dir / (std::string(model_type_name(type)) +
                                    (multi ? "_multi_" : "_single_") + std::to_string(seed));
        row.bleus.push_back(run_system(task, type, multi, factor, t, ev).bleu);
      }
      double sum = 0;
      for (double b : row.bleus) sum += b;
      row.mean = sum / double(row.bleus.size());
      double var = 0;
      for (double b : row.bleus) var += (b - row.mean) * (b - row.mean);
      row.stddev = row.bleus.size() > 1 ? std::sqrt(var / double(row.bleus.size() - 1)) : 0.0;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace dsmt
