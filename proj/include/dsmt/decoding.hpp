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
// Inference: CTC greedy collapse, length-synchronous attention beam search,
// joint decoding with the CTC label-prefix recursion of Watanabe et al.
// (2017), and time-synchronous transducer search. Everything here is a pure
// function of (parameters, input, config). The search never proposes pad,
// bos, unk, or blank; eos is the only special a hypothesis may end with.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dsmt/seq2seq.hpp"
#include "dsmt/tokenizer.hpp"

namespace dsmt {

struct Hypothesis {
  TokenSequence tokens;  // over V_tgt, without bos/eos
  double score = 0;      // combined log score used for ranking
  double attn_score = 0;
  double ctc_score = 0;
};

namespace detail {

template <typename T>
inline std::vector<double> log_softmax_row(const Mat<T>& row) {
  std::vector<double> out(std::size_t(row.cols));
  double mx = double(row(0, 0));
  for (int c = 1; c < row.cols; ++c) mx = std::max(mx, double(row(0, c)));
  double sum = 0;
  for (int c = 0; c < row.cols; ++c) sum += std::exp(double(row(0, c)) - mx);
  double lse = mx + std::log(sum);
  for (int c = 0; c < row.cols; ++c) out[std::size_t(c)] = double(row(0, c)) - lse;
  return out;
}

inline bool is_banned_special(int id) {
  return id == kPadId || id == kBosId || id == kUnkId || id == kBlankId;
}

}  // namespace detail

/// Per-frame argmax, collapse repeats, drop blanks. Logit column 0 is blank,
/// column v+1 is vocabulary id v.
template <typename T>
inline TokenSequence ctc_greedy(const Mat<T>& logits, const std::string& vocab_name = "tgt") {
  TokenSequence out;
  out.vocab_name = vocab_name;
  int prev = -1;
  for (int t = 0; t < logits.rows; ++t) {
    int best = 0;
    for (int c = 1; c < logits.cols; ++c)
      if (logits(t, c) > logits(t, best)) best = c;
    if (best != prev && best != 0) out.ids.push_back(best - 1);
    prev = best;
  }
  return out;
}

/// Label-synchronous CTC prefix scores over final-encoder CTC logits,
/// following the hybrid decoding recursion. States hold, per time step, the
/// log probability of the prefix ending in its last label vs. in blank.
template <typename T>
class CtcPrefixScorer {
 public:
  struct State {
    std::vector<double> gamma_n, gamma_b;  // per frame
    int last_token = -1;
  };

  explicit CtcPrefixScorer(const Mat<T>& logits) : frames_(logits.rows) {
    lp_ = Mat<double>(logits.rows, logits.cols);
    for (int t = 0; t < logits.rows; ++t) {
      double mx = double(logits(t, 0));
      for (int c = 1; c < logits.cols; ++c) mx = std::max(mx, double(logits(t, c)));
      double sum = 0;
      for (int c = 0; c < logits.cols; ++c) sum += std::exp(double(logits(t, c)) - mx);
      double lse = mx + std::log(sum);
      for (int c = 0; c < logits.cols; ++c) lp_(t, c) = double(logits(t, c)) - lse;
    }
  }

  State initial() const {
    State s;
    s.gamma_n.assign(std::size_t(frames_), kNegInf);
    s.gamma_b.assign(std::size_t(frames_), 0);
    double acc = 0;
    for (int t = 0; t < frames_; ++t) {
      acc += lp_(t, 0);
      s.gamma_b[std::size_t(t)] = acc;
    }
    return s;
  }

  /// Extends the prefix by token id c (vocabulary id, not logit column) and
  /// returns the new state plus the log prefix probability psi(h.c).
  std::pair<State, double> extend(const State& s, int c) const {
    State n;
    n.last_token = c;
    n.gamma_n.assign(std::size_t(frames_), kNegInf);
    n.gamma_b.assign(std::size_t(frames_), kNegInf);
    const int col = c + 1;
    double psi = kNegInf;
    for (int t = 0; t < frames_; ++t) {
      double phi = t == 0 ? (s.last_token == -1 ? 0.0 : kNegInf)
                          : s.gamma_b[std::size_t(t - 1)];
      if (t > 0 && s.last_token != c)
        phi = log_sum_exp(phi, s.gamma_n[std::size_t(t - 1)]);
      double stay = t == 0 ? kNegInf : n.gamma_n[std::size_t(t - 1)];
      n.gamma_n[std::size_t(t)] = lp_(t, col) + log_sum_exp(phi, stay);
      double prev_b = t == 0 ? kNegInf : n.gamma_b[std::size_t(t - 1)];
      double prev_n = t == 0 ? kNegInf : n.gamma_n[std::size_t(t - 1)];
      n.gamma_b[std::size_t(t)] = lp_(t, 0) + log_sum_exp(prev_b, prev_n);
      psi = log_sum_exp(psi, lp_(t, col) + phi);
    }
    return {std::move(n), psi};
  }

  /// Log probability that the complete output equals the prefix.
  double complete(const State& s) const {
    if (s.last_token == -1) return s.gamma_b[std::size_t(frames_ - 1)];
    return log_sum_exp(s.gamma_n[std::size_t(frames_ - 1)], s.gamma_b[std::size_t(frames_ - 1)]);
  }

  int frames() const { return frames_; }

 private:
  int frames_;
  Mat<double> lp_;
};

namespace detail {

struct BeamItem {
  std::vector<int> tokens;
  double attn_score = 0;
  double ctc_prefix = 0;  // psi(h) in log domain
  int scorer_state = -1;  // index into the per-step state pool
  double combined(double w) const { return (1 - w) * attn_score + w * ctc_prefix; }
};

}  // namespace detail

/// Length-synchronous beam search over the attention decoder, optionally
/// mixing in CTC prefix scores (ctc_weight > 0 requires a scorer). At the
/// length limit a hypothesis is closed by scoring eos.
template <typename T>
inline Hypothesis beam_search_attn(const Inference<T>& inf, const Mat<T>& enc_final,
                                   const CtcPrefixScorer<T>* scorer, int beam_size,
                                   double ctc_weight, int max_len) {
  if (beam_size < 1) throw ConfigError("beam_size must be >= 1");
  if (ctc_weight < 0 || ctc_weight > 1) throw ConfigError("ctc_weight must be in [0,1]");
  if (ctc_weight > 0 && !scorer) throw ConfigError("ctc_weight > 0 requires CTC logits");
  max_len = std::max(1, max_len);
  const double w = scorer ? ctc_weight : 0.0;

  std::vector<typename CtcPrefixScorer<T>::State> states;
  std::vector<detail::BeamItem> beam(1);
  if (scorer) {
    states.push_back(scorer->initial());
    beam[0].scorer_state = 0;
  }

  struct Finished {
    detail::BeamItem item;
    double final_score = 0;
    double final_ctc = 0;
  };
  std::vector<Finished> done;

  for (int step = 0; step < max_len && !beam.empty(); ++step) {
    struct Cand {
      std::size_t parent;
      int token;  // -1 for eos
      double attn_score;
      double ctc_prefix;
      double rank_score;
    };
    std::vector<Cand> cands;
    for (std::size_t bi = 0; bi < beam.size(); ++bi) {
      const auto& item = beam[bi];
      Mat<T> row = inf.next_token_logits(enc_final, item.tokens);
      std::vector<double> lp = detail::log_softmax_row(row);
      for (int v = 0; v < row.cols; ++v) {
        if (detail::is_banned_special(v)) continue;
        double attn = item.attn_score + lp[std::size_t(v)];
        double ctc;
        if (v == kEosId) {
          ctc = scorer ? scorer->complete(states[std::size_t(item.scorer_state)]) : 0.0;
        } else if (scorer) {
          ctc = scorer->extend(states[std::size_t(item.scorer_state)], v).second;
        } else {
          ctc = 0.0;
        }
        double rank = w == 0 ? attn : (1 - w) * attn + w * ctc;
        cands.push_back({bi, v, attn, ctc, rank});
      }
    }
    // eos competes for beam slots like any other symbol, so beam size 1 is
    // exactly the per-step argmax decoder.
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.rank_score != b.rank_score) return a.rank_score > b.rank_score;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.token < b.token;
    });
    if (int(cands.size()) > beam_size) cands.resize(std::size_t(beam_size));

    std::vector<detail::BeamItem> next;
    std::vector<typename CtcPrefixScorer<T>::State> next_states;
    for (const auto& c : cands) {
      detail::BeamItem item = beam[c.parent];
      if (c.token == kEosId) {
        item.attn_score = c.attn_score;
        done.push_back({item, c.rank_score, c.ctc_prefix});
        continue;
      }
      item.tokens.push_back(c.token);
      item.attn_score = c.attn_score;
      item.ctc_prefix = c.ctc_prefix;
      if (scorer) {
        auto [st, psi] = scorer->extend(states[std::size_t(item.scorer_state)], c.token);
        next_states.push_back(std::move(st));
        item.scorer_state = int(next_states.size()) - 1;
      }
      next.push_back(std::move(item));
    }
    beam = std::move(next);
    states = std::move(next_states);

    if (step + 1 == max_len) {
      // Close out whatever is still open by scoring eos.
      for (auto& item : beam) {
        Mat<T> row = inf.next_token_logits(enc_final, item.tokens);
        std::vector<double> lp = detail::log_softmax_row(row);
        double attn = item.attn_score + lp[std::size_t(kEosId)];
        double ctc = scorer ? scorer->complete(states[std::size_t(item.scorer_state)]) : 0.0;
        done.push_back({item, (1 - w) * attn + w * ctc, ctc});
        done.back().item.attn_score = attn;
      }
      beam.clear();
    }
  }

  if (done.empty()) throw Error("beam search produced no finished hypothesis");
  std::stable_sort(done.begin(), done.end(), [](const Finished& a, const Finished& b) {
    if (a.final_score != b.final_score) return a.final_score > b.final_score;
    return a.item.tokens < b.item.tokens;
  });
  Hypothesis hyp;
  hyp.tokens.vocab_name = "tgt";
  hyp.tokens.ids = done.front().item.tokens;
  hyp.score = done.front().final_score;
  hyp.attn_score = done.front().item.attn_score;
  hyp.ctc_score = done.front().final_ctc;
  return hyp;
}

template <typename T>
inline Hypothesis attn_beam(const Inference<T>& inf, const std::vector<int>& x_ids, int beam_size,
                            double max_len_ratio = 1.0) {
  auto enc = inf.encode(x_ids);
  int max_len = std::max(1, int(std::ceil(max_len_ratio * double(x_ids.size()))));
  return beam_search_attn<T>(inf, enc.final_states, nullptr, beam_size, 0.0, max_len);
}

template <typename T>
inline Hypothesis joint_ctc_attn_beam(const Inference<T>& inf, const std::vector<int>& x_ids,
                                      int beam_size, double ctc_weight,
                                      double max_len_ratio = 1.0) {
  if (inf.cfg.model_type != ModelType::CTC_ATTN)
    throw ConfigError("joint decoding requires a CTC/attention model");
  auto enc = inf.encode(x_ids);
  CtcPrefixScorer<T> scorer(enc.tgt_logits);
  int max_len = std::max(1, int(std::ceil(max_len_ratio * double(x_ids.size()))));
  return beam_search_attn<T>(inf, enc.final_states, &scorer, beam_size, ctc_weight, max_len);
}

/// Time-synchronous transducer search. Per frame, hypotheses take single
/// blank/emit actions; after each round only the globally best beam_size
/// actions survive, so beam_size 1 reduces to the greedy argmax loop.
/// Identical label sequences meeting at the next frame merge by
/// log-sum-exp. Emissions per frame are capped.
template <typename T>
inline Hypothesis rnnt_beam(const Inference<T>& inf, const std::vector<int>& x_ids, int beam_size,
                            int max_emits_per_frame = 4) {
  if (beam_size < 1) throw ConfigError("beam_size must be >= 1");
  if (inf.cfg.model_type != ModelType::RNNT) throw ConfigError("rnnt_beam requires a transducer");
  auto enc = inf.encode(x_ids);
  const int frames = enc.final_states.rows;

  struct Item {
    std::vector<int> tokens;
    double score = 0;
    Mat<T> pred_state;
  };
  std::vector<Item> current;
  current.push_back({{}, 0.0, inf.predictor_start()});

  auto merge_into = [](std::vector<Item>& pool, Item&& item) {
    for (auto& p : pool)
      if (p.tokens == item.tokens) {
        p.score = log_sum_exp(p.score, item.score);
        return;
      }
    pool.push_back(std::move(item));
  };

  for (int t = 0; t < frames; ++t) {
    std::vector<Item> active = std::move(current);
    std::vector<Item> frozen;  // hypotheses that took blank at frame t
    for (int round = 0; round <= max_emits_per_frame && !active.empty(); ++round) {
      struct Action {
        std::size_t parent;
        int token;  // -1 = blank
        double score;
      };
      std::vector<Action> actions;
      const bool last_round = round == max_emits_per_frame;
      for (std::size_t i = 0; i < active.size(); ++i) {
        Mat<T> row = inf.joint_row(enc.final_states, t, active[i].pred_state);
        std::vector<double> lp = detail::log_softmax_row(row);
        actions.push_back({i, -1, active[i].score + lp[0]});
        if (!last_round)
          for (int v = 1; v < row.cols; ++v) {
            if (v - 1 < kNumSpecials) continue;  // specials are never emitted
            actions.push_back({i, v - 1, active[i].score + lp[std::size_t(v)]});
          }
      }
      std::stable_sort(actions.begin(), actions.end(), [](const Action& a, const Action& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.parent != b.parent) return a.parent < b.parent;
        return a.token < b.token;
      });
      if (int(actions.size()) > beam_size) actions.resize(std::size_t(beam_size));

      std::vector<Item> next_active;
      for (const auto& a : actions) {
        Item item = active[a.parent];
        item.score = a.score;
        if (a.token < 0) {
          merge_into(frozen, std::move(item));
        } else {
          item.tokens.push_back(a.token);
          item.pred_state = inf.predictor_advance(item.pred_state, a.token);
          next_active.push_back(std::move(item));
        }
      }
      active = std::move(next_active);
    }
    std::stable_sort(frozen.begin(), frozen.end(), [](const Item& a, const Item& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.tokens < b.tokens;
    });
    if (int(frozen.size()) > beam_size) frozen.resize(std::size_t(beam_size));
    current = std::move(frozen);
    if (current.empty()) throw Error("transducer search lost all hypotheses");
  }

  Hypothesis hyp;
  hyp.tokens.vocab_name = "tgt";
  hyp.tokens.ids = current.front().tokens;
  hyp.score = current.front().score;
  return hyp;
}

}  // namespace dsmt
