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
// Unigram-LM subword tokenization over atomic unit symbols, in the spirit of
// Kudo 2018: seed candidates from frequent substrings, EM over the
// segmentation lattice, iterative pruning down to the target size. Atomic
// symbols are either rendered cluster ids ("u17") or single text characters,
// so a piece is a short symbol sequence.
//
// Model file: one "piece<TAB>log_prob" line per piece, UTF-8, specials first.
// Vocabulary file: one token per line.

#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dsmt/common.hpp"
#include "dsmt/kmeans.hpp"

namespace dsmt {

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kBlankId = 4;
inline constexpr int kNumSpecials = 5;
inline const char* const kSpecialTokens[kNumSpecials] = {"<pad>", "<bos>", "<eos>", "<unk>",
                                                         "<blk>"};
inline constexpr int kMaxPieceLen = 8;

struct UnitString {
  std::vector<std::string> symbols;
};

struct Vocabulary {
  std::string name;
  std::vector<std::string> id_to_token;  // ids 0..4 are the specials, fixed order

  int size() const { return int(id_to_token.size()); }
};

struct TokenSequence {
  std::string vocab_name;
  std::vector<int> ids;

  bool operator==(const TokenSequence& o) const {
    return vocab_name == o.vocab_name && ids == o.ids;
  }
};

struct UnigramModel {
  std::vector<std::string> alphabet;  // atomic symbols, stable order
  struct Piece {
    std::vector<int> syms;  // indices into alphabet; empty for specials
    double log_prob = 0.0;
  };
  std::vector<Piece> pieces;  // ids align with the rendered Vocabulary

  int size() const { return int(pieces.size()); }

  std::string render(int id) const {
    if (id < kNumSpecials) return kSpecialTokens[id];
    std::string s;
    for (int sym : pieces[std::size_t(id)].syms) s += alphabet[std::size_t(sym)];
    return s;
  }
};

inline ClusterSequence collapse_repeats(const ClusterSequence& seq) {
  if (seq.ids.empty()) throw ValidationError("collapse_repeats: empty input");
  ClusterSequence out;
  out.utterance_id = seq.utterance_id;
  out.ids.push_back(seq.ids[0]);
  for (std::size_t i = 1; i < seq.ids.size(); ++i)
    if (seq.ids[i] != out.ids.back()) out.ids.push_back(seq.ids[i]);
  return out;
}

inline UnitString cluster_units(const ClusterSequence& seq) {
  UnitString s;
  s.symbols.reserve(seq.ids.size());
  for (int id : seq.ids) s.symbols.push_back("u" + std::to_string(id));
  return s;
}

// UTF-8 string -> one symbol per codepoint.
inline UnitString text_units(const std::string& text) {
  UnitString s;
  std::size_t i = 0;
  while (i < text.size()) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    std::size_t n = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : 4;
    n = std::min(n, text.size() - i);
    s.symbols.push_back(text.substr(i, n));
    i += n;
  }
  return s;
}

inline std::string render_units(const UnitString& s) {
  std::string out;
  for (const auto& sym : s.symbols) out += sym;
  return out;
}

namespace detail {

inline std::string sym_key(const std::vector<int>& syms, std::size_t begin, std::size_t len) {
  return std::string(reinterpret_cast<const char*>(syms.data() + begin), len * sizeof(int));
}

struct PieceIndex {
  std::unordered_map<std::string, int> by_syms;  // sym_key -> piece id

  void add(const UnigramModel::Piece& p, int id) {
    if (!p.syms.empty()) by_syms.emplace(sym_key(p.syms, 0, p.syms.size()), id);
  }
  int find(const std::vector<int>& syms, std::size_t begin, std::size_t len) const {
    auto it = by_syms.find(sym_key(syms, begin, len));
    return it == by_syms.end() ? -1 : it->second;
  }
};

inline PieceIndex build_index(const UnigramModel& model) {
  PieceIndex idx;
  for (int i = kNumSpecials; i < model.size(); ++i) idx.add(model.pieces[std::size_t(i)], i);
  return idx;
}

inline std::vector<int> to_sym_ids(const UnigramModel& model, const UnitString& s,
                                   bool* has_unknown = nullptr) {
  std::map<std::string, int> sym_of;
  for (int i = 0; i < int(model.alphabet.size()); ++i) sym_of[model.alphabet[std::size_t(i)]] = i;
  std::vector<int> ids;
  ids.reserve(s.symbols.size());
  for (const auto& sym : s.symbols) {
    auto it = sym_of.find(sym);
    if (it == sym_of.end()) {
      ids.push_back(-1);
      if (has_unknown) *has_unknown = true;
    } else {
      ids.push_back(it->second);
    }
  }
  return ids;
}

// Unknown symbols cost a little worse than the rarest live piece. Pieces EM
// starved to -inf are ignored so the penalty stays finite.
inline double unk_score(const UnigramModel& model) {
  double lo = 0;
  for (int i = kNumSpecials; i < model.size(); ++i) {
    double lp = model.pieces[std::size_t(i)].log_prob;
    if (std::isfinite(lp)) lo = std::min(lo, lp);
  }
  return lo - 10.0;
}

}  // namespace detail

/// Trains a unigram piece model. target_size counts specials plus all
/// single-symbol pieces plus learned multi-symbol pieces. When given,
/// em_loglik_history receives one corpus log-likelihood trajectory per
/// pruning round.
inline UnigramModel unigram_train(const std::vector<UnitString>& corpus, int target_size,
                                  int seed_size = 0, int em_iters = 2, double prune_keep = 0.75,
                                  std::vector<std::vector<double>>* em_loglik_history = nullptr) {
  if (corpus.empty()) throw ValidationError("unigram_train: empty corpus");
  if (em_iters < 1) throw ConfigError("em_iters must be >= 1");
  if (!(prune_keep > 0 && prune_keep < 1)) throw ConfigError("prune_keep must be in (0,1)");

  // Alphabet = sorted set of symbols seen in the corpus.
  std::set<std::string> alpha_set;
  for (const auto& s : corpus)
    for (const auto& sym : s.symbols) alpha_set.insert(sym);
  UnigramModel model;
  model.alphabet.assign(alpha_set.begin(), alpha_set.end());
  const int n_alpha = int(model.alphabet.size());
  if (target_size < n_alpha + kNumSpecials)
    throw ConfigError("target_size smaller than alphabet plus specials");
  if (seed_size <= 0) seed_size = 16 * target_size;

  // Deduplicated corpus in symbol-id space.
  std::map<std::vector<int>, long long> sentences;
  for (const auto& s : corpus) {
    bool unk = false;
    std::vector<int> ids = detail::to_sym_ids(model, s, &unk);
    if (!ids.empty()) sentences[ids] += 1;
  }

  // Candidate substrings of length 2..kMaxPieceLen scored by count*length.
  std::map<std::vector<int>, long long> substr_count;
  for (const auto& [sent, cnt] : sentences) {
    for (std::size_t i = 0; i < sent.size(); ++i)
      for (std::size_t len = 2; len <= kMaxPieceLen && i + len <= sent.size(); ++len)
        substr_count[std::vector<int>(sent.begin() + long(i), sent.begin() + long(i + len))] += cnt;
  }
  std::vector<std::pair<double, std::vector<int>>> ranked;
  ranked.reserve(substr_count.size());
  for (const auto& [syms, cnt] : substr_count)
    ranked.emplace_back(double(cnt) * double(syms.size()), syms);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  int max_multi = std::max(0, seed_size - n_alpha);
  if (int(ranked.size()) > max_multi) ranked.resize(std::size_t(max_multi));

  // Initial model: specials, all singles, seeded multis. Initial probabilities
  // from the substring scores.
  for (int i = 0; i < kNumSpecials; ++i) model.pieces.push_back({{}, 0.0});
  double total_score = 0;
  std::map<std::vector<int>, long long> single_count;
  for (const auto& [sent, cnt] : sentences)
    for (int sym : sent) single_count[{sym}] += cnt;
  for (int a = 0; a < n_alpha; ++a) total_score += double(single_count[{a}]);
  for (const auto& [score, syms] : ranked) total_score += score;
  for (int a = 0; a < n_alpha; ++a) {
    double c = std::max(1.0, double(single_count[{a}]));
    model.pieces.push_back({{a}, std::log(c / total_score)});
  }
  for (const auto& [score, syms] : ranked)
    model.pieces.push_back({syms, std::log(score / total_score)});

  detail::PieceIndex index = detail::build_index(model);

  // One EM pass: E over every sentence lattice, exact ML M-step.
  // Returns the corpus log-likelihood under the model it started from and
  // fills expected counts.
  auto em_step = [&](std::vector<double>* expected) -> double {
    std::vector<double>& e = *expected;
    e.assign(std::size_t(model.size()), 0.0);
    double loglik = 0;
    for (const auto& [sent, cnt] : sentences) {
      const std::size_t n = sent.size();
      std::vector<double> fwd(n + 1, kNegInf), bwd(n + 1, kNegInf);
      fwd[0] = 0;
      for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t len = 1; len <= kMaxPieceLen && len <= i; ++len) {
          int p = index.find(sent, i - len, len);
          if (p < 0) continue;
          fwd[i] = log_sum_exp(fwd[i], fwd[i - len] + model.pieces[std::size_t(p)].log_prob);
        }
      bwd[n] = 0;
      for (std::size_t i = n; i-- > 0;)
        for (std::size_t len = 1; len <= kMaxPieceLen && i + len <= n; ++len) {
          int p = index.find(sent, i, len);
          if (p < 0) continue;
          bwd[i] = log_sum_exp(bwd[i], model.pieces[std::size_t(p)].log_prob + bwd[i + len]);
        }
      const double z = fwd[n];
      loglik += double(cnt) * z;
      for (std::size_t i = 0; i < n; ++i) {
        if (fwd[i] == kNegInf) continue;
        for (std::size_t len = 1; len <= kMaxPieceLen && i + len <= n; ++len) {
          int p = index.find(sent, i, len);
          if (p < 0) continue;
          double post = fwd[i] + model.pieces[std::size_t(p)].log_prob + bwd[i + len] - z;
          e[std::size_t(p)] += double(cnt) * std::exp(post);
        }
      }
    }
    double total = 0;
    for (int i = kNumSpecials; i < model.size(); ++i) total += e[std::size_t(i)];
    for (int i = kNumSpecials; i < model.size(); ++i) {
      double c = e[std::size_t(i)];
      // Single-symbol pieces are floored so every symbol stays encodable even
      // when larger pieces absorb all their posterior mass; the floor binds
      // only below 1e-30 of the total, far under any likelihood tolerance.
      if (model.pieces[std::size_t(i)].syms.size() == 1) c = std::max(c, 1e-30 * total);
      model.pieces[std::size_t(i)].log_prob = c > 0 ? std::log(c) - std::log(total) : kNegInf;
    }
    return loglik;
  };

  std::vector<double> expected;
  while (true) {
    std::vector<double> round_logliks;
    for (int it = 0; it < em_iters; ++it) round_logliks.push_back(em_step(&expected));
    if (em_loglik_history) em_loglik_history->push_back(std::move(round_logliks));
    if (model.size() <= target_size) break;

    // Prune the multi-symbol pieces with the lowest likelihood loss. The loss
    // of a piece is its expected count times the score gap to its best
    // segmentation by other pieces.
    struct Cand {
      double loss;
      int id;
    };
    std::vector<Cand> cands;
    for (int pid = kNumSpecials; pid < model.size(); ++pid) {
      const auto& piece = model.pieces[std::size_t(pid)];
      if (piece.syms.size() <= 1) continue;
      const std::size_t n = piece.syms.size();
      std::vector<double> best(n + 1, kNegInf);
      best[0] = 0;
      for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t len = 1; len <= kMaxPieceLen && len <= i; ++len) {
          int p = index.find(piece.syms, i - len, len);
          if (p < 0 || p == pid) continue;
          best[i] = std::max(best[i], best[i - len] + model.pieces[std::size_t(p)].log_prob);
        }
      double alt = best[n];
      double freq = expected[std::size_t(pid)];
      cands.push_back({freq * (piece.log_prob - alt), pid});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.loss != b.loss) return a.loss > b.loss;
      return a.id < b.id;
    });
    int n_multi = int(cands.size());
    int keep = std::min(n_multi - 1, int(prune_keep * n_multi));
    keep = std::max(keep, target_size - kNumSpecials - n_alpha);
    std::set<int> kept;
    for (int i = 0; i < keep; ++i) kept.insert(cands[std::size_t(i)].id);

    UnigramModel next;
    next.alphabet = model.alphabet;
    for (int pid = 0; pid < model.size(); ++pid) {
      if (pid >= kNumSpecials && model.pieces[std::size_t(pid)].syms.size() > 1 &&
          kept.count(pid) == 0)
        continue;
      next.pieces.push_back(model.pieces[std::size_t(pid)]);
    }
    model = std::move(next);
    index = detail::build_index(model);
  }
  return model;
}

namespace detail {

struct Lattice {
  // Per position i in [0,n]: list of (start j, piece id, score) edges ending
  // at i. Unknown symbols are covered by a single unk edge.
  struct Edge {
    int start;
    int piece;  // kUnkId for unknown symbols
    double score;
  };
  std::vector<std::vector<Edge>> in;  // size n+1
  std::size_t n = 0;
};

inline Lattice build_lattice(const UnigramModel& model, const PieceIndex& index,
                             const std::vector<int>& syms) {
  Lattice lat;
  lat.n = syms.size();
  lat.in.assign(lat.n + 1, {});
  const double unk = unk_score(model);
  for (std::size_t i = 1; i <= lat.n; ++i) {
    for (std::size_t len = 1; len <= kMaxPieceLen && len <= i; ++len) {
      bool any_unknown = false;
      for (std::size_t k = i - len; k < i; ++k)
        if (syms[k] < 0) any_unknown = true;
      if (any_unknown) {
        if (len == 1) lat.in[i].push_back({int(i - 1), kUnkId, unk});
        continue;
      }
      int p = index.find(syms, i - len, len);
      if (p >= 0) lat.in[i].push_back({int(i - len), p, model.pieces[std::size_t(p)].log_prob});
    }
  }
  return lat;
}

}  // namespace detail

/// Maximum-likelihood segmentation. Ties broken by fewer pieces, then by the
/// lexicographically smallest piece id sequence. Suffix scores are
/// right-associated sums so equal-score paths compare exactly.
inline TokenSequence encode_viterbi(const UnigramModel& model, const UnitString& s,
                                    const std::string& vocab_name = "") {
  detail::PieceIndex index = detail::build_index(model);
  std::vector<int> syms = detail::to_sym_ids(model, s);
  detail::Lattice lat = detail::build_lattice(model, index, syms);
  const std::size_t n = lat.n;

  // Best score / min piece count from position i to the end.
  std::vector<double> score(n + 1, kNegInf);
  std::vector<int> count(n + 1, 1 << 30);
  score[n] = 0;
  count[n] = 0;
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = i + 1; j <= std::min(n, i + kMaxPieceLen); ++j)
      for (const auto& e : lat.in[j]) {
        if (std::size_t(e.start) != i) continue;
        double sc = e.score + score[j];
        if (sc > score[i]) {
          score[i] = sc;
          count[i] = 1 + count[j];
        } else if (sc == score[i]) {
          count[i] = std::min(count[i], 1 + count[j]);
        }
      }
  }
  if (n > 0 && score[0] == kNegInf)
    throw ValidationError("encode_viterbi: no segmentation covers the input");

  TokenSequence out;
  out.vocab_name = vocab_name;
  std::size_t i = 0;
  while (i < n) {
    int best_piece = -1;
    std::size_t best_end = i;
    for (std::size_t j = i + 1; j <= std::min(n, i + kMaxPieceLen); ++j)
      for (const auto& e : lat.in[j]) {
        if (std::size_t(e.start) != i) continue;
        if (e.score + score[j] != score[i] || 1 + count[j] != count[i]) continue;
        if (best_piece < 0 || e.piece < best_piece) {
          best_piece = e.piece;
          best_end = j;
        }
      }
    out.ids.push_back(best_piece);
    i = best_end;
  }
  return out;
}

/// Samples a segmentation with probability proportional to
/// (segmentation probability)^alpha, by forward filtering / backward sampling
/// over the lattice. Deterministic given seed.
inline TokenSequence encode_sampled(const UnigramModel& model, const UnitString& s, double alpha,
                                    std::uint64_t seed, const std::string& vocab_name = "") {
  if (!(alpha > 0)) throw ConfigError("alpha must be > 0");
  detail::PieceIndex index = detail::build_index(model);
  std::vector<int> syms = detail::to_sym_ids(model, s);
  detail::Lattice lat = detail::build_lattice(model, index, syms);
  const std::size_t n = lat.n;

  std::vector<double> fwd(n + 1, kNegInf);
  fwd[0] = 0;
  for (std::size_t i = 1; i <= n; ++i)
    for (const auto& e : lat.in[i])
      fwd[i] = log_sum_exp(fwd[i], fwd[std::size_t(e.start)] + alpha * e.score);
  if (n > 0 && fwd[n] == kNegInf)
    throw ValidationError("encode_sampled: no segmentation covers the input");

  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<int> rev;
  std::size_t i = n;
  while (i > 0) {
    double r = unif(rng), acc = 0;
    const auto& edges = lat.in[i];
    std::size_t chosen = edges.size() - 1;
    for (std::size_t k = 0; k < edges.size(); ++k) {
      acc += std::exp(fwd[std::size_t(edges[k].start)] + alpha * edges[k].score - fwd[i]);
      if (acc >= r) {
        chosen = k;
        break;
      }
    }
    rev.push_back(edges[chosen].piece);
    i = std::size_t(edges[chosen].start);
  }
  TokenSequence out;
  out.vocab_name = vocab_name;
  out.ids.assign(rev.rbegin(), rev.rend());
  return out;
}

inline UnitString decode(const UnigramModel& model, const TokenSequence& t) {
  std::vector<std::size_t> bad;
  for (std::size_t i = 0; i < t.ids.size(); ++i)
    if (t.ids[i] < kNumSpecials) bad.push_back(i);
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << "decode: special/unk piece at positions";
    for (auto p : bad) msg << ' ' << p;
    throw ValidationError(msg.str());
  }
  UnitString out;
  for (int id : t.ids) {
    if (id >= model.size()) throw IndexError("decode: piece id out of range");
    for (int sym : model.pieces[std::size_t(id)].syms)
      out.symbols.push_back(model.alphabet[std::size_t(sym)]);
  }
  return out;
}

inline TokenSequence upsample_text(const TokenSequence& t, int factor) {
  if (factor < 1) throw ConfigError("upsample factor must be >= 1");
  TokenSequence out;
  out.vocab_name = t.vocab_name;
  out.ids.reserve(t.ids.size() * std::size_t(factor));
  for (int id : t.ids)
    for (int r = 0; r < factor; ++r) out.ids.push_back(id);
  return out;
}

inline Vocabulary vocabulary(const UnigramModel& model, const std::string& name) {
  Vocabulary v;
  v.name = name;
  for (int i = 0; i < model.size(); ++i) v.id_to_token.push_back(model.render(i));
  return v;
}

/// V_cross = specials, then speech tokens namespaced "spe:", then source text
/// tokens namespaced "src:", both in their original id order.
inline Vocabulary build_joint_vocab(const Vocabulary& v_spe, const Vocabulary& v_src) {
  Vocabulary v;
  v.name = "cross";
  std::set<std::string> seen;
  for (int i = 0; i < kNumSpecials; ++i) v.id_to_token.emplace_back(kSpecialTokens[i]);
  for (int i = kNumSpecials; i < v_spe.size(); ++i) {
    std::string tok = "spe:" + v_spe.id_to_token[std::size_t(i)];
    if (!seen.insert(tok).second) throw Error("joint vocab collision: " + tok);
    v.id_to_token.push_back(std::move(tok));
  }
  for (int i = kNumSpecials; i < v_src.size(); ++i) {
    std::string tok = "src:" + v_src.id_to_token[std::size_t(i)];
    if (!seen.insert(tok).second) throw Error("joint vocab collision: " + tok);
    v.id_to_token.push_back(std::move(tok));
  }
  return v;
}

inline int cross_id_of_speech(int spe_id) { return spe_id; }

inline int cross_id_of_src(const Vocabulary& v_spe, int src_id) {
  if (src_id < kNumSpecials) return src_id;
  return v_spe.size() + src_id - kNumSpecials;
}

inline TokenSequence cross_map_speech(const TokenSequence& t) {
  TokenSequence out = t;
  out.vocab_name = "cross";
  return out;
}

inline TokenSequence cross_map_src(const Vocabulary& v_spe, const TokenSequence& t) {
  TokenSequence out;
  out.vocab_name = "cross";
  out.ids.reserve(t.ids.size());
  for (int id : t.ids) out.ids.push_back(cross_id_of_src(v_spe, id));
  return out;
}

inline void save_vocab(const Vocabulary& v, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  for (const auto& tok : v.id_to_token) os << tok << '\n';
}

inline Vocabulary load_vocab(const std::filesystem::path& path, const std::string& name) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  Vocabulary v;
  v.name = name;
  std::string line;
  while (std::getline(is, line)) v.id_to_token.push_back(line);
  for (int i = 0; i < kNumSpecials; ++i)
    if (v.size() <= i || v.id_to_token[std::size_t(i)] != kSpecialTokens[i])
      throw FormatError("vocabulary file missing canonical specials");
  return v;
}

inline void save_unigram(const UnigramModel& model, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.precision(17);
  for (int i = 0; i < model.size(); ++i)
    os << model.render(i) << '\t' << model.pieces[std::size_t(i)].log_prob << '\n';
}

/// Pieces are re-split into atomic symbols: "u<digits>" runs when every
/// non-special piece parses that way (cluster-unit models), single UTF-8
/// codepoints otherwise.
inline UnigramModel load_unigram(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  std::vector<std::pair<std::string, double>> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError("unigram model line missing tab");
    lines.emplace_back(line.substr(0, tab), std::stod(line.substr(tab + 1)));
  }
  if (int(lines.size()) < kNumSpecials) throw FormatError("unigram model too short");
  for (int i = 0; i < kNumSpecials; ++i)
    if (lines[std::size_t(i)].first != kSpecialTokens[i])
      throw FormatError("unigram model missing canonical specials");

  auto parse_cluster = [](const std::string& text, std::vector<std::string>* out) {
    std::size_t i = 0;
    while (i < text.size()) {
      if (text[i] != 'u') return false;
      std::size_t j = i + 1;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      if (j == i + 1) return false;
      if (out) out->push_back(text.substr(i, j - i));
      i = j;
    }
    return true;
  };
  bool cluster_style = true;
  for (std::size_t i = kNumSpecials; i < lines.size(); ++i)
    if (!parse_cluster(lines[i].first, nullptr)) cluster_style = false;

  UnigramModel model;
  std::map<std::string, int> sym_of;
  std::vector<std::vector<std::string>> split(lines.size());
  for (std::size_t i = kNumSpecials; i < lines.size(); ++i) {
    if (cluster_style)
      parse_cluster(lines[i].first, &split[i]);
    else
      split[i] = text_units(lines[i].first).symbols;
    for (const auto& sym : split[i]) sym_of.emplace(sym, 0);
  }
  int next = 0;
  for (auto& [sym, id] : sym_of) {
    id = next++;
    model.alphabet.push_back(sym);
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    UnigramModel::Piece p;
    p.log_prob = lines[i].second;
    for (const auto& sym : split[i]) p.syms.push_back(sym_of[sym]);
    model.pieces.push_back(std::move(p));
  }
  return model;
}

}  // namespace dsmt
