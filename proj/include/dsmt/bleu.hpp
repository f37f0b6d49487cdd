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
// Corpus-level case-sensitive BLEU-4 with the mteval-v13a international
// tokenization, applied identically to hypotheses and references:
//   1. every ASCII punctuation character except '.', ',', '-', '\'' is
//      space-separated;
//   2. '.' and ',' are split off unless both neighbours are digits;
//   3. '-' is split when preceded by a digit;
//   4. whitespace is squeezed.
// No smoothing: any zero n-gram precision zeroes the score.

#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "dsmt/common.hpp"

namespace dsmt {

struct BleuReport {
  double bleu = 0;  // 0..100
  std::array<double, 4> precisions{};
  double brevity_penalty = 1.0;
  long long hyp_length = 0;
  long long ref_length = 0;
};

inline std::vector<std::string> bleu_tokenize(const std::string& text) {
  auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
  auto is_split_punct = [](char c) {
    return std::ispunct(static_cast<unsigned char>(c)) && c != '.' && c != ',' && c != '-' &&
           c != '\'';
  };
  std::string spaced;
  const std::size_t n = text.size();
  for (std::size_t i = 0; i < n; ++i) {
    char c = text[i];
    bool prev_digit = i > 0 && is_digit(text[i - 1]);
    bool next_digit = i + 1 < n && is_digit(text[i + 1]);
    if (is_split_punct(c)) {
      spaced += ' ';
      spaced += c;
      spaced += ' ';
    } else if ((c == '.' || c == ',') && !(prev_digit && next_digit)) {
      spaced += ' ';
      spaced += c;
      spaced += ' ';
    } else if (c == '-' && prev_digit) {
      spaced += ' ';
      spaced += c;
      spaced += ' ';
    } else {
      spaced += c;
    }
  }
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : spaced) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

inline BleuReport bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  if (hyps.empty()) throw ValidationError("bleu: empty hypothesis list");
  if (hyps.size() != refs.size()) throw ValidationError("bleu: |hyps| != |refs|");

  BleuReport rep;
  std::array<long long, 4> matched{}, total{};
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    std::vector<std::string> h = bleu_tokenize(hyps[s]);
    std::vector<std::string> r = bleu_tokenize(refs[s]);
    rep.hyp_length += (long long)h.size();
    rep.ref_length += (long long)r.size();
    for (int order = 1; order <= 4; ++order) {
      std::map<std::vector<std::string>, long long> hc, rc;
      for (std::size_t i = 0; i + std::size_t(order) <= h.size(); ++i)
        hc[std::vector<std::string>(h.begin() + long(i), h.begin() + long(i) + order)]++;
      for (std::size_t i = 0; i + std::size_t(order) <= r.size(); ++i)
        rc[std::vector<std::string>(r.begin() + long(i), r.begin() + long(i) + order)]++;
      for (const auto& [gram, count] : hc) {
        total[std::size_t(order - 1)] += count;
        auto it = rc.find(gram);
        if (it != rc.end())
          matched[std::size_t(order - 1)] += std::min(count, it->second);
      }
    }
  }

  bool any_zero = false;
  double log_sum = 0;
  for (int k = 0; k < 4; ++k) {
    double p = total[std::size_t(k)] > 0
                   ? double(matched[std::size_t(k)]) / double(total[std::size_t(k)])
                   : 0.0;
    rep.precisions[std::size_t(k)] = p;
    if (p <= 0)
      any_zero = true;
    else
      log_sum += std::log(p);
  }
  if (rep.hyp_length == 0) {
    rep.brevity_penalty = 0;
    rep.bleu = 0;
    return rep;
  }
  rep.brevity_penalty = rep.hyp_length < rep.ref_length
                            ? std::exp(1.0 - double(rep.ref_length) / double(rep.hyp_length))
                            : 1.0;
  rep.bleu = any_zero ? 0.0 : 100.0 * rep.brevity_penalty * std::exp(log_sum / 4.0);
  return rep;
}

}  // namespace dsmt
