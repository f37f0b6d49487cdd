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
// Training triplets, task mixing, and token-budget batching. The origin tag
// is bookkeeping only; nothing derived from it ever reaches model inputs.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "dsmt/common.hpp"
#include "dsmt/tokenizer.hpp"

namespace dsmt {

enum class Origin { ST, MT };

struct Triplet {
  std::string utterance_id;
  TokenSequence x;      // over V_cross
  TokenSequence y_src;  // over V_src
  TokenSequence y_tgt;  // over V_tgt
  Origin origin = Origin::ST;
};

struct ManifestRow {
  std::string id;
  std::string input;  // feature path or raw text
  std::string src;
  std::string tgt;
};

struct Manifest {
  std::vector<ManifestRow> rows;
};

/// UTF-8 TSV, columns: id, input (path or text), src, tgt.
inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest: " + path.string());
  Manifest m;
  std::set<std::string> ids;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    ManifestRow row;
    std::size_t p0 = line.find('\t');
    std::size_t p1 = p0 == std::string::npos ? p0 : line.find('\t', p0 + 1);
    std::size_t p2 = p1 == std::string::npos ? p1 : line.find('\t', p1 + 1);
    if (p2 == std::string::npos) throw FormatError("manifest row needs 4 tab-separated columns");
    row.id = line.substr(0, p0);
    row.input = line.substr(p0 + 1, p1 - p0 - 1);
    row.src = line.substr(p1 + 1, p2 - p1 - 1);
    row.tgt = line.substr(p2 + 1);
    if (!ids.insert(row.id).second) throw ValidationError("duplicate manifest id: " + row.id);
    m.rows.push_back(std::move(row));
  }
  return m;
}

/// Derives the MT twin of an ST triplet: the input is the up-sampled source
/// text mapped into the joint vocabulary; transcripts are copied verbatim.
inline Triplet make_mt_example(const Triplet& st, int factor, const Vocabulary& v_spe) {
  if (st.origin != Origin::ST) throw ValidationError("make_mt_example: input is already MT");
  if (factor < 1) throw ConfigError("upsample factor must be >= 1");
  Triplet mt;
  mt.utterance_id = st.utterance_id + "#mt";
  mt.x = cross_map_src(v_spe, upsample_text(st.y_src, factor));
  mt.y_src = st.y_src;
  mt.y_tgt = st.y_tgt;
  mt.origin = Origin::MT;
  return mt;
}

/// Concatenation plus a seeded shuffle. No reweighting: equal task weighting
/// is realized purely by example counts.
inline std::vector<Triplet> mix_datasets(const std::vector<Triplet>& st,
                                         const std::vector<Triplet>& mt, std::uint64_t seed) {
  for (const auto& t : st)
    if (t.x.vocab_name != "cross") throw ConfigError("mix_datasets: ST inputs not over V_cross");
  for (const auto& t : mt)
    if (t.x.vocab_name != "cross") throw ConfigError("mix_datasets: MT inputs not over V_cross");
  std::vector<Triplet> all;
  all.reserve(st.size() + mt.size());
  all.insert(all.end(), st.begin(), st.end());
  all.insert(all.end(), mt.begin(), mt.end());
  Rng rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  return all;
}

struct Batch {
  std::vector<Triplet> items;
  int max_len = 0;  // max |x| within the batch

  /// Padded input id matrix, one row per item, pad id on the right. This is
  /// the whole model-input surface; origin tags are not part of it.
  std::vector<std::vector<int>> padded_x() const {
    std::vector<std::vector<int>> out;
    out.reserve(items.size());
    for (const auto& t : items) {
      std::vector<int> row = t.x.ids;
      row.resize(std::size_t(max_len), kPadId);
      out.push_back(std::move(row));
    }
    return out;
  }
};

struct BatchPlan {
  std::vector<Batch> batches;
  std::vector<std::size_t> skipped;  // indices of triplets longer than max_tokens
};

/// Length-bucketed batching under a token budget:
/// batch_size * max(|x| in batch) <= max_tokens. Every non-skipped triplet
/// appears exactly once.
inline BatchPlan batch(const std::vector<Triplet>& data, int max_tokens, std::uint64_t seed) {
  if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
  BatchPlan plan;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data[a].x.ids.size() < data[b].x.ids.size();
  });

  Batch cur;
  for (std::size_t idx : order) {
    const Triplet& t = data[idx];
    int len = int(t.x.ids.size());
    if (len > max_tokens) {
      plan.skipped.push_back(idx);
      continue;
    }
    int new_max = std::max(cur.max_len, len);
    if (!cur.items.empty() && int(cur.items.size() + 1) * new_max > max_tokens) {
      plan.batches.push_back(std::move(cur));
      cur = Batch{};
      new_max = len;
    }
    cur.items.push_back(t);
    cur.max_len = new_max;
  }
  if (!cur.items.empty()) plan.batches.push_back(std::move(cur));

  Rng rng(seed);
  std::shuffle(plan.batches.begin(), plan.batches.end(), rng);
  return plan;
}

}  // namespace dsmt
