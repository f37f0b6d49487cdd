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
// Continuous feature frames on disk plus a synthetic corpus generator with a
// known latent cluster structure, used as the ground-truth substrate for the
// discretization pipeline.
//
// Feature file format (little-endian, exact, no padding):
//   magic "DSQF" | version u8 = 1 | D u32 | T u32 | T*D float32 row-major

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dsmt/common.hpp"
#include "dsmt/mat.hpp"

namespace dsmt {

inline constexpr double kDefaultFrameRateHz = 50.0;

struct FeatureSequence {
  std::string utterance_id;
  Mat<float> frames;  // T x D
  double frame_rate_hz = kDefaultFrameRateHz;

  bool operator==(const FeatureSequence& o) const {
    return utterance_id == o.utterance_id && frame_rate_hz == o.frame_rate_hz &&
           frames.rows == o.frames.rows && frames.cols == o.frames.cols &&
           std::memcmp(frames.data.data(), o.frames.data.data(),
                       frames.size() * sizeof(float)) == 0;
  }
};

struct SynthSpec {
  int n_latent_clusters = 8;
  int dim = 4;
  double noise_stddev = 0.0;
  std::pair<int, int> frames_per_unit = {2, 4};
  // Source symbol -> latent cluster id sequence. Keys double as the source
  // alphabet when sampling utterances.
  std::map<char, std::vector<int>> latent_grammar;
  std::pair<int, int> symbols_per_utt = {3, 8};
};

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw TruncationError("unexpected end of file in header");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

}  // namespace detail

inline void validate(const FeatureSequence& seq) {
  if (seq.frames.rows < 1 || seq.frames.cols < 1)
    throw ValidationError("feature sequence must have T >= 1 and D >= 1");
  if (!seq.frames.all_finite())
    throw ValidationError("feature sequence contains non-finite values");
  if (!(seq.frame_rate_hz > 0)) throw ValidationError("frame_rate_hz must be positive");
}

inline void write_features(const FeatureSequence& seq, const std::filesystem::path& path) {
  validate(seq);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.write("DSQF", 4);
  os.put(char(1));
  detail::write_u32(os, std::uint32_t(seq.frames.cols));
  detail::write_u32(os, std::uint32_t(seq.frames.rows));
  static_assert(sizeof(float) == 4);
  os.write(reinterpret_cast<const char*>(seq.frames.data.data()),
           std::streamsize(seq.frames.size() * 4));
  if (!os) throw IoError("write failed: " + path.string());
}

inline FeatureSequence read_features(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "DSQF", 4) != 0)
    throw FormatError("bad magic in feature file: " + path.string());
  int version = is.get();
  if (version != 1) throw FormatError("unsupported feature file version");
  std::uint32_t d = detail::read_u32(is);
  std::uint32_t t = detail::read_u32(is);
  if (d < 1 || t < 1) throw FormatError("feature file declares empty matrix");
  FeatureSequence seq;
  seq.utterance_id = path.stem().string();
  seq.frames = Mat<float>(int(t), int(d));
  is.read(reinterpret_cast<char*>(seq.frames.data.data()), std::streamsize(seq.frames.size() * 4));
  if (std::size_t(is.gcount()) != seq.frames.size() * 4)
    throw TruncationError("feature payload shorter than T*D*4 bytes: " + path.string());
  if (is.peek() != std::ifstream::traits_type::eof())
    throw FormatError("trailing bytes after feature payload: " + path.string());
  if (!seq.frames.all_finite()) throw ValidationError("feature payload contains NaN/Inf");
  return seq;
}

// Latent centroids for a synthetic corpus. Redrawn until the pairwise
// separation is at least 10x the noise level so nearest-centroid recovery is
// exact by construction; scaled as a last resort.
inline Mat<double> synth_centroids(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.n_latent_clusters < 2) throw ConfigError("need at least 2 latent clusters");
  Rng rng(derive_seed(seed, 0xC3));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double min_sep = 10.0 * spec.noise_stddev;
  Mat<double> c;
  for (int attempt = 0; attempt < 64; ++attempt) {
    c = Mat<double>(spec.n_latent_clusters, spec.dim);
    for (double& v : c.data) v = gauss(rng);
    double min_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < c.rows; ++i)
      for (int j = i + 1; j < c.rows; ++j) {
        double d2 = 0;
        for (int k = 0; k < c.cols; ++k) {
          double diff = c(i, k) - c(j, k);
          d2 += diff * diff;
        }
        min_d = std::min(min_d, std::sqrt(d2));
      }
    if (min_d >= min_sep) return c;
    if (attempt == 63 && min_d > 0) {
      c.map() *= min_sep / min_d;
      return c;
    }
  }
  return c;
}

struct SynthUtterance {
  FeatureSequence features;
  std::vector<int> latent_ids;  // per frame
  std::string source_symbols;
};

/// Generates a corpus whose frames are noisy copies of per-cluster centroids.
/// Pure function of (spec, n_utts, seed).
inline std::vector<SynthUtterance> synth_corpus(const SynthSpec& spec, int n_utts,
                                                std::uint64_t seed) {
  if (spec.n_latent_clusters < 2) throw ConfigError("need at least 2 latent clusters");
  if (n_utts < 1) throw ConfigError("n_utts must be >= 1");
  if (spec.latent_grammar.empty()) throw ConfigError("latent_grammar must be nonempty");
  if (spec.frames_per_unit.first < 1 || spec.frames_per_unit.first > spec.frames_per_unit.second)
    throw ConfigError("frames_per_unit bounds invalid");
  if (spec.dim < 1) throw ConfigError("dim must be >= 1");
  for (const auto& [sym, ids] : spec.latent_grammar) {
    if (ids.empty()) throw ConfigError("grammar entry with empty id sequence");
    for (int id : ids)
      if (id < 0 || id >= spec.n_latent_clusters)
        throw ConfigError("grammar id out of range");
  }

  const Mat<double> centroids = synth_centroids(spec, seed);
  std::vector<char> alphabet;
  for (const auto& [sym, ids] : spec.latent_grammar) alphabet.push_back(sym);

  std::vector<SynthUtterance> corpus;
  corpus.reserve(n_utts);
  for (int u = 0; u < n_utts; ++u) {
    Rng rng(derive_seed(seed, 0x5u + std::uint64_t(u)));
    std::uniform_int_distribution<int> n_syms(spec.symbols_per_utt.first,
                                              spec.symbols_per_utt.second);
    std::uniform_int_distribution<int> pick(0, int(alphabet.size()) - 1);
    std::uniform_int_distribution<int> width(spec.frames_per_unit.first,
                                             spec.frames_per_unit.second);
    std::normal_distribution<double> noise(0.0, 1.0);

    SynthUtterance utt;
    int count = n_syms(rng);
    for (int s = 0; s < count; ++s) {
      char sym = alphabet[pick(rng)];
      utt.source_symbols.push_back(sym);
      for (int id : spec.latent_grammar.at(sym)) {
        int w = width(rng);
        for (int f = 0; f < w; ++f) utt.latent_ids.push_back(id);
      }
    }
    utt.features.frames = Mat<float>(int(utt.latent_ids.size()), spec.dim);
    for (int t = 0; t < utt.features.frames.rows; ++t) {
      int id = utt.latent_ids[std::size_t(t)];
      for (int k = 0; k < spec.dim; ++k) {
        double v = centroids(id, k);
        if (spec.noise_stddev > 0) v += spec.noise_stddev * noise(rng);
        utt.features.frames(t, k) = float(v);
      }
    }
    char buf[16];
    std::snprintf(buf, sizeof(buf), "utt%06d", u);
    utt.features.utterance_id = buf;
    corpus.push_back(std::move(utt));
  }
  return corpus;
}

}  // namespace dsmt
