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

#include "dsmt/feature_io.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

namespace {

using namespace dsmt;
namespace fs = std::filesystem;

fs::path tmp_path(const std::string& name) { return fs::path(testing::TempDir()) / name; }

void write_raw(const fs::path& p, const std::string& bytes) {
  std::ofstream os(p, std::ios::binary);
  os.write(bytes.data(), std::streamsize(bytes.size()));
}

std::string header(std::uint32_t d, std::uint32_t t) {
  std::string h = "DSQF";
  h.push_back(char(1));
  for (std::uint32_t v : {d, t})
    for (int i = 0; i < 4; ++i) h.push_back(char((v >> (8 * i)) & 0xff));
  return h;
}

TEST(FeatureIo, MinimalWellFormedFile) {
  fs::path p = tmp_path("min.dsqf");
  write_raw(p, header(4, 2) + std::string(32, '\0'));
  FeatureSequence seq = read_features(p);
  EXPECT_EQ(seq.frames.rows, 2);
  EXPECT_EQ(seq.frames.cols, 4);
  EXPECT_EQ(seq.utterance_id, "min");
}

TEST(FeatureIo, TruncatedPayload) {
  fs::path p = tmp_path("trunc.dsqf");
  write_raw(p, header(4, 2) + std::string(16, '\0'));
  EXPECT_THROW(read_features(p), TruncationError);
}

TEST(FeatureIo, BadMagic) {
  fs::path p = tmp_path("magic.dsqf");
  write_raw(p, "XXXX" + header(4, 2).substr(4) + std::string(32, '\0'));
  EXPECT_THROW(read_features(p), FormatError);
}

TEST(FeatureIo, TrailingBytesRejected) {
  fs::path p = tmp_path("trail.dsqf");
  write_raw(p, header(4, 2) + std::string(33, '\0'));
  EXPECT_THROW(read_features(p), FormatError);
}

TEST(FeatureIo, NanPayloadRejected) {
  fs::path p = tmp_path("nan.dsqf");
  std::string payload(4, '\0');
  float nan = std::nanf("");
  std::memcpy(payload.data(), &nan, 4);
  write_raw(p, header(1, 1) + payload);
  EXPECT_THROW(read_features(p), ValidationError);
}

TEST(FeatureIo, SingleValueFileSize) {
  FeatureSequence seq;
  seq.utterance_id = "one";
  seq.frames = Mat<float>(1, 1, 0.0f);
  fs::path p = tmp_path("one.dsqf");
  write_features(seq, p);
  // 13-byte header (magic + version + D + T) plus one float32.
  EXPECT_EQ(fs::file_size(p), 17u);
}

TEST(FeatureIo, WriteRejectsNan) {
  FeatureSequence seq;
  seq.utterance_id = "bad";
  seq.frames = Mat<float>(2, 2, 1.0f);
  seq.frames(1, 1) = std::nanf("");
  EXPECT_THROW(write_features(seq, tmp_path("bad.dsqf")), ValidationError);
}

TEST(FeatureIo, RoundTripBitExact) {
  Rng rng(7);
  std::normal_distribution<float> g(0.f, 3.f);
  FeatureSequence seq;
  seq.utterance_id = "rt";
  seq.frames = Mat<float>(10, 8);
  for (auto& v : seq.frames.data) v = g(rng);
  fs::path p = tmp_path("rt.dsqf");
  write_features(seq, p);
  FeatureSequence back = read_features(p);
  EXPECT_TRUE(back == seq);
}

TEST(FeatureIo, UnwritablePath) {
  FeatureSequence seq;
  seq.frames = Mat<float>(1, 1, 0.0f);
  EXPECT_THROW(write_features(seq, "/nonexistent-dir/x.dsqf"), IoError);
}

SynthSpec two_unit_spec() {
  SynthSpec spec;
  spec.n_latent_clusters = 8;
  spec.dim = 3;
  spec.noise_stddev = 0.0;
  spec.frames_per_unit = {3, 3};
  spec.latent_grammar = {{'A', {2, 5}}};
  spec.symbols_per_utt = {1, 1};
  return spec;
}

TEST(SynthCorpus, ZeroNoiseFramesEqualCentroids) {
  SynthSpec spec = two_unit_spec();
  auto corpus = synth_corpus(spec, 1, 42);
  ASSERT_EQ(corpus.size(), 1u);
  const auto& utt = corpus[0];
  ASSERT_EQ(utt.features.frames.rows, 6);
  EXPECT_EQ(utt.latent_ids, (std::vector<int>{2, 2, 2, 5, 5, 5}));
  EXPECT_EQ(utt.source_symbols, "A");
  Mat<double> cent = synth_centroids(spec, 42);
  for (int t = 0; t < 3; ++t)
    for (int k = 0; k < 3; ++k)
      EXPECT_EQ(utt.features.frames(t, k), float(cent(2, k)));
}

TEST(SynthCorpus, DeterministicGivenSeed) {
  SynthSpec spec = two_unit_spec();
  spec.noise_stddev = 0.1;
  spec.symbols_per_utt = {2, 5};
  spec.latent_grammar = {{'A', {2, 5}}, {'B', {0, 1, 3}}};
  auto c1 = synth_corpus(spec, 5, 99);
  auto c2 = synth_corpus(spec, 5, 99);
  ASSERT_EQ(c1.size(), c2.size());
  for (std::size_t i = 0; i < c1.size(); ++i) {
    EXPECT_TRUE(c1[i].features == c2[i].features);
    EXPECT_EQ(c1[i].latent_ids, c2[i].latent_ids);
    EXPECT_EQ(c1[i].source_symbols, c2[i].source_symbols);
  }
}

TEST(SynthCorpus, NearestCentroidRecoversLatents) {
  SynthSpec spec;
  spec.n_latent_clusters = 8;
  spec.dim = 4;
  spec.latent_grammar = {{'A', {0, 1}}, {'B', {2, 3}}, {'C', {4, 5, 6}}, {'D', {7}}};
  spec.symbols_per_utt = {2, 6};
  auto noiseless = synth_centroids(spec, 11);
  double min_dist = std::numeric_limits<double>::infinity();
  for (int i = 0; i < noiseless.rows; ++i)
    for (int j = i + 1; j < noiseless.rows; ++j) {
      double d2 = 0;
      for (int k = 0; k < noiseless.cols; ++k) {
        double diff = noiseless(i, k) - noiseless(j, k);
        d2 += diff * diff;
      }
      min_dist = std::min(min_dist, std::sqrt(d2));
    }
  spec.noise_stddev = 0.05 * min_dist;
  auto corpus = synth_corpus(spec, 20, 11);
  Mat<double> cent = synth_centroids(spec, 11);
  for (const auto& utt : corpus)
    for (int t = 0; t < utt.features.frames.rows; ++t) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < cent.rows; ++c) {
        double d2 = 0;
        for (int k = 0; k < cent.cols; ++k) {
          double diff = double(utt.features.frames(t, k)) - cent(c, k);
          d2 += diff * diff;
        }
        if (d2 < best_d) {
          best_d = d2;
          best = c;
        }
      }
      ASSERT_EQ(best, utt.latent_ids[std::size_t(t)]);
    }
}

TEST(SynthCorpus, RejectsDegenerateConfigs) {
  SynthSpec spec = two_unit_spec();
  spec.n_latent_clusters = 1;
  EXPECT_THROW(synth_corpus(spec, 1, 0), ConfigError);
  spec = two_unit_spec();
  spec.latent_grammar.clear();
  EXPECT_THROW(synth_corpus(spec, 1, 0), ConfigError);
  spec = two_unit_spec();
  spec.frames_per_unit = {3, 2};
  EXPECT_THROW(synth_corpus(spec, 1, 0), ConfigError);
}

}  // namespace
