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

#include "dsmt/kmeans.hpp"

#include <gtest/gtest.h>

#include <cstring>

#include "dsmt/feature_io.hpp"
#include "oracles.hpp"

namespace {

using namespace dsmt;

Mat<float> pool(const std::vector<SynthUtterance>& corpus) {
  int total = 0;
  for (const auto& u : corpus) total += u.features.frames.rows;
  Mat<float> frames(total, corpus[0].features.frames.cols);
  int r = 0;
  for (const auto& u : corpus)
    for (int t = 0; t < u.features.frames.rows; ++t, ++r)
      std::memcpy(frames.row_ptr(r), u.features.frames.row_ptr(t),
                  sizeof(float) * std::size_t(frames.cols));
  return frames;
}

TEST(KMeans, PerfectlySeparableTwoClusters) {
  Mat<float> frames(20, 2);
  for (int i = 10; i < 20; ++i) {
    frames(i, 0) = 10.f;
    frames(i, 1) = 10.f;
  }
  KMeansModel m = kmeans_train(frames, 2, 50, 1e-6, 3);
  EXPECT_DOUBLE_EQ(m.final_inertia, 0.0);
  bool zero_first = m.centroids(0, 0) < 5;
  int lo = zero_first ? 0 : 1, hi = 1 - lo;
  EXPECT_DOUBLE_EQ(m.centroids(lo, 0), 0.0);
  EXPECT_DOUBLE_EQ(m.centroids(lo, 1), 0.0);
  EXPECT_DOUBLE_EQ(m.centroids(hi, 0), 10.0);
  EXPECT_DOUBLE_EQ(m.centroids(hi, 1), 10.0);
}

TEST(KMeans, OneCentroidPerPointReachesZeroInertia) {
  Rng rng(4);
  std::normal_distribution<float> g(0.f, 1.f);
  Mat<float> frames(12, 3);
  for (auto& v : frames.data) v = g(rng);
  KMeansModel m = kmeans_train(frames, 12, 100, 1e-9, 1);
  EXPECT_NEAR(m.final_inertia, 0.0, 1e-12);
}

TEST(KMeans, ConfigErrors) {
  Mat<float> frames(3, 2);
  EXPECT_THROW(kmeans_train(frames, 4, 10, 1e-6, 0), ConfigError);
  EXPECT_THROW(kmeans_train(frames, 1, 10, 1e-6, 0), ConfigError);
}

TEST(KMeans, InertiaMonotoneAndDeterministic) {
  Rng rng(123);
  std::normal_distribution<float> g(0.f, 2.f);
  Mat<float> frames(400, 5);
  for (auto& v : frames.data) v = g(rng);
  KMeansModel a = kmeans_train(frames, 16, 100, 0.0, 77);
  KMeansModel b = kmeans_train(frames, 16, 100, 0.0, 77);
  ASSERT_GE(a.inertia_history.size(), 2u);
  for (std::size_t i = 1; i < a.inertia_history.size(); ++i)
    EXPECT_LE(a.inertia_history[i], a.inertia_history[i - 1]);
  EXPECT_EQ(a.iterations_run, b.iterations_run);
  ASSERT_TRUE(a.centroids.same_shape(b.centroids));
  EXPECT_EQ(std::memcmp(a.centroids.data.data(), b.centroids.data.data(),
                        a.centroids.size() * sizeof(double)),
            0);
}

TEST(KMeans, RecoversSynthClustersExactly) {
  SynthSpec spec;
  spec.n_latent_clusters = 8;
  spec.dim = 6;
  spec.noise_stddev = 0.01;
  spec.latent_grammar = {{'A', {0, 1}}, {'B', {2, 3}}, {'C', {4, 5}}, {'D', {6, 7}}};
  spec.symbols_per_utt = {2, 6};
  auto corpus = synth_corpus(spec, 40, 5);
  Mat<float> frames = pool(corpus);
  KMeansModel m = kmeans_train(frames, 8, 100, 1e-8, 19);

  std::vector<int> truth, predicted;
  for (const auto& u : corpus) {
    ClusterSequence cs = assign(m, u.features);
    predicted.insert(predicted.end(), cs.ids.begin(), cs.ids.end());
    truth.insert(truth.end(), u.latent_ids.begin(), u.latent_ids.end());
  }
  EXPECT_DOUBLE_EQ(oracle::adjusted_rand_index(truth, predicted), 1.0);
}

TEST(Assign, ExactCentroidAndTieBreak) {
  KMeansModel m;
  m.k = 5;
  m.centroids = Mat<double>(5, 1);
  for (int i = 0; i < 5; ++i) m.centroids(i, 0) = i;  // 0,1,2,3,4

  FeatureSequence at3;
  at3.frames = Mat<float>(1, 1, 3.0f);
  EXPECT_EQ(assign(m, at3).ids[0], 3);

  // Equidistant to centroids 1 and 4: tie broken by the lower index.
  KMeansModel tie;
  tie.k = 5;
  tie.centroids = Mat<double>(5, 1, 100.0);
  tie.centroids(1, 0) = 2.0;
  tie.centroids(4, 0) = 4.0;
  FeatureSequence mid;
  mid.frames = Mat<float>(1, 1, 3.0f);
  EXPECT_EQ(assign(tie, mid).ids[0], 1);
}

TEST(Assign, MatchesExhaustiveScan) {
  Rng rng(31);
  std::normal_distribution<float> g(0.f, 1.f);
  std::normal_distribution<double> gd(0.0, 1.0);
  KMeansModel m;
  m.k = 7;
  m.centroids = Mat<double>(7, 4);
  for (auto& v : m.centroids.data) v = gd(rng);
  FeatureSequence seq;
  seq.utterance_id = "scan";
  seq.frames = Mat<float>(50, 4);
  for (auto& v : seq.frames.data) v = g(rng);

  ClusterSequence cs = assign(m, seq);
  for (int t = 0; t < 50; ++t) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < 7; ++c) {
      double d2 = 0;
      for (int k = 0; k < 4; ++k) {
        double diff = double(seq.frames(t, k)) - m.centroids(c, k);
        d2 += diff * diff;
      }
      if (d2 < best_d) {
        best_d = d2;
        best = c;
      }
    }
    ASSERT_EQ(cs.ids[std::size_t(t)], best);
  }
}

TEST(Assign, DimensionMismatch) {
  KMeansModel m;
  m.k = 2;
  m.centroids = Mat<double>(2, 3);
  FeatureSequence seq;
  seq.frames = Mat<float>(1, 2);
  EXPECT_THROW(assign(m, seq), ShapeError);
}

TEST(KMeans, ModelFileRoundTrip) {
  Rng rng(8);
  std::normal_distribution<float> g(0.f, 1.f);
  Mat<float> frames(60, 3);
  for (auto& v : frames.data) v = g(rng);
  KMeansModel m = kmeans_train(frames, 4, 20, 1e-6, 2);
  auto path = std::filesystem::path(testing::TempDir()) / "model.dsqk";
  save_kmeans(m, path);
  KMeansModel back = load_kmeans(path);
  EXPECT_EQ(back.k, m.k);
  EXPECT_EQ(back.seed, m.seed);
  EXPECT_DOUBLE_EQ(back.final_inertia, m.final_inertia);
  EXPECT_EQ(std::memcmp(back.centroids.data.data(), m.centroids.data.data(),
                        m.centroids.size() * sizeof(double)),
            0);
}

}  // namespace
