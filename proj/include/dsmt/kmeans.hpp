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
// Lloyd k-means with k-means++ seeding (Arthur & Vassilvitskii 2007).
// Training is single-threaded on purpose: deterministic accumulation order is
// part of the contract.
//
// Model file format (little-endian):
//   magic "DSQK" | version u8 = 1 | k u32 | D u32 | centroids float64
//   row-major | seed u64 | final_inertia float64

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "dsmt/common.hpp"
#include "dsmt/feature_io.hpp"
#include "dsmt/mat.hpp"

namespace dsmt {

struct KMeansModel {
  int k = 0;
  Mat<double> centroids;  // k x D
  std::uint64_t seed = 0;
  double final_inertia = 0.0;
  int iterations_run = 0;
  std::vector<double> inertia_history;  // one entry per Lloyd iteration
};

struct ClusterSequence {
  std::string utterance_id;
  std::vector<int> ids;
};

namespace detail {

template <typename T, typename U>
inline double sq_dist(const T* a, const U* b, int d) {
  double s = 0;
  for (int i = 0; i < d; ++i) {
    double diff = double(a[i]) - double(b[i]);
    s += diff * diff;
  }
  return s;
}

// Nearest centroid, ties broken by lowest index.
template <typename T>
inline int nearest(const T* x, const Mat<double>& centroids) {
  int best = 0;
  double best_d = sq_dist(x, centroids.row_ptr(0), centroids.cols);
  for (int j = 1; j < centroids.rows; ++j) {
    double d = sq_dist(x, centroids.row_ptr(j), centroids.cols);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

}  // namespace detail

/// Trains on a pooled frame matrix (rows are frames). Stops when the relative
/// inertia improvement drops below rel_tol or after max_iters Lloyd steps.
inline KMeansModel kmeans_train(const Mat<float>& frames, int k, int max_iters, double rel_tol,
                                std::uint64_t seed) {
  if (k < 2) throw ConfigError("k must be >= 2");
  if (frames.rows < k) throw ConfigError("fewer frames than clusters");
  const int n = frames.rows, d = frames.cols;

  KMeansModel model;
  model.k = k;
  model.seed = seed;
  model.centroids = Mat<double>(k, d);

  // Greedy k-means++ seeding: several D^2-sampled candidates per step, keep
  // the one that lowers the potential the most.
  Rng rng(seed);
  {
    const int n_candidates = 2 + int(std::log2(double(k)));
    std::uniform_int_distribution<int> first(0, n - 1);
    int f0 = first(rng);
    for (int j = 0; j < d; ++j) model.centroids(0, j) = frames(f0, j);
    std::vector<double> d2(std::size_t(n), 0.0);
    for (int i = 0; i < n; ++i)
      d2[i] = detail::sq_dist(frames.row_ptr(i), model.centroids.row_ptr(0), d);
    std::vector<double> cand_d2(std::size_t(n), 0.0);
    std::vector<double> best_d2(std::size_t(n), 0.0);
    for (int c = 1; c < k; ++c) {
      double total = 0;
      for (double v : d2) total += v;
      int best = -1;
      double best_potential = std::numeric_limits<double>::infinity();
      for (int cand = 0; cand < n_candidates; ++cand) {
        int chosen;
        if (total > 0) {
          std::uniform_real_distribution<double> u(0.0, total);
          double r = u(rng), acc = 0;
          chosen = n - 1;
          for (int i = 0; i < n; ++i) {
            acc += d2[i];
            if (acc >= r) {
              chosen = i;
              break;
            }
          }
        } else {
          std::uniform_int_distribution<int> any(0, n - 1);
          chosen = any(rng);
        }
        double potential = 0;
        for (int i = 0; i < n; ++i) {
          cand_d2[i] =
              std::min(d2[i], detail::sq_dist(frames.row_ptr(i), frames.row_ptr(chosen), d));
          potential += cand_d2[i];
        }
        if (potential < best_potential) {
          best_potential = potential;
          best = chosen;
          std::swap(best_d2, cand_d2);
        }
      }
      for (int j = 0; j < d; ++j) model.centroids(c, j) = frames(best, j);
      d2 = best_d2;
    }
  }

  std::vector<int> assign_idx(std::size_t(n), 0);
  std::vector<double> dist_to_own(std::size_t(n), 0.0);
  double prev_inertia = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iters; ++iter) {
    // Assignment step.
    double inertia = 0;
    for (int i = 0; i < n; ++i) {
      int a = detail::nearest(frames.row_ptr(i), model.centroids);
      assign_idx[i] = a;
      dist_to_own[i] = detail::sq_dist(frames.row_ptr(i), model.centroids.row_ptr(a), d);
      inertia += dist_to_own[i];
    }
    model.inertia_history.push_back(inertia);
    model.final_inertia = inertia;
    model.iterations_run = iter + 1;
    if (prev_inertia < std::numeric_limits<double>::infinity()) {
      double rel = prev_inertia > 0 ? (prev_inertia - inertia) / prev_inertia : 0.0;
      if (rel < rel_tol) break;
    }
    prev_inertia = inertia;

    // Update step.
    Mat<double> sums(k, d);
    std::vector<int> counts(std::size_t(k), 0);
    for (int i = 0; i < n; ++i) {
      int a = assign_idx[i];
      ++counts[a];
      for (int j = 0; j < d; ++j) sums(a, j) += frames(i, j);
    }
    std::vector<char> used(std::size_t(n), 0);
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (int j = 0; j < d; ++j) model.centroids(c, j) = sums(c, j) / counts[c];
      } else {
        // Empty cluster: re-seed at the frame farthest from its centroid.
        int far = -1;
        double far_d = -1;
        for (int i = 0; i < n; ++i)
          if (!used[i] && dist_to_own[i] > far_d) {
            far_d = dist_to_own[i];
            far = i;
          }
        used[far] = 1;
        for (int j = 0; j < d; ++j) model.centroids(c, j) = frames(far, j);
      }
    }
  }
  return model;
}

inline ClusterSequence assign(const KMeansModel& model, const FeatureSequence& seq) {
  if (seq.frames.cols != model.centroids.cols)
    throw ShapeError("feature dim does not match k-means model dim");
  ClusterSequence out;
  out.utterance_id = seq.utterance_id;
  out.ids.reserve(std::size_t(seq.frames.rows));
  for (int t = 0; t < seq.frames.rows; ++t)
    out.ids.push_back(detail::nearest(seq.frames.row_ptr(t), model.centroids));
  return out;
}

inline void save_kmeans(const KMeansModel& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.write("DSQK", 4);
  os.put(char(1));
  detail::write_u32(os, std::uint32_t(model.k));
  detail::write_u32(os, std::uint32_t(model.centroids.cols));
  os.write(reinterpret_cast<const char*>(model.centroids.data.data()),
           std::streamsize(model.centroids.size() * sizeof(double)));
  std::uint64_t s = model.seed;
  os.write(reinterpret_cast<const char*>(&s), 8);
  os.write(reinterpret_cast<const char*>(&model.final_inertia), 8);
  if (!os) throw IoError("write failed: " + path.string());
}

inline KMeansModel load_kmeans(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "DSQK", 4) != 0)
    throw FormatError("bad magic in k-means model file");
  if (is.get() != 1) throw FormatError("unsupported k-means model version");
  KMeansModel m;
  m.k = int(detail::read_u32(is));
  int d = int(detail::read_u32(is));
  if (m.k < 2 || d < 1) throw FormatError("k-means model declares bad shape");
  m.centroids = Mat<double>(m.k, d);
  is.read(reinterpret_cast<char*>(m.centroids.data.data()),
          std::streamsize(m.centroids.size() * sizeof(double)));
  is.read(reinterpret_cast<char*>(&m.seed), 8);
  is.read(reinterpret_cast<char*>(&m.final_inertia), 8);
  if (!is) throw TruncationError("k-means model file truncated");
  return m;
}

}  // namespace dsmt
