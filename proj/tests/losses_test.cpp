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

#include "dsmt/losses.hpp"

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace {

using namespace dsmt;

Mat<double> random_logits(Rng& rng, int rows, int cols, double scale = 2.0) {
  std::normal_distribution<double> g(0.0, scale);
  Mat<double> m(rows, cols);
  for (auto& v : m.data) v = g(rng);
  return m;
}

double rel_err(double a, double b) {
  double denom = std::max(std::abs(a), std::abs(b));
  return denom == 0 ? 0.0 : std::abs(a - b) / denom;
}

// Central differences carry ~eps*|f|/h rounding noise, so gradients near zero
// are checked with a composite tolerance.
void expect_grad_close(double analytic, double fd) {
  EXPECT_LE(std::abs(analytic - fd), 1e-9 + 1e-6 * std::max(std::abs(analytic), std::abs(fd)));
}

TEST(CtcLoss, SinglePathAnalytic) {
  Rng rng(1);
  Mat<double> logits = random_logits(rng, 1, 4);
  int a = 2;
  LossResult<double> res = ctc_loss(logits, {a});
  double mx = *std::max_element(logits.data.begin(), logits.data.end());
  double z = 0;
  for (double v : logits.data) z += std::exp(v - mx);
  double expect = -(logits(0, a + 1) - mx - std::log(z));
  EXPECT_NEAR(res.loss, expect, 1e-12);
}

TEST(CtcLoss, MatchesBruteForceEnumeration) {
  Rng rng(12);
  std::uniform_int_distribution<int> frames(1, 6), ulen(1, 3), vsize(2, 4);
  for (int trial = 0; trial < 300; ++trial) {
    int t = frames(rng), v = vsize(rng);
    int u = std::min(ulen(rng), t);  // keep most targets reachable
    std::uniform_int_distribution<int> tok(0, v - 1);
    std::vector<int> target;
    for (int i = 0; i < u; ++i) target.push_back(tok(rng));
    Mat<double> logits = random_logits(rng, t, v + 1);
    LossResult<double> res = ctc_loss(logits, target);
    double brute = oracle::ctc_bruteforce_neglogp(logits, target);
    if (!res.reachable) {
      EXPECT_TRUE(std::isinf(brute));
      continue;
    }
    EXPECT_LE(rel_err(res.loss, brute), 1e-10);
  }
}

TEST(CtcLoss, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  Mat<double> logits = random_logits(rng, 5, 4);
  std::vector<int> target = {1, 0, 2};
  LossResult<double> res = ctc_loss(logits, target);
  ASSERT_TRUE(res.reachable);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double fd = oracle::central_diff(
        [&](double x) {
          Mat<double> l = logits;
          l.data[i] = x;
          return ctc_loss(l, target).loss;
        },
        logits.data[i], 1e-4);
    expect_grad_close(res.grad_logits.data[i], fd);
  }
}

TEST(CtcLoss, UnreachableTargetFlaggedNotThrown) {
  Rng rng(7);
  Mat<double> logits = random_logits(rng, 2, 4);
  LossResult<double> res = ctc_loss(logits, {0, 0, 1});  // needs >= 4 frames (repeat)
  EXPECT_FALSE(res.reachable);
  EXPECT_TRUE(std::isinf(res.loss));
}

TEST(CtcLoss, EmptyTargetRejected) {
  Mat<double> logits(3, 4);
  EXPECT_THROW(ctc_loss(logits, {}), ValidationError);
}

TEST(RnntLoss, SingleFrameEmptyTarget) {
  Rng rng(2);
  Mat<double> joint = random_logits(rng, 1, 4);
  LossResult<double> res = rnnt_loss(joint, {}, 1);
  double mx = *std::max_element(joint.data.begin(), joint.data.end());
  double z = 0;
  for (double v : joint.data) z += std::exp(v - mx);
  EXPECT_NEAR(res.loss, -(joint(0, 0) - mx - std::log(z)), 1e-12);
}

TEST(RnntLoss, EmptyTargetMultiFrameIsBlankRun) {
  Rng rng(3);
  int frames = 4;
  Mat<double> joint = random_logits(rng, frames, 3);
  LossResult<double> res = rnnt_loss(joint, {}, frames);
  Mat<double> p = oracle::softmax_rows(joint);
  double expect = 0;
  for (int t = 0; t < frames; ++t) expect -= std::log(p(t, 0));
  EXPECT_NEAR(res.loss, expect, 1e-12);
}

TEST(RnntLoss, MatchesBruteForceEnumeration) {
  Rng rng(14);
  std::uniform_int_distribution<int> frames(1, 4), ulen(0, 3), vsize(1, 3);
  for (int trial = 0; trial < 300; ++trial) {
    int t = frames(rng), v = vsize(rng), u = ulen(rng);
    std::uniform_int_distribution<int> tok(0, v - 1);
    std::vector<int> target;
    for (int i = 0; i < u; ++i) target.push_back(tok(rng));
    Mat<double> joint = random_logits(rng, t * (u + 1), v + 1);
    LossResult<double> res = rnnt_loss(joint, target, t);
    double brute = oracle::rnnt_bruteforce_neglogp(joint, target, t);
    EXPECT_LE(rel_err(res.loss, brute), 1e-10);
  }
}

TEST(RnntLoss, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  int frames = 3;
  std::vector<int> target = {1, 0};
  Mat<double> joint = random_logits(rng, frames * (int(target.size()) + 1), 4);
  LossResult<double> res = rnnt_loss(joint, target, frames);
  for (std::size_t i = 0; i < joint.size(); ++i) {
    double fd = oracle::central_diff(
        [&](double x) {
          Mat<double> l = joint;
          l.data[i] = x;
          return rnnt_loss(l, target, frames).loss;
        },
        joint.data[i], 1e-4);
    expect_grad_close(res.grad_logits.data[i], fd);
  }
}

TEST(CeLoss, UniformLogitsGiveLogVocab) {
  Mat<double> logits(3, 4, 0.7);
  LossResult<double> res = ce_loss(logits, {0, 3, 2});
  EXPECT_NEAR(res.loss, std::log(4.0), 1e-12);
}

TEST(CeLoss, LargeMarginAnalytic) {
  // K classes, correct logit m, rest 0: closed-form smoothed loss.
  const int K = 5;
  const double m = 30.0, eps = 0.1;
  Mat<double> logits(1, K, 0.0);
  logits(0, 2) = m;
  LossResult<double> res = ce_loss(logits, {2}, eps);
  double lse = std::log(std::exp(m) + K - 1);
  double expect = (1 - eps + eps / K) * (lse - m) + (eps / K) * (K - 1) * lse;
  EXPECT_NEAR(res.loss, expect, 1e-9);
  // Unsmoothed loss vanishes in the large-margin limit.
  LossResult<double> plain = ce_loss(logits, {2}, 0.0);
  EXPECT_LT(plain.loss, 1e-12);
}

TEST(CeLoss, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  Mat<double> logits = random_logits(rng, 4, 5);
  std::vector<int> targets = {1, 4, 0, 2};
  for (double eps : {0.0, 0.1}) {
    LossResult<double> res = ce_loss(logits, targets, eps);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      double fd = oracle::central_diff(
          [&](double x) {
            Mat<double> l = logits;
            l.data[i] = x;
            return ce_loss(l, targets, eps).loss;
          },
          logits.data[i], 1e-4);
      expect_grad_close(res.grad_logits.data[i], fd);
    }
  }
}

TEST(CeLoss, ShapeMismatchRejected) {
  Mat<double> logits(3, 4);
  EXPECT_THROW(ce_loss(logits, {0, 1}), ShapeError);
}

}  // namespace
