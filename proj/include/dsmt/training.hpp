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
// Single-threaded optimization loop: Adam with inverse-square-root warmup,
// global-norm gradient clipping, periodic validation, best-k checkpoint
// management, and cross-modal transfer initialization with freezing.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dsmt/checkpoint.hpp"
#include "dsmt/dataset.hpp"
#include "dsmt/seq2seq.hpp"

namespace dsmt {

struct TrainConfig {
  int max_iters = 2000;
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int warmup_steps = 1000;
  double clip_norm = 5.0;
  int eval_every = 200;
  int keep_best = 10;
  std::uint64_t seed = 1;
  int max_tokens = 1000;  // batch token budget
  int st_duplicate = 1;   // count-level stand-in for audio speed perturbation
  std::filesystem::path run_dir;

  void validate() const {
    if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
    if (keep_best < 1) throw ConfigError("keep_best must be >= 1");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
    if (st_duplicate < 1) throw ConfigError("st_duplicate must be >= 1");
  }
};

struct CheckpointInfo {
  std::filesystem::path path;
  double valid_loss = 0;
  int iteration = 0;
};

struct CheckpointIndex {
  std::vector<CheckpointInfo> entries;  // ascending by validation loss

  void insert(CheckpointInfo info, int keep_best) {
    entries.push_back(std::move(info));
    std::stable_sort(entries.begin(), entries.end(),
                     [](const CheckpointInfo& a, const CheckpointInfo& b) {
                       return a.valid_loss < b.valid_loss;
                     });
    while (int(entries.size()) > keep_best) {
      std::error_code ec;
      std::filesystem::remove(entries.back().path, ec);
      entries.pop_back();
    }
  }
};

template <typename T>
class AdamOptimizer {
 public:
  AdamOptimizer(const TrainConfig& cfg) : cfg_(cfg) {}

  double learning_rate(int step) const {
    double w = double(std::max(1, cfg_.warmup_steps));
    return cfg_.step_size * std::sqrt(w) *
           std::min(double(step) * std::pow(w, -1.5), 1.0 / std::sqrt(double(step)));
  }

  /// One update. Frozen tensors are untouched; gradients are clipped to the
  /// configured global norm first. Returns the post-clip gradient norm.
  double step(Parameters<T>* params, const std::map<std::string, Mat<T>>& grads) {
    ++step_;
    double norm_sq = 0;
    for (const auto& e : params->entries) {
      if (e.frozen) continue;
      auto it = grads.find(e.name);
      if (it != grads.end()) norm_sq += double(squared_l2(it->second));
    }
    double scale = 1.0;
    if (cfg_.clip_norm > 0 && norm_sq > cfg_.clip_norm * cfg_.clip_norm)
      scale = cfg_.clip_norm / std::sqrt(norm_sq);
    const double lr = learning_rate(step_);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, step_);

    for (auto& e : params->entries) {
      if (e.frozen) continue;
      auto it = grads.find(e.name);
      if (it == grads.end()) continue;
      Mat<T>& m = moment1_.try_emplace(e.name, Mat<T>(e.value.rows, e.value.cols)).first->second;
      Mat<T>& v = moment2_.try_emplace(e.name, Mat<T>(e.value.rows, e.value.cols)).first->second;
      const Mat<T>& g = it->second;
      for (std::size_t i = 0; i < e.value.size(); ++i) {
        T gi = T(scale) * g.data[i];
        m.data[i] = T(cfg_.beta1) * m.data[i] + T(1 - cfg_.beta1) * gi;
        v.data[i] = T(cfg_.beta2) * v.data[i] + T(1 - cfg_.beta2) * gi * gi;
        double mhat = double(m.data[i]) / bc1;
        double vhat = double(v.data[i]) / bc2;
        e.value.data[i] -= T(lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps));
      }
    }
    return scale * std::sqrt(norm_sq);
  }

  int steps() const { return step_; }

 private:
  TrainConfig cfg_;
  int step_ = 0;
  std::map<std::string, Mat<T>> moment1_, moment2_;
};

/// Mean interpolated loss over a dataset, teacher-forced, no augmentation.
template <typename T>
inline double validation_loss(const std::vector<Triplet>& data, const Parameters<T>& params,
                              const ModelConfig& cfg, int max_tokens) {
  if (data.empty()) return 0;
  BatchPlan plan = batch(data, max_tokens, 0);
  double total = 0;
  long long n = 0;
  for (const auto& b : plan.batches) {
    auto res = forward_loss(examples_from_batch(b), params, cfg, false, 0, false);
    total += res.breakdown.total * double(b.items.size());
    n += (long long)b.items.size();
  }
  return n == 0 ? 0 : total / double(n);
}

struct TrainOutcome {
  CheckpointIndex index;
  Parameters<float> final_params;
  std::vector<double> loss_history;  // per-iteration training loss
  bool diverged = false;
  int iterations_run = 0;
};

/// Runs exactly max_iters optimizer steps (epochs rewind as needed), saving
/// and pruning validation checkpoints along the way. Deterministic given the
/// config seed.
inline TrainOutcome train(const TrainConfig& tcfg, const ModelConfig& mcfg,
                          const std::vector<Triplet>& data, const std::vector<Triplet>& valid,
                          Parameters<float> init) {
  tcfg.validate();
  mcfg.validate();
  if (data.empty()) throw ValidationError("train: empty dataset");
  std::filesystem::create_directories(tcfg.run_dir);

  std::vector<Triplet> train_set;
  for (const auto& t : data) {
    train_set.push_back(t);
    if (t.origin == Origin::ST)
      for (int k = 1; k < tcfg.st_duplicate; ++k) train_set.push_back(t);
  }

  TrainOutcome out;
  Parameters<float> params = std::move(init);
  AdamOptimizer<float> opt(tcfg);

  int epoch = 0;
  BatchPlan plan = batch(train_set, tcfg.max_tokens, derive_seed(tcfg.seed, 0xB000));
  std::size_t cursor = 0;

  auto run_validation = [&](int iter) {
    double vloss = validation_loss(valid.empty() ? data : valid, params, mcfg, tcfg.max_tokens);
    CheckpointInfo info;
    info.iteration = iter;
    info.valid_loss = vloss;
    info.path = tcfg.run_dir / ("ckpt_iter" + std::to_string(iter) + ".dsqc");
    save_checkpoint({mcfg, params}, info.path);
    out.index.insert(std::move(info), tcfg.keep_best);
  };

  for (int iter = 1; iter <= tcfg.max_iters; ++iter) {
    if (cursor >= plan.batches.size()) {
      ++epoch;
      plan = batch(train_set, tcfg.max_tokens, derive_seed(tcfg.seed, 0xB000 + std::uint64_t(epoch)));
      cursor = 0;
    }
    if (plan.batches.empty()) throw ValidationError("train: no batch fits the token budget");
    const Batch& b = plan.batches[cursor++];
    ForwardResult<float> res;
    try {
      res = forward_loss(examples_from_batch(b), params, mcfg, true,
                         derive_seed(tcfg.seed, 0xF000 + std::uint64_t(iter)), true);
    } catch (const NumericalError&) {
      out.iterations_run = iter;
      out.diverged = true;
      break;
    }
    out.loss_history.push_back(res.breakdown.total);
    out.iterations_run = iter;
    if (!std::isfinite(res.breakdown.total)) {
      out.diverged = true;
      break;
    }
    opt.step(&params, res.grads);
    if (iter % tcfg.eval_every == 0 || iter == tcfg.max_iters) run_validation(iter);
  }
  out.final_params = std::move(params);
  return out;
}

/// Element-wise arithmetic mean of the n best checkpoints, accumulated in
/// float64.
inline Parameters<double> average_checkpoints(const CheckpointIndex& index, int n) {
  if (n < 1 || n > int(index.entries.size()))
    throw ConfigError("average_checkpoints: need 1 <= n <= |index|");
  Parameters<double> acc;
  for (int i = 0; i < n; ++i) {
    Checkpoint ckpt = load_checkpoint(index.entries[std::size_t(i)].path);
    if (i == 0) {
      acc = ckpt.params.template cast<double>();
    } else {
      for (auto& e : acc.entries) {
        const Mat<float>& other = ckpt.params.at(e.name);
        if (!(other.rows == e.value.rows && other.cols == e.value.cols))
          throw ShapeError("average_checkpoints: tensor shape mismatch for " + e.name);
        for (std::size_t k = 0; k < e.value.size(); ++k)
          e.value.data[k] += double(other.data[k]);
      }
    }
  }
  for (auto& e : acc.entries)
    for (double& v : e.value.data) v /= double(n);
  return acc;
}

/// Copies every decoder tensor from a text-pretrained checkpoint and freezes
/// the requested groups (feed-forward and/or self-attention, each with its
/// pre-norm). Cross-attention, encoder, and embedding stay trainable. The
/// model must already use the checkpoint's target vocabulary.
inline void init_decoder_from_text_model(Parameters<float>* params, const Checkpoint& text_ckpt,
                                         bool freeze_feed_forward, bool freeze_self_attention) {
  bool copied_any = false;
  for (auto& e : params->entries) {
    if (e.name.rfind("dec.", 0) != 0) continue;
    if (!text_ckpt.params.has(e.name))
      throw ConfigError("text checkpoint missing decoder tensor: " + e.name);
    const Mat<float>& src = text_ckpt.params.at(e.name);
    if (!(src.rows == e.value.rows && src.cols == e.value.cols))
      throw ConfigError(
          "decoder tensor shape mismatch for " + e.name +
          "; rebuild the model with the checkpoint's target vocabulary to adopt it");
    e.value = src;
    copied_any = true;
    bool is_ff = e.name.find(".ff.") != std::string::npos ||
                 e.name.find(".ln3.") != std::string::npos;
    bool is_self = e.name.find(".selfattn.") != std::string::npos ||
                   e.name.find(".ln1.") != std::string::npos;
    if ((freeze_feed_forward && is_ff) || (freeze_self_attention && is_self)) e.frozen = true;
  }
  if (!copied_any) throw ConfigError("model has no decoder tensors to initialize");
}

}  // namespace dsmt
