// Copyright (c) 2026 The cadr Authors
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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "cadr/core/error.hpp"
#include "cadr/core/rng.hpp"
#include "cadr/detector/cnn.hpp"

namespace cadr {

struct TrainConfig {
  double lr = 2e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int epochs = 40;
  int batch = 192;
  int checkpoint_interval = 500;  // steps; the final step is always a checkpoint
  int top_k = 5;
  bool class_balanced = true;
  std::uint64_t seed = 1;

  void Validate() const {
    if (!(lr > 0.0)) throw ValidationError("lr", "must be positive");
    if (weight_decay < 0.0) throw ValidationError("weight_decay", "must be nonnegative");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      throw ValidationError("beta", "outside [0,1)");
    if (!(eps > 0.0)) throw ValidationError("eps", "must be positive");
    if (epochs < 1) throw ValidationError("epochs", "must be positive");
    if (batch < 1) throw ValidationError("batch", "must be positive");
    if (checkpoint_interval < 1) throw ValidationError("checkpoint_interval", "must be positive");
    if (top_k < 1) throw ValidationError("top_k", "must be positive");
  }
};

inline nlohmann::ordered_json ToJson(const TrainConfig& t) {
  return {{"lr", t.lr},         {"weight_decay", t.weight_decay},
          {"beta1", t.beta1},   {"beta2", t.beta2},
          {"eps", t.eps},       {"epochs", t.epochs},
          {"batch", t.batch},   {"checkpoint_interval", t.checkpoint_interval},
          {"top_k", t.top_k},   {"class_balanced", t.class_balanced},
          {"seed", t.seed}};
}

inline TrainConfig TrainConfigFromJson(const nlohmann::ordered_json& j) {
  TrainConfig t;
  t.lr = j.value("lr", t.lr);
  t.weight_decay = j.value("weight_decay", t.weight_decay);
  t.beta1 = j.value("beta1", t.beta1);
  t.beta2 = j.value("beta2", t.beta2);
  t.eps = j.value("eps", t.eps);
  t.epochs = j.value("epochs", t.epochs);
  t.batch = j.value("batch", t.batch);
  t.checkpoint_interval = j.value("checkpoint_interval", t.checkpoint_interval);
  t.top_k = j.value("top_k", t.top_k);
  t.class_balanced = j.value("class_balanced", t.class_balanced);
  t.seed = j.value("seed", t.seed);
  t.Validate();
  return t;
}

// Decoupled weight decay Adam with bias correction.
template <typename Scalar>
class AdamW {
 public:
  AdamW(const TrainConfig& cfg, std::size_t n) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  void Step(std::vector<Scalar>& p, const std::vector<Scalar>& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < p.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * static_cast<double>(g[i]) * g[i];
      double x = p[i];
      x -= cfg_.lr * cfg_.weight_decay * x;
      x -= cfg_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.eps);
      p[i] = static_cast<Scalar>(x);
    }
  }

  long steps() const { return t_; }

 private:
  TrainConfig cfg_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

// Sequences with per-position integer labels (-1 = ignore).
struct Dataset {
  std::vector<Cnn<float>::Mat> xs;
  std::vector<std::vector<int>> ys;

  std::size_t size() const { return xs.size(); }
  void Add(Cnn<float>::Mat x, std::vector<int> y) {
    xs.push_back(std::move(x));
    ys.push_back(std::move(y));
  }

  std::vector<std::size_t> ClassCounts(int classes) const {
    std::vector<std::size_t> n(classes, 0);
    for (const auto& y : ys)
      for (int v : y)
        if (v >= 0 && v < classes) ++n[v];
    return n;
  }

  // FNV over labels and raw float bits, as hex.
  std::string Hash() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](const void* p, std::size_t n) {
      const auto* b = static_cast<const unsigned char*>(p);
      for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ull;
    };
    for (std::size_t s = 0; s < xs.size(); ++s) {
      mix(xs[s].data(), sizeof(float) * static_cast<std::size_t>(xs[s].size()));
      mix(ys[s].data(), sizeof(int) * ys[s].size());
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }
};

struct DetectorModel {
  Cnn<float> cnn;
  std::string kind;  // comprehension | perception | deletion | event
  std::uint64_t seed = 0;
  std::string data_hash;
};

// Validation score: recall of the error class for binary heads, macro recall
// for the event head. FPR is reported alongside for tie-breaking.
struct ValidationScore {
  double recall = 0.0;
  double fpr = 0.0;
};

inline std::vector<int> PredictClasses(const Cnn<float>& m, const Cnn<float>::Mat& x) {
  const auto p = m.Forward(x);
  std::vector<int> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) out[i] = ArgmaxLowTie(p.row(i));
  return out;
}

inline ValidationScore Evaluate(const Cnn<float>& m, const Dataset& data) {
  const int C = m.config().classes;
  std::vector<std::size_t> hit(C, 0), total(C, 0);
  std::size_t fp = 0, neg = 0;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const auto pred = PredictClasses(m, data.xs[s]);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const int y = data.ys[s][i];
      if (y < 0) continue;
      ++total[y];
      hit[y] += pred[i] == y;
      if (y == 0) {
        ++neg;
        fp += pred[i] != 0;
      }
    }
  }
  ValidationScore v;
  v.fpr = neg ? static_cast<double>(fp) / neg : 0.0;
  if (C == 2) {
    v.recall = total[1] ? static_cast<double>(hit[1]) / total[1] : 0.0;
  } else {
    int present = 0;
    for (int c = 0; c < C; ++c)
      if (total[c]) {
        v.recall += static_cast<double>(hit[c]) / total[c];
        ++present;
      }
    v.recall = present ? v.recall / present : 0.0;
  }
  return v;
}

struct CheckpointRecord {
  long step = 0;
  ValidationScore score;
};

struct TrainResult {
  DetectorModel model;
  std::vector<CheckpointRecord> checkpoints;  // every evaluated checkpoint
  std::vector<long> averaged_steps;           // the top-k that were averaged
  ValidationScore averaged_score;
  std::vector<double> loss_curve;             // per step
};

inline std::vector<float> AverageParams(const std::vector<std::vector<float>>& ps) {
  if (ps.empty()) throw ValidationError("checkpoints", "nothing to average");
  std::vector<double> acc(ps.front().size(), 0.0);
  for (const auto& p : ps)
    for (std::size_t i = 0; i < p.size(); ++i) acc[i] += p[i];
  std::vector<float> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] / ps.size());
  return out;
}

// Minibatch training with weighted cross-entropy. Every `checkpoint_interval`
// steps and at the last step the model is scored on `valid`; the returned
// weights are the mean of the top-k checkpoints by validation recall (ties:
// lower FPR, then later step).
inline TrainResult Train(const Dataset& train, const Dataset& valid, const CnnConfig& cfg,
                         const TrainConfig& tcfg, const std::string& kind = {}) {
  cfg.Validate();
  tcfg.Validate();
  if (train.size() == 0) throw ValidationError("dataset", "training set is empty");
  const auto counts = train.ClassCounts(cfg.classes);
  std::size_t labelled = 0, present = 0;
  for (auto n : counts) {
    labelled += n;
    present += n > 0;
  }
  if (present < 2) throw ValidationError("dataset", "single-class dataset");
  for (const auto* set : {&train, &valid})
    for (std::size_t s = 0; s < set->size(); ++s) {
      if (set->xs[s].cols() != cfg.input_dim)
        throw ValidationError("dataset", "sequence dimension differs from input_dim");
      if (set->ys[s].size() != static_cast<std::size_t>(set->xs[s].rows()))
        throw ValidationError("dataset", "label length differs from sequence length");
    }

  auto model = Cnn<float>::Initialized(cfg, tcfg.seed);
  // standardisation statistics over all training positions
  {
    std::vector<double> s(cfg.input_dim, 0.0), s2(cfg.input_dim, 0.0);
    double n = 0;
    for (const auto& x : train.xs) {
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (int j = 0; j < cfg.input_dim; ++j) {
          s[j] += x(i, j);
          s2[j] += static_cast<double>(x(i, j)) * x(i, j);
        }
      n += static_cast<double>(x.rows());
    }
    for (int j = 0; j < cfg.input_dim; ++j) {
      const double mu = n > 0 ? s[j] / n : 0.0;
      const double var = n > 0 ? std::max(0.0, s2[j] / n - mu * mu) : 1.0;
      model.input_mean()[j] = static_cast<float>(mu);
      model.input_scale()[j] = static_cast<float>(std::max(std::sqrt(var), 1e-6));
    }
  }
  std::vector<float> weights(cfg.classes, 1.0f);
  if (tcfg.class_balanced)
    for (int c = 0; c < cfg.classes; ++c)
      weights[c] = counts[c] ? static_cast<float>(static_cast<double>(labelled) / (present * counts[c])) : 0.0f;

  AdamW<float> opt(tcfg, model.params().size());
  Rng dropout_rng(DeriveSeed(tcfg.seed, "dropout"));
  TrainResult res;
  std::vector<std::pair<CheckpointRecord, std::vector<float>>> kept;
  auto checkpoint = [&](long step) {
    CheckpointRecord rec{step, Evaluate(model, valid.size() ? valid : train)};
    res.checkpoints.push_back(rec);
    kept.emplace_back(rec, model.params());
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      if (a.first.score.recall != b.first.score.recall) return a.first.score.recall > b.first.score.recall;
      if (a.first.score.fpr != b.first.score.fpr) return a.first.score.fpr < b.first.score.fpr;
      return a.first.step > b.first.step;
    });
    if (static_cast<int>(kept.size()) > tcfg.top_k) kept.resize(tcfg.top_k);
  };

  const std::size_t n = train.size();
  const long steps_per_epoch = static_cast<long>((n + tcfg.batch - 1) / tcfg.batch);
  const long total_steps = steps_per_epoch * tcfg.epochs;
  std::vector<std::size_t> order(n);
  std::vector<float> grad;
  long step = 0;
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(DeriveSeed(tcfg.seed, static_cast<std::uint64_t>(epoch)));
    Shuffle(order, shuffle);
    for (std::size_t b = 0; b < n; b += tcfg.batch) {
      std::vector<const Cnn<float>::Mat*> xs;
      std::vector<const std::vector<int>*> ys;
      bool any = false;
      for (std::size_t i = b; i < std::min(n, b + tcfg.batch); ++i) {
        xs.push_back(&train.xs[order[i]]);
        ys.push_back(&train.ys[order[i]]);
        for (int v : train.ys[order[i]]) any = any || (v >= 0 && weights[v] > 0);
      }
      ++step;
      if (any) {
        const float loss = model.LossAndGrad(xs, ys, weights, &grad, &dropout_rng);
        if (!std::isfinite(loss))
          throw Error("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                      " (lr " + std::to_string(tcfg.lr) + ")");
        res.loss_curve.push_back(loss);
        opt.Step(model.params(), grad);
      }
      if (step % tcfg.checkpoint_interval == 0 || step == total_steps) checkpoint(step);
    }
  }

  std::vector<std::vector<float>> ps;
  for (const auto& [rec, p] : kept) {
    ps.push_back(p);
    res.averaged_steps.push_back(rec.step);
  }
  model.params() = AverageParams(ps);
  res.averaged_score = Evaluate(model, valid.size() ? valid : train);
  res.model = DetectorModel{std::move(model), kind, tcfg.seed, train.Hash()};
  return res;
}

}  // namespace cadr
