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
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cadr/core/error.hpp"
#include "cadr/core/types.hpp"

namespace cadr {

inline constexpr double kDefaultAlpha = 0.33;

struct ConfidenceConfig {
  double alpha = kDefaultAlpha;
  double beta = 0.05;

  void Validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha", "outside (0,1)");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("beta", "outside [0,1]");
  }
};

// Normalised Tsallis confidence:
//   C = (exp((|V|^(1-a) - sum p^a) / (1-a)) - 1) / (exp((|V|^(1-a) - 1) / (1-a)) - 1)
// 1 for one-hot, 0 for uniform.
inline double TsallisConfidence(std::span<const float> probs, double alpha,
                                double prob_tol = 1e-5) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha", "outside (0,1)");
  if (probs.size() < 2) throw ValidationError("probs", "need at least two entries");
  double total = 0.0, s = 0.0;
  for (float pf : probs) {
    const double p = pf;
    if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("probs", "invalid probability");
    total += p;
    // exact zeros contribute nothing; tiny values are clamped before the log
    if (p > 0.0) s += std::exp(alpha * std::log(std::max(p, 1e-12)));
  }
  if (std::abs(total - 1.0) > prob_tol) throw ValidationError("probs", "probs not normalized");
  const double q = 1.0 - alpha;
  const double top = std::pow(static_cast<double>(probs.size()), q);
  const double a = std::max(0.0, (top - s) / q);
  const double b = (top - 1.0) / q;
  double c;
  if (b < 700.0) {
    c = std::expm1(a) / std::expm1(b);
  } else {
    c = std::exp(a - b) * (-std::expm1(-a)) / (-std::expm1(-b));
  }
  if (!std::isfinite(c)) c = a >= b ? 1.0 : 0.0;
  return std::clamp(c, 0.0, 1.0);
}

inline double WordConfidence(std::span<const double> token_confidences) {
  if (token_confidences.empty()) throw ValidationError("token_confidences", "empty list");
  return std::accumulate(token_confidences.begin(), token_confidences.end(), 0.0) /
         static_cast<double>(token_confidences.size());
}

inline std::vector<double> TokenConfidences(const DecodeResult& d, double alpha) {
  std::vector<double> out;
  out.reserve(d.tokens.size());
  for (const auto& t : d.tokens) out.push_back(TsallisConfidence(t.probs, alpha));
  return out;
}

inline std::vector<double> WordConfidences(const DecodeResult& d, double alpha) {
  const auto tok = TokenConfidences(d, alpha);
  std::vector<double> out;
  out.reserve(d.words.size());
  for (const auto& w : d.words)
    out.push_back(WordConfidence(std::span<const double>(tok).subspan(w.first_token, w.num_tokens())));
  return out;
}

struct Threshold {
  double tau = 0.0;  // flag iff confidence < tau
  double achieved_fpr = 0.0;
  double achieved_recall = 0.0;
  std::string calibration_set_id;
};

namespace detail {

struct Sweep {
  std::vector<double> taus;
  std::vector<double> fpr, recall;
};

// FPR and recall of the rule conf < tau at every candidate tau: 0, the
// midpoints between adjacent distinct scores, and just above 1.
inline Sweep SweepThresholds(const std::vector<double>& conf, const std::vector<bool>& is_error) {
  if (conf.size() != is_error.size()) throw ValidationError("labels", "length mismatch");
  std::size_t pos = 0;
  for (bool e : is_error) pos += e;
  const std::size_t neg = conf.size() - pos;
  if (pos == 0 || neg == 0) throw ValidationError("labels", "calibration needs both classes");
  std::vector<std::size_t> order(conf.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return conf[a] < conf[b]; });
  Sweep s;
  const double top = std::max(1.0, conf[order.back()]);
  s.taus.push_back(std::min(0.0, conf[order.front()]));
  s.fpr.push_back(0.0);
  s.recall.push_back(0.0);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (is_error[order[i]] ? tp : fp) += 1;
    const bool last_of_value = i + 1 == order.size() || conf[order[i + 1]] != conf[order[i]];
    if (!last_of_value) continue;
    s.taus.push_back(i + 1 == order.size() ? top + 1e-9 : 0.5 * (conf[order[i]] + conf[order[i + 1]]));
    s.fpr.push_back(static_cast<double>(fp) / neg);
    s.recall.push_back(static_cast<double>(tp) / pos);
  }
  return s;
}

}  // namespace detail

// Largest tau whose FPR on the calibration data stays within beta; recall is
// nondecreasing in tau, so this is also the recall maximiser.
inline Threshold CalibrateThreshold(const std::vector<double>& conf, const std::vector<bool>& is_error,
                                    double beta, std::string set_id = {}) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("beta", "outside [0,1]");
  const auto s = detail::SweepThresholds(conf, is_error);
  std::size_t best = 0;
  for (std::size_t i = 0; i < s.taus.size(); ++i)
    if (s.fpr[i] <= beta) best = i;
  return {s.taus[best], s.fpr[best], s.recall[best], std::move(set_id)};
}

// Threshold whose FPR is closest to a target, for matched-FPR comparisons.
// Ties go to the larger tau.
inline Threshold MatchFpr(const std::vector<double>& conf, const std::vector<bool>& is_error,
                          double target_fpr, std::string set_id = {}) {
  const auto s = detail::SweepThresholds(conf, is_error);
  std::size_t best = 0;
  for (std::size_t i = 0; i < s.taus.size(); ++i)
    if (std::abs(s.fpr[i] - target_fpr) <= std::abs(s.fpr[best] - target_fpr)) best = i;
  return {s.taus[best], s.fpr[best], s.recall[best], std::move(set_id)};
}

inline std::vector<bool> FlagByThreshold(const std::vector<double>& conf, double tau) {
  std::vector<bool> f(conf.size());
  for (std::size_t i = 0; i < conf.size(); ++i) f[i] = conf[i] < tau;
  return f;
}

inline std::vector<bool> FlagWords(const DecodeResult& d, const Threshold& th, double alpha = kDefaultAlpha) {
  return FlagByThreshold(WordConfidences(d, alpha), th.tau);
}

}  // namespace cadr
