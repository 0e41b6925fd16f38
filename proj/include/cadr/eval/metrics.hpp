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

#include <array>
#include <string>
#include <vector>

#include "cadr/align/align.hpp"
#include "cadr/core/error.hpp"
#include "cadr/core/types.hpp"

namespace cadr {

// (S + D + I) / N from the minimum-edit alignment.
inline double Wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  if (ref.empty()) throw ValidationError("ref", "empty reference");
  return static_cast<double>(AlignWords(ref, hyp).errors()) / static_cast<double>(ref.size());
}

inline double WerNormalized(const std::vector<std::string>& ref, const std::vector<std::string>& hyp,
                            const NormalizeOptions& norm = {}) {
  return Wer(NormalizeWords(ref, norm), NormalizeWords(hyp, norm));
}

enum class Level { kToken, kWord, kFrame };

inline std::string_view LevelName(Level l) {
  switch (l) {
    case Level::kToken: return "token";
    case Level::kWord: return "word";
    case Level::kFrame: return "frame";
  }
  return "?";
}

// Binary counts with errors as the positive class.
struct DetectionReport {
  Level level = Level::kWord;
  long tp = 0, fp = 0, fn = 0, tn = 0;

  double recall() const { return tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0; }
  double fpr() const { return fp + tn ? static_cast<double>(fp) / static_cast<double>(fp + tn) : 0.0; }
  double precision() const { return tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0; }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }

  DetectionReport& operator+=(const DetectionReport& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
};

inline DetectionReport MakeDetectionReport(const std::vector<bool>& pred, const std::vector<bool>& gold,
                                           Level level) {
  if (pred.size() != gold.size()) throw ValidationError("pred", "length mismatch with gold labels");
  DetectionReport r;
  r.level = level;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gold[i]) (pred[i] ? r.tp : r.fn) += 1;
    else (pred[i] ? r.fp : r.tn) += 1;
  }
  return r;
}

using Confusion = std::array<std::array<long, kNumEventClasses>, kNumEventClasses>;  // [gold][pred]

struct EventReport {
  Confusion counts{};

  void Add(EventClass gold, EventClass pred) { ++counts[static_cast<int>(gold)][static_cast<int>(pred)]; }

  void Add(const std::vector<EventClass>& gold, const std::vector<EventClass>& pred) {
    if (pred.size() != gold.size()) throw ValidationError("pred", "length mismatch with gold labels");
    for (std::size_t i = 0; i < gold.size(); ++i) Add(gold[i], pred[i]);
  }

  // One-vs-rest counts for class c.
  DetectionReport ClassReport(EventClass c) const {
    DetectionReport r;
    r.level = Level::kToken;
    const int k = static_cast<int>(c);
    for (int g = 0; g < kNumEventClasses; ++g)
      for (int p = 0; p < kNumEventClasses; ++p) {
        const long n = counts[g][p];
        if (g == k) (p == k ? r.tp : r.fn) += n;
        else (p == k ? r.fp : r.tn) += n;
      }
    return r;
  }

  // Mean F1 over classes that occur in gold or predictions.
  double MacroF1() const {
    double sum = 0.0;
    int n = 0;
    for (auto c : kAllEventClasses) {
      const auto r = ClassReport(c);
      if (r.tp + r.fn + r.fp == 0) continue;
      sum += r.f1();
      ++n;
    }
    return n ? sum / n : 0.0;
  }

  // Percentages per gold row; rows without samples stay zero.
  std::array<std::array<double, kNumEventClasses>, kNumEventClasses> RowNormalized() const {
    std::array<std::array<double, kNumEventClasses>, kNumEventClasses> out{};
    for (int g = 0; g < kNumEventClasses; ++g) {
      long total = 0;
      for (long v : counts[g]) total += v;
      if (total == 0) continue;
      for (int p = 0; p < kNumEventClasses; ++p)
        out[g][p] = 100.0 * static_cast<double>(counts[g][p]) / static_cast<double>(total);
    }
    return out;
  }
};

}  // namespace cadr
