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

#include <optional>

#include "cadr/detector/predict.hpp"
#include "cadr/fusion/fusion.hpp"

namespace cadr {

// A decode plus whatever side information a detector may use. Labels and
// the event track exist only for synthetic decodes.
struct AnalyzedDecode {
  DecodeResult decode;
  std::optional<LabelSet> labels;
  std::optional<FrameEventTrack> track;
};

class DetectorPort {
 public:
  virtual ~DetectorPort() = default;
  virtual ErrorProfile Detect(const AnalyzedDecode& a) const = 0;
};

inline std::vector<EventClass> TrackTokenEvents(const DecodeResult& d, const std::optional<FrameEventTrack>& track) {
  std::vector<EventClass> out(d.tokens.size(), EventClass::kClean);
  if (!track) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto [b, e] = TokenFrameSpan(d, i);
    out[i] = track->Dominant(b, e);
  }
  return out;
}

// Perfect detectors read straight from the oracle labels.
class OracleDetectors : public DetectorPort {
 public:
  ErrorProfile Detect(const AnalyzedDecode& a) const override {
    if (!a.labels) throw ValidationError("labels", "oracle detection needs oracle labels");
    const auto& l = *a.labels;
    std::vector<bool> comp(l.token_labels.size()), perc(l.token_labels.size());
    for (std::size_t i = 0; i < comp.size(); ++i) {
      comp[i] = l.token_labels[i] == TokenLabel::kCompError;
      perc[i] = l.token_labels[i] == TokenLabel::kPercError;
    }
    return Fuse(comp, perc, AggregateRuns(l.deletion_frame_flags), TrackTokenEvents(a.decode, a.track), a.decode);
  }
};

// The trained detector suite. A missing event model reports Clean everywhere.
class ModelDetectors : public DetectorPort {
 public:
  ModelDetectors(DetectorModel comp, DetectorModel perc, DetectorModel del,
                 std::optional<DetectorModel> event = std::nullopt)
      : comp_(std::move(comp)), perc_(std::move(perc)), del_(std::move(del)), event_(std::move(event)) {}

  ErrorProfile Detect(const AnalyzedDecode& a) const override {
    const auto& d = a.decode;
    const auto events = event_ ? PredictEvents(*event_, d) : std::vector<EventClass>(d.tokens.size(), EventClass::kClean);
    return Fuse(PredictTokenErrors(comp_, d), PredictTokenErrors(perc_, d), PredictDeletions(del_, d), events, d);
  }

 private:
  DetectorModel comp_, perc_, del_;
  std::optional<DetectorModel> event_;
};

}  // namespace cadr
