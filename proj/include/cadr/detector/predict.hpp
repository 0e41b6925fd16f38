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

#include <string>
#include <vector>

#include <json.hpp>

#include "cadr/core/bundle.hpp"
#include "cadr/core/io.hpp"
#include "cadr/core/types.hpp"
#include "cadr/detector/cnn.hpp"
#include "cadr/detector/train.hpp"

namespace cadr {

using FeatureMat = Cnn<float>::Mat;

enum class DetectorKind { kComprehension, kPerception, kDeletion, kEvent };

inline std::string_view DetectorKindName(DetectorKind k) {
  switch (k) {
    case DetectorKind::kComprehension: return "comprehension";
    case DetectorKind::kPerception: return "perception";
    case DetectorKind::kDeletion: return "deletion";
    case DetectorKind::kEvent: return "event";
  }
  return "?";
}

inline DetectorKind DetectorKindFromName(std::string_view s) {
  if (s == "comprehension") return DetectorKind::kComprehension;
  if (s == "perception") return DetectorKind::kPerception;
  if (s == "deletion") return DetectorKind::kDeletion;
  if (s == "event") return DetectorKind::kEvent;
  throw ValidationError("kind", "unknown detector kind '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Input sequences

inline FeatureMat JointSequence(const DecodeResult& d) {
  const int dim = d.tokens.empty() ? d.d_model() : static_cast<int>(d.tokens[0].joint_embedding.size());
  FeatureMat x(static_cast<Eigen::Index>(d.tokens.size()), dim);
  for (std::size_t i = 0; i < d.tokens.size(); ++i)
    for (int j = 0; j < dim; ++j) x(static_cast<Eigen::Index>(i), j) = d.tokens[i].joint_embedding[j];
  return x;
}

inline FeatureMat FrameSequence(const DecodeResult& d) {
  FeatureMat x(d.num_frames(), d.d_model());
  std::copy(d.frame_embeddings.data.begin(), d.frame_embeddings.data.end(), x.data());
  return x;
}

inline std::pair<int, int> TokenFrameSpan(const DecodeResult& d, std::size_t i) {
  const auto& t = d.tokens[i];
  return {t.emit_frame, std::min(d.num_frames(), t.emit_frame + std::max(t.duration, 1))};
}

// Encoder frames mean-pooled over each token's duration.
inline FeatureMat EventSequence(const DecodeResult& d) {
  FeatureMat x = FeatureMat::Zero(static_cast<Eigen::Index>(d.tokens.size()), d.d_model());
  for (std::size_t i = 0; i < d.tokens.size(); ++i) {
    const auto [b, e] = TokenFrameSpan(d, i);
    for (int f = b; f < e; ++f)
      for (int j = 0; j < d.d_model(); ++j) x(static_cast<Eigen::Index>(i), j) += d.frame_embeddings.at(f, j);
    x.row(static_cast<Eigen::Index>(i)) /= static_cast<float>(e - b);
  }
  return x;
}

inline FeatureMat InputSequence(const DecodeResult& d, DetectorKind k) {
  switch (k) {
    case DetectorKind::kComprehension:
    case DetectorKind::kPerception: return JointSequence(d);
    case DetectorKind::kDeletion: return FrameSequence(d);
    case DetectorKind::kEvent: return EventSequence(d);
  }
  return {};
}

// Training targets. Deletion targets skip emission frames, which the mask
// removes at inference anyway.
inline std::vector<int> TargetSequence(const DecodeResult& d, const LabelSet& labels,
                                       const FrameEventTrack& track, DetectorKind k) {
  std::vector<int> y;
  switch (k) {
    case DetectorKind::kComprehension:
      for (auto l : labels.token_labels) y.push_back(l == TokenLabel::kCompError);
      break;
    case DetectorKind::kPerception:
      for (auto l : labels.token_labels) y.push_back(l == TokenLabel::kPercError);
      break;
    case DetectorKind::kDeletion: {
      const auto emitted = d.EmissionMask();
      for (int f = 0; f < d.num_frames(); ++f)
        y.push_back(emitted[f] ? -1 : static_cast<int>(labels.deletion_frame_flags[f]));
      break;
    }
    case DetectorKind::kEvent:
      for (std::size_t i = 0; i < d.tokens.size(); ++i) {
        const auto [b, e] = TokenFrameSpan(d, i);
        y.push_back(static_cast<int>(track.Dominant(b, e)));
      }
      break;
  }
  return y;
}

// ---------------------------------------------------------------------------
// Inference

inline void RequireClasses(const DetectorModel& m, int classes, std::string_view what) {
  if (m.cnn.config().classes != classes)
    throw ValidationError("model", std::string(what) + " needs a " + std::to_string(classes) + "-class head");
}

inline std::vector<bool> PredictTokenErrors(const DetectorModel& m, const DecodeResult& d) {
  RequireClasses(m, 2, "token error detection");
  if (d.tokens.empty()) return {};
  const auto cls = PredictClasses(m.cnn, JointSequence(d));
  std::vector<bool> out(cls.size());
  for (std::size_t i = 0; i < cls.size(); ++i) out[i] = cls[i] == 1;
  return out;
}

// Inclusive frame range.
struct DeletionEvent {
  int start_frame = 0;
  int end_frame = 0;
  bool operator==(const DeletionEvent&) const = default;
};

using DeletionEvents = std::vector<DeletionEvent>;

inline DeletionEvents AggregateRuns(const std::vector<bool>& flags) {
  DeletionEvents ev;
  for (int t = 0; t < static_cast<int>(flags.size()); ++t) {
    if (!flags[t]) continue;
    if (!ev.empty() && ev.back().end_frame == t - 1) ev.back().end_frame = t;
    else ev.push_back({t, t});
  }
  return ev;
}

// Frame classifier output AND no emission at the frame, then runs.
inline std::vector<bool> MaskedDeletionFlags(const std::vector<bool>& fired, const DecodeResult& d) {
  const auto emitted = d.EmissionMask();
  std::vector<bool> out(fired.size());
  for (std::size_t t = 0; t < fired.size(); ++t) out[t] = fired[t] && !emitted[t];
  return out;
}

inline DeletionEvents PredictDeletions(const DetectorModel& m, const DecodeResult& d) {
  RequireClasses(m, 2, "deletion detection");
  if (d.num_frames() == 0) return {};
  const auto cls = PredictClasses(m.cnn, FrameSequence(d));
  std::vector<bool> fired(cls.size());
  for (std::size_t t = 0; t < cls.size(); ++t) fired[t] = cls[t] == 1;
  return AggregateRuns(MaskedDeletionFlags(fired, d));
}

inline std::vector<EventClass> PredictEvents(const DetectorModel& m, const DecodeResult& d) {
  RequireClasses(m, kNumEventClasses, "event detection");
  if (d.tokens.empty()) return {};
  std::vector<EventClass> out;
  for (int c : PredictClasses(m.cnn, EventSequence(d))) out.push_back(EventClassFromInt(c));
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint file: one JSON header line plus a float sidecar holding
// parameters, input mean and input scale in that order.

inline constexpr int kCheckpointFormatVersion = 1;

inline void SaveModel(const DetectorModel& m, const fs::path& path) {
  nlohmann::ordered_json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["kind"] = m.kind;
  j["config"] = ToJson(m.cnn.config());
  j["fingerprint"] = {{"seed", m.seed}, {"data_hash", m.data_hash}};
  j["n_params"] = m.cnn.params().size();
  j["sidecar"] = SidecarPath(path).filename().string();
  std::vector<float> blob = m.cnn.params();
  blob.insert(blob.end(), m.cnn.input_mean().begin(), m.cnn.input_mean().end());
  blob.insert(blob.end(), m.cnn.input_scale().begin(), m.cnn.input_scale().end());
  WriteTextFile(path, j.dump() + "\n");
  WriteF32(SidecarPath(path), blob);
}

inline DetectorModel LoadModel(const fs::path& path) {
  const auto j = nlohmann::ordered_json::parse(ReadTextFile(path));
  if (j.at("format_version").get<int>() != kCheckpointFormatVersion)
    throw ValidationError("format_version", "unsupported checkpoint version");
  DetectorModel m;
  m.cnn = Cnn<float>(CnnConfigFromJson(j.at("config")));
  m.kind = j.value("kind", "");
  m.seed = j.at("fingerprint").at("seed").get<std::uint64_t>();
  m.data_hash = j.at("fingerprint").at("data_hash").get<std::string>();
  const auto blob = ReadF32(path.parent_path() / j.at("sidecar").get<std::string>());
  const std::size_t np = m.cnn.params().size(), d = m.cnn.input_mean().size();
  if (j.at("n_params").get<std::size_t>() != np || blob.size() != np + 2 * d)
    throw ValidationError("sidecar", "sidecar length mismatch");
  std::copy(blob.begin(), blob.begin() + np, m.cnn.params().begin());
  std::copy(blob.begin() + np, blob.begin() + np + d, m.cnn.input_mean().begin());
  std::copy(blob.begin() + np + d, blob.end(), m.cnn.input_scale().begin());
  return m;
}

}  // namespace cadr
