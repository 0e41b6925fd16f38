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

#include <cmath>
#include <filesystem>
#include <string>
#include <tuple>

#include <json.hpp>

#include "cadr/core/io.hpp"
#include "cadr/core/types.hpp"

namespace cadr {

inline constexpr int kBundleFormatVersion = 1;

struct Bundle {
  DecodeResult decode;
  FrameEventTrack track;
  LabelSet labels;

  bool operator==(const Bundle&) const = default;
};

inline fs::path SidecarPath(const fs::path& bundle_path) {
  fs::path p = bundle_path;
  p.replace_extension(".f32");
  return p;
}

inline nlohmann::ordered_json LabelSetToJson(const LabelSet& labels) {
  nlohmann::ordered_json j;
  auto& tl = j["token_labels"] = nlohmann::ordered_json::array();
  for (auto l : labels.token_labels) tl.push_back(static_cast<int>(l));
  auto& df = j["deletion_frames"] = nlohmann::ordered_json::array();
  for (bool b : labels.deletion_frame_flags) df.push_back(b ? 1 : 0);
  auto& wl = j["word_labels"] = nlohmann::ordered_json::array();
  for (auto l : labels.word_labels) wl.push_back(static_cast<int>(l));
  return j;
}

inline LabelSet LabelSetFromJson(const nlohmann::ordered_json& j) {
  LabelSet labels;
  for (int v : j.at("token_labels")) {
    if (v < 0 || v > 2) throw ValidationError("token_labels", "unknown label value");
    labels.token_labels.push_back(static_cast<TokenLabel>(v));
  }
  for (int v : j.at("deletion_frames")) labels.deletion_frame_flags.push_back(v != 0);
  for (int v : j.at("word_labels")) {
    if (v < 0 || v > 1) throw ValidationError("word_labels", "unknown label value");
    labels.word_labels.push_back(static_cast<WordLabel>(v));
  }
  return labels;
}

inline void ValidateBundle(const DecodeResult& result, const FrameEventTrack& track,
                           const LabelSet& labels, double prob_tol = kProbTolerance) {
  result.Validate(prob_tol);
  if (track.size() != result.num_frames())
    throw ValidationError("event_classes", "length differs from frame count");
  labels.Validate(result);
}

// Writes `<path>` (one JSON line) and `<path>.f32` sidecar. Output is a pure
// function of the inputs.
inline void WriteBundle(const DecodeResult& result, const FrameEventTrack& track,
                        const LabelSet& labels, const fs::path& path,
                        double prob_tol = kProbTolerance) {
  ValidateBundle(result, track, labels, prob_tol);
  std::vector<float> sidecar = result.frame_embeddings.data;
  nlohmann::ordered_json j;
  j["format_version"] = kBundleFormatVersion;
  j["utterance_id"] = result.utterance_id;
  j["n_frames"] = result.num_frames();
  j["d_model"] = result.d_model();
  j["vocab_size"] = result.vocab_size;
  j["sidecar"] = SidecarPath(path).filename().string();
  if (prob_tol != kProbTolerance) j["prob_tolerance"] = prob_tol;
  j["frame_embeddings_offset"] = 0;
  auto& toks = j["tokens"] = nlohmann::ordered_json::array();
  for (const auto& t : result.tokens) {
    nlohmann::ordered_json tj;
    tj["token_id"] = t.token_id;
    tj["piece"] = t.piece;
    tj["emit_frame"] = t.emit_frame;
    tj["duration"] = t.duration;
    tj["probs_offset"] = sidecar.size();
    sidecar.insert(sidecar.end(), t.probs.begin(), t.probs.end());
    tj["joint_offset"] = sidecar.size();
    sidecar.insert(sidecar.end(), t.joint_embedding.begin(), t.joint_embedding.end());
    toks.push_back(std::move(tj));
  }
  auto& ev = j["event_classes"] = nlohmann::ordered_json::array();
  for (auto c : track.classes) ev.push_back(static_cast<int>(c));
  const auto label_json = LabelSetToJson(labels);
  for (auto& [k, v] : label_json.items()) j[k] = v;
  j["n_floats"] = sidecar.size();
  WriteTextFile(path, j.dump() + "\n");
  WriteF32(SidecarPath(path), sidecar);
}

inline void WriteBundle(const Bundle& b, const fs::path& path, double prob_tol = kProbTolerance) {
  WriteBundle(b.decode, b.track, b.labels, path, prob_tol);
}

inline Bundle ReadBundle(const fs::path& path) {
  const auto lines = ReadLines(path);
  if (lines.size() != 1) throw IoError("bundle must hold exactly one JSON line: " + path.string());
  const auto j = nlohmann::ordered_json::parse(lines.front());
  if (j.at("format_version").get<int>() != kBundleFormatVersion)
    throw IoError("unsupported bundle format version in " + path.string());
  fs::path sidecar_path = path.parent_path() / j.at("sidecar").get<std::string>();
  if (!fs::exists(sidecar_path)) throw IoError("missing sidecar " + sidecar_path.string());
  const std::vector<float> floats = ReadF32(sidecar_path);
  if (floats.size() != j.at("n_floats").get<std::size_t>())
    throw IoError("sidecar length mismatch: " + sidecar_path.string());
  for (float v : floats)
    if (!std::isfinite(v)) throw ValidationError("sidecar", "non-finite value");

  const int T = j.at("n_frames");
  const int d = j.at("d_model");
  const int V = j.at("vocab_size");
  auto slice = [&](std::size_t offset, std::size_t n, const char* field) {
    if (offset + n > floats.size()) throw IoError(std::string("sidecar length mismatch at ") + field);
    return std::vector<float>(floats.begin() + static_cast<std::ptrdiff_t>(offset),
                              floats.begin() + static_cast<std::ptrdiff_t>(offset + n));
  };

  Bundle b;
  b.decode.utterance_id = j.at("utterance_id");
  b.decode.vocab_size = V;
  b.decode.frame_embeddings.rows = T;
  b.decode.frame_embeddings.cols = d;
  b.decode.frame_embeddings.data =
      slice(j.at("frame_embeddings_offset"), static_cast<std::size_t>(T) * d, "frame_embeddings");
  for (const auto& tj : j.at("tokens")) {
    TokenRecord t;
    t.token_id = tj.at("token_id");
    t.piece = tj.at("piece");
    t.emit_frame = tj.at("emit_frame");
    t.duration = tj.at("duration");
    t.probs = slice(tj.at("probs_offset"), V, "probs");
    t.joint_embedding = slice(tj.at("joint_offset"), d, "joint");
    b.decode.tokens.push_back(std::move(t));
  }
  b.decode.RebuildWords();
  for (int c : j.at("event_classes")) b.track.classes.push_back(EventClassFromInt(c));
  b.labels = LabelSetFromJson(j);
  ValidateBundle(b.decode, b.track, b.labels, j.value("prob_tolerance", kProbTolerance));
  return b;
}

}  // namespace cadr
