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

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cadr/core/io.hpp"
#include "cadr/core/bundle.hpp"
#include "cadr/core/types.hpp"

namespace cadr {

struct ManifestRecord {
  std::string utterance_id;
  std::string audio_path;   // may be empty when no waveform was kept
  nlohmann::ordered_json distortion_spec = nullptr;
  std::string decode_path;
  std::string label_path;   // may be empty before the label stage
  Split split = Split::kTrain;
  std::string condition = "clean";
  int vocab_size = kDefaultVocabSize;

  bool operator==(const ManifestRecord&) const = default;
};

struct CorpusManifest {
  std::vector<ManifestRecord> records;
  std::uint64_t seed = 0;

  bool operator==(const CorpusManifest&) const = default;
};

inline nlohmann::ordered_json ToJson(const ManifestRecord& r, std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["utterance_id"] = r.utterance_id;
  j["condition"] = r.condition;
  j["split"] = SplitName(r.split);
  j["seed"] = seed;
  j["vocab_size"] = r.vocab_size;
  j["audio_path"] = r.audio_path;
  j["distortion_spec"] = r.distortion_spec;
  j["decode_path"] = r.decode_path;
  j["label_path"] = r.label_path;
  return j;
}

inline void WriteManifest(const CorpusManifest& m, const fs::path& path) {
  std::string text;
  for (const auto& r : m.records) text += ToJson(r, m.seed).dump() + "\n";
  WriteTextFile(path, text);
}

inline CorpusManifest ReadManifest(const fs::path& path) {
  CorpusManifest m;
  bool first = true;
  for (const auto& line : ReadLines(path)) {
    const auto j = nlohmann::ordered_json::parse(line);
    ManifestRecord r;
    r.utterance_id = j.at("utterance_id");
    r.condition = j.value("condition", "clean");
    r.split = SplitFromName(j.value("split", "train"));
    r.vocab_size = j.value("vocab_size", kDefaultVocabSize);
    r.audio_path = j.value("audio_path", "");
    r.distortion_spec = j.contains("distortion_spec") ? j["distortion_spec"] : nlohmann::ordered_json();
    r.decode_path = j.value("decode_path", "");
    r.label_path = j.value("label_path", "");
    if (first) m.seed = j.value("seed", std::uint64_t{0});
    first = false;
    m.records.push_back(std::move(r));
  }
  return m;
}

// Returns every consistency violation; empty iff the manifest is consistent.
// Relative paths resolve against `base_dir`.
inline std::vector<std::string> ValidateManifest(const CorpusManifest& m, const fs::path& base_dir) {
  std::vector<std::string> violations;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    const std::string where = "record " + std::to_string(i);
    if (r.utterance_id.empty()) violations.push_back(where + ": empty utterance_id");
    if (!seen.insert(r.utterance_id).second)
      violations.push_back(where + ": duplicate utterance_id '" + r.utterance_id + "'");
    if (r.vocab_size != m.records.front().vocab_size)
      violations.push_back(where + ": vocab_size differs from manifest constant");
    if (r.decode_path.empty()) violations.push_back(where + ": empty decode_path");
    auto check = [&](const std::string& p, const char* field) {
      if (p.empty()) return;
      const fs::path full = fs::path(p).is_absolute() ? fs::path(p) : base_dir / p;
      if (!fs::exists(full)) violations.push_back(where + ": unresolvable " + field + " '" + p + "'");
    };
    check(r.audio_path, "audio_path");
    check(r.decode_path, "decode_path");
    check(r.label_path, "label_path");
    if (!r.decode_path.empty()) {
      const fs::path full = fs::path(r.decode_path).is_absolute() ? fs::path(r.decode_path)
                                                                  : base_dir / r.decode_path;
      if (fs::exists(full) && !fs::exists(SidecarPath(full)))
        violations.push_back(where + ": missing sidecar for '" + r.decode_path + "'");
    }
  }
  return violations;
}

}  // namespace cadr
