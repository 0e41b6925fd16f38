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

#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cadr/align/align.hpp"
#include "cadr/fusion/fusion.hpp"

namespace cadr {

using Json = nlohmann::ordered_json;

// Everything the dialogue manager is allowed to see.
inline Json ManagerPayload(const TaggedTranscript& tt, const Json& history) {
  Json p;
  p["tagged_transcript"] = tt.text;
  p["strategy_hints"] = Json::array();
  for (const auto& s : tt.spans)
    p["strategy_hints"].push_back(
        {{"span", s.number}, {"tag", s.tag}, {"strategy", std::string(StrategyName(s.strategy))}});
  p["history"] = history;
  return p;
}

struct QuarantineResult {
  Json payload;
  std::vector<std::string> violations;
};

// Keeps only the whitelisted structure; anything else is stripped and
// reported.
inline QuarantineResult EnforceQuarantine(const Json& in) {
  QuarantineResult r;
  r.payload = Json::object();
  if (!in.is_object()) {
    r.violations.push_back("payload is not an object");
    return r;
  }
  for (auto it = in.begin(); it != in.end(); ++it) {
    const std::string& key = it.key();
    const Json& v = it.value();
    if (key == "tagged_transcript" && v.is_string()) {
      r.payload[key] = v;
    } else if (key == "strategy_hints" && v.is_array()) {
      Json hints = Json::array();
      for (const auto& h : v) {
        if (h.is_object() && h.size() == 3 && h.contains("span") && h["span"].is_number_integer() &&
            h.contains("tag") && h["tag"].is_string() && h.contains("strategy") && h["strategy"].is_string())
          hints.push_back(h);
        else
          r.violations.push_back("stripped malformed strategy hint");
      }
      r.payload[key] = hints;
    } else if (key == "history" && v.is_array()) {
      Json hist = Json::array();
      for (const auto& h : v) {
        if (h.is_object() && h.size() == 3 && h.contains("round") && h["round"].is_number_integer() &&
            h.contains("query") && h["query"].is_string() && h.contains("reply") && h["reply"].is_string())
          hist.push_back(h);
        else
          r.violations.push_back("stripped malformed history entry");
      }
      r.payload[key] = hist;
    } else {
      r.violations.push_back("stripped field '" + key + "'");
    }
  }
  return r;
}

// Normalized words of free text with markup removed.
inline std::vector<std::string> TextWords(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  bool in_tag = false;
  auto flush = [&] {
    const auto w = NormalizeWord(cur);
    if (!w.empty()) words.push_back(w);
    cur.clear();
  };
  for (char c : text) {
    if (c == '<') {
      flush();
      in_tag = true;
    } else if (c == '>') {
      in_tag = false;
    } else if (!in_tag) {
      if (std::isspace(static_cast<unsigned char>(c))) flush();
      else cur += c;
    }
  }
  flush();
  return words;
}

using NGram = std::vector<std::string>;

inline std::set<NGram> NGrams(const std::vector<std::string>& words, int n) {
  std::set<NGram> out;
  for (std::size_t i = 0; i + n <= words.size(); ++i)
    out.emplace(words.begin() + static_cast<std::ptrdiff_t>(i), words.begin() + static_cast<std::ptrdiff_t>(i + n));
  return out;
}

// All string values inside a JSON document.
inline void CollectStrings(const Json& j, std::vector<std::string>& out) {
  if (j.is_string()) out.push_back(j.get<std::string>());
  else if (j.is_structured())
    for (const auto& v : j) CollectStrings(v, out);
}

// Reference n-grams present in `payload` that were not already public.
inline std::vector<NGram> LeakedNGrams(const Json& payload, const std::vector<std::string>& reference,
                                       const std::set<NGram>& public_ngrams, int n = 3) {
  const auto ref = NGrams(NormalizeWords(reference), n);
  std::vector<std::string> texts;
  CollectStrings(payload, texts);
  std::set<NGram> leaked;
  for (const auto& t : texts)
    for (const auto& g : NGrams(TextWords(t), n))
      if (ref.count(g) && !public_ngrams.count(g)) leaked.insert(g);
  return {leaked.begin(), leaked.end()};
}

}  // namespace cadr
