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

#include <cctype>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cadr/align/align.hpp"
#include "cadr/core/rng.hpp"
#include "cadr/fusion/fusion.hpp"

namespace cadr {

inline constexpr std::string_view kUnsureReply = "I am not sure";
inline constexpr std::string_view kTranscriptPrefix = "Transcript: ";

// One parsed reply line: `k: words`, `k: -` (nothing belongs there) or
// `k: I am not sure`.
struct ReplyEdit {
  enum class Kind { kWords, kNothing, kUnsure };
  int span = 0;
  Kind kind = Kind::kUnsure;
  std::vector<std::string> words;

  bool operator==(const ReplyEdit&) const = default;
};

struct ParsedReply {
  std::vector<ReplyEdit> edits;
  std::vector<std::string> diagnostics;  // lines that did not parse
};

inline std::string Trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

inline bool SameIgnoringCase(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  return true;
}

// Blank lines are skipped; a repeated span number keeps the first line.
inline ParsedReply ParseReply(std::string_view text) {
  ParsedReply out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = Trim(line);
    if (t.empty()) continue;
    const auto colon = t.find(':');
    std::size_t digits = 0;
    while (digits < t.size() && std::isdigit(static_cast<unsigned char>(t[digits]))) ++digits;
    if (colon == std::string::npos || digits == 0 || Trim(t.substr(digits, colon - digits)) != "" ||
        digits > 6) {
      out.diagnostics.push_back("unparsed line: " + t);
      continue;
    }
    ReplyEdit e;
    e.span = std::stoi(t.substr(0, digits));
    const std::string body = Trim(t.substr(colon + 1));
    std::string unsure(kUnsureReply);
    std::string body_nodot = body;
    while (!body_nodot.empty() && body_nodot.back() == '.') body_nodot.pop_back();
    if (SameIgnoringCase(body_nodot, unsure)) {
      e.kind = ReplyEdit::Kind::kUnsure;
    } else if (body == "-") {
      e.kind = ReplyEdit::Kind::kNothing;
    } else {
      std::istringstream ws(body);
      std::string w;
      while (ws >> w) {
        w = NormalizeWord(w);
        if (!w.empty()) e.words.push_back(w);
      }
      if (e.words.empty()) {
        out.diagnostics.push_back("empty answer: " + t);
        continue;
      }
      e.kind = ReplyEdit::Kind::kWords;
    }
    bool seen = false;
    for (const auto& o : out.edits) seen = seen || o.span == e.span;
    if (seen) {
      out.diagnostics.push_back("duplicate span " + std::to_string(e.span));
      continue;
    }
    out.edits.push_back(std::move(e));
  }
  return out;
}

// The tagged transcript embedded in a clarification query: the text after
// the first `Transcript: ` line prefix, or the whole query otherwise.
inline std::string TranscriptFromQuery(std::string_view query) {
  std::istringstream in{std::string(query)};
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = Trim(line);
    if (t.rfind(kTranscriptPrefix, 0) == 0) return Trim(t.substr(kTranscriptPrefix.size()));
  }
  return Trim(query);
}

// What the speaker actually said at each span of a tagged transcript, from
// the word alignment of the (detagged) hypothesis to the truth. Empty means
// nothing belongs there.
inline std::vector<std::pair<int, std::vector<std::string>>> TruthForSpans(
    const std::vector<TranscriptItem>& items, const std::vector<std::string>& truth) {
  std::vector<std::string> hyp;
  for (const auto& it : items)
    if (it.tag != "del") hyp.push_back(NormalizeWord(it.word));
  const auto ref = NormalizeWords(truth);
  const auto a = AlignWords(ref, hyp);
  // Reference words deleted just before hypothesis word j (j = |hyp| is the end).
  std::vector<std::vector<std::string>> deleted_before(hyp.size() + 1);
  std::vector<std::string> hyp_truth(hyp.size());
  int next_hyp = 0;
  for (const auto& o : a.ops) {
    switch (o.op) {
      case EditOp::kDelete: deleted_before[next_hyp].push_back(ref[o.ref]); break;
      case EditOp::kInsert: ++next_hyp; break;
      default: hyp_truth[o.hyp] = ref[o.ref]; ++next_hyp; break;
    }
  }
  std::vector<std::pair<int, std::vector<std::string>>> out;
  int j = 0;
  for (const auto& it : items) {
    if (it.tag == "del") {
      out.push_back({it.number, deleted_before[j]});
      continue;
    }
    if (it.number > 0) {
      std::vector<std::string> w;
      if (!hyp_truth[j].empty()) w.push_back(hyp_truth[j]);
      out.push_back({it.number, w});
    }
    ++j;
  }
  return out;
}

// Deterministic simulated user: answers each queried span truthfully with
// probability `fidelity`, otherwise says it is not sure.
inline std::string ScriptedReply(std::string_view query, const std::vector<std::string>& truth,
                                 double fidelity, std::uint64_t seed) {
  if (!(fidelity >= 0.0 && fidelity <= 1.0)) throw ValidationError("fidelity", "outside [0,1]");
  const auto items = ParseTaggedTranscript(TranscriptFromQuery(query));
  std::string reply;
  for (const auto& [number, words] : TruthForSpans(items, truth)) {
    Rng rng(DeriveSeed(seed, static_cast<std::uint64_t>(number)));
    reply += std::to_string(number) + ": ";
    if (rng.Uniform() >= fidelity) reply += kUnsureReply;
    else if (words.empty()) reply += "-";
    else reply += JoinWords(words);
    reply += "\n";
  }
  return reply;
}

}  // namespace cadr
