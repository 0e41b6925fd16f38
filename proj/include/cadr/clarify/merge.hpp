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

#include <map>
#include <string>
#include <vector>

#include "cadr/clarify/reply.hpp"
#include "cadr/fusion/fusion.hpp"

namespace cadr {

// Where a merged word came from: a kept hypothesis word (hyp >= 0) or the
// n-th word supplied for span `span`.
struct WordOrigin {
  int hyp = -1;
  int span = 0;
  int n = 0;

  bool operator==(const WordOrigin&) const = default;
};

struct MergeResult {
  std::vector<std::string> words;
  std::vector<WordOrigin> origins;
  std::vector<int> resolved_spans;        // spans answered with words or "-"
  std::vector<std::string> diagnostics;   // rejected edits
};

// Applies reply edits to flagged word spans and deletion sites only. Edits
// naming any other span are rejected; every unflagged word is kept as is.
inline MergeResult MergeCorrections(const std::vector<std::string>& hyp,
                                    const std::vector<TagSpan>& spans,
                                    const std::vector<ReplyEdit>& edits) {
  MergeResult out;
  std::map<int, const TagSpan*> by_number;
  for (const auto& s : spans) by_number[s.number] = &s;
  std::map<int, const ReplyEdit*> replace;                 // hyp word -> edit
  std::map<int, std::vector<const ReplyEdit*>> insert_at;  // boundary -> edits
  for (const auto& e : edits) {
    const auto it = by_number.find(e.span);
    if (it == by_number.end()) {
      out.diagnostics.push_back("rejected edit on unflagged span " + std::to_string(e.span));
      continue;
    }
    const TagSpan& s = *it->second;
    if (s.position < 0 || s.position > static_cast<int>(hyp.size()) ||
        (!s.deletion && s.position == static_cast<int>(hyp.size()))) {
      out.diagnostics.push_back("rejected edit on span " + std::to_string(e.span) + " outside the hypothesis");
      continue;
    }
    if (e.kind == ReplyEdit::Kind::kUnsure) continue;
    out.resolved_spans.push_back(e.span);
    if (s.deletion) insert_at[s.position].push_back(&e);
    else replace[s.position] = &e;
  }
  auto emit_edit = [&](const ReplyEdit& e) {
    if (e.kind != ReplyEdit::Kind::kWords) return;
    for (std::size_t n = 0; n < e.words.size(); ++n) {
      out.words.push_back(e.words[n]);
      out.origins.push_back({-1, e.span, static_cast<int>(n)});
    }
  };
  for (int b = 0; b <= static_cast<int>(hyp.size()); ++b) {
    if (auto it = insert_at.find(b); it != insert_at.end())
      for (const auto* e : it->second) emit_edit(*e);
    if (b == static_cast<int>(hyp.size())) break;
    if (auto it = replace.find(b); it != replace.end()) {
      emit_edit(*it->second);
    } else {
      out.words.push_back(hyp[b]);
      out.origins.push_back({b, 0, 0});
    }
  }
  return out;
}

}  // namespace cadr
