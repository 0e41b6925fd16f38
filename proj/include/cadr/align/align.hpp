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
#include <cctype>
#include <string>
#include <vector>

namespace cadr {

struct NormalizeOptions {
  bool lowercase = true;
  bool strip_punctuation = true;  // terminal punctuation only
};

inline std::string NormalizeWord(std::string w, const NormalizeOptions& opt = {}) {
  if (opt.lowercase)
    for (auto& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (opt.strip_punctuation) {
    while (!w.empty() && std::ispunct(static_cast<unsigned char>(w.back()))) w.pop_back();
    while (!w.empty() && std::ispunct(static_cast<unsigned char>(w.front()))) w.erase(w.begin());
  }
  return w;
}

inline std::vector<std::string> NormalizeWords(const std::vector<std::string>& words,
                                               const NormalizeOptions& opt = {}) {
  std::vector<std::string> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(NormalizeWord(w, opt));
  return out;
}

enum class EditOp { kMatch, kSubstitute, kDelete, kInsert };

// ref/hyp are -1 when the op has no word on that side.
struct AlignOp {
  EditOp op;
  int ref = -1;
  int hyp = -1;
  bool operator==(const AlignOp&) const = default;
};

struct Alignment {
  std::vector<AlignOp> ops;
  int matches = 0, substitutions = 0, deletions = 0, insertions = 0;

  int errors() const { return substitutions + deletions + insertions; }

  // hyp index -> aligned ref index, or -1 for an insertion.
  std::vector<int> HypToRef(int n_hyp) const {
    std::vector<int> m(n_hyp, -1);
    for (const auto& o : ops)
      if (o.hyp >= 0) m[o.hyp] = o.ref;
    return m;
  }
};

// Unit-cost Levenshtein alignment. The backtrace runs from the end and on
// ties prefers Match, then Substitute, then Delete, then Insert.
inline Alignment AlignWords(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  const int n = static_cast<int>(ref.size()), m = static_cast<int>(hyp.size());
  std::vector<int> D(static_cast<std::size_t>(n + 1) * (m + 1));
  auto at = [&](int i, int j) -> int& { return D[static_cast<std::size_t>(i) * (m + 1) + j]; };
  for (int i = 0; i <= n; ++i) at(i, 0) = i;
  for (int j = 0; j <= m; ++j) at(0, j) = j;
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1), at(i - 1, j) + 1,
                           at(i, j - 1) + 1});
  Alignment a;
  int i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && ref[i - 1] == hyp[j - 1] && at(i, j) == at(i - 1, j - 1)) {
      a.ops.push_back({EditOp::kMatch, i - 1, j - 1});
      ++a.matches;
      --i, --j;
    } else if (i > 0 && j > 0 && ref[i - 1] != hyp[j - 1] && at(i, j) == at(i - 1, j - 1) + 1) {
      a.ops.push_back({EditOp::kSubstitute, i - 1, j - 1});
      ++a.substitutions;
      --i, --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      a.ops.push_back({EditOp::kDelete, i - 1, -1});
      ++a.deletions;
      --i;
    } else {
      a.ops.push_back({EditOp::kInsert, -1, j - 1});
      ++a.insertions;
      --j;
    }
  }
  std::reverse(a.ops.begin(), a.ops.end());
  return a;
}

}  // namespace cadr
