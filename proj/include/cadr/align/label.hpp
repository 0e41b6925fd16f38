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

#include <vector>

#include "cadr/align/align.hpp"
#include "cadr/core/error.hpp"
#include "cadr/core/types.hpp"

namespace cadr {

struct ComprehensionLabels {
  LabelSet labels;
  int reference_deletions = 0;  // counted, never flagged
};

namespace detail {

inline void FillWordTokens(LabelSet& ls, const DecodeResult& d, int w, TokenLabel l) {
  for (int t = d.words[w].first_token; t < d.words[w].end_token; ++t) ls.token_labels[t] = l;
}

inline LabelSet EmptyLabels(const DecodeResult& d) {
  LabelSet ls;
  ls.token_labels.assign(d.tokens.size(), TokenLabel::kCorrect);
  ls.deletion_frame_flags.assign(d.num_frames(), false);
  return ls;
}

}  // namespace detail

// Hypothesis words that are substitutions or insertions against the
// reference get CompError on every token.
inline ComprehensionLabels LabelComprehension(const UtteranceRef& gt, const DecodeResult& h_clean,
                                              const NormalizeOptions& norm = {}) {
  ComprehensionLabels out{detail::EmptyLabels(h_clean), 0};
  const auto a = AlignWords(NormalizeWords(gt.words, norm), NormalizeWords(h_clean.WordStrings(), norm));
  for (const auto& o : a.ops) {
    if (o.op == EditOp::kSubstitute || o.op == EditOp::kInsert)
      detail::FillWordTokens(out.labels, h_clean, o.hyp, TokenLabel::kCompError);
    else if (o.op == EditOp::kDelete)
      ++out.reference_deletions;
  }
  out.labels.RecomputeWordLabels(h_clean.words);
  return out;
}

// Differences of the distorted hypothesis against the clean one: changed or
// inserted words get PercError; clean words missing from the distorted decode
// flag their clean frame span as deleted.
inline LabelSet LabelPerceptionDeletion(const DecodeResult& h_clean, const DecodeResult& h_dist,
                                        const NormalizeOptions& norm = {}) {
  if (h_clean.num_frames() != h_dist.num_frames())
    throw ValidationError("h_dist", "frame-grid length mismatch");
  LabelSet ls = detail::EmptyLabels(h_dist);
  const auto a = AlignWords(NormalizeWords(h_clean.WordStrings(), norm),
                            NormalizeWords(h_dist.WordStrings(), norm));
  const auto emitted = h_dist.EmissionMask();
  for (const auto& o : a.ops) {
    if (o.op == EditOp::kSubstitute || o.op == EditOp::kInsert) {
      detail::FillWordTokens(ls, h_dist, o.hyp, TokenLabel::kPercError);
    } else if (o.op == EditOp::kDelete) {
      const auto [b, e] = h_clean.WordFrameSpan(o.ref);
      for (int f = b; f < e && f < h_dist.num_frames(); ++f)
        if (!emitted[f]) ls.deletion_frame_flags[f] = true;
    }
  }
  ls.RecomputeWordLabels(h_dist.words);
  return ls;
}

// Full label set of a distorted decode: perception and deletion from the
// clean pseudo-oracle; words matching the clean hypothesis inherit its
// comprehension status.
inline LabelSet LabelDistorted(const UtteranceRef& gt, const DecodeResult& h_clean,
                               const DecodeResult& h_dist, const NormalizeOptions& norm = {}) {
  const auto comp = LabelComprehension(gt, h_clean, norm).labels;
  LabelSet ls = LabelPerceptionDeletion(h_clean, h_dist, norm);
  const auto a = AlignWords(NormalizeWords(h_clean.WordStrings(), norm),
                            NormalizeWords(h_dist.WordStrings(), norm));
  for (const auto& o : a.ops)
    if (o.op == EditOp::kMatch && comp.word_labels[o.ref] == WordLabel::kError)
      detail::FillWordTokens(ls, h_dist, o.hyp, TokenLabel::kCompError);
  ls.RecomputeWordLabels(h_dist.words);
  return ls;
}

inline std::vector<bool> WordFlagsFromTokens(const std::vector<bool>& token_flags,
                                             const std::vector<HypWord>& spans) {
  return AnyTokenRule(token_flags, spans);
}

}  // namespace cadr
