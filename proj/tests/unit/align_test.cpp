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

#include <gtest/gtest.h>

#include <functional>
#include <map>

#include "cadr/align/label.hpp"
#include "cadr/core/rng.hpp"
#include "cadr/eval/metrics.hpp"
#include "cadr/transducer/oracle.hpp"
#include "test_util.hpp"

namespace cadr {
namespace {

using testing::MakeDecode;
using W = std::vector<std::string>;

// Top-down memoized edit distance over suffixes, written independently of
// the library's bottom-up table.
int EditDistanceOracle(const W& a, const W& b) {
  std::map<std::pair<std::size_t, std::size_t>, int> memo;
  std::function<int(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> int {
    if (i == a.size()) return static_cast<int>(b.size() - j);
    if (j == b.size()) return static_cast<int>(a.size() - i);
    const auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    int best = go(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
    best = std::min(best, go(i + 1, j) + 1);
    best = std::min(best, go(i, j + 1) + 1);
    return memo[key] = best;
  };
  return go(0, 0);
}

W RandomWords(Rng& rng, int max_len, int alphabet) {
  W w(rng.Index(max_len + 1));
  for (auto& s : w) s = std::string(1, static_cast<char>('a' + rng.Index(alphabet)));
  return w;
}

TEST(WerTest, AgreesWithIndependentOracle) {
  Rng rng(2024);
  for (int i = 0; i < 1000; ++i) {
    W ref = RandomWords(rng, 12, 5);
    if (ref.empty()) ref.push_back("a");
    const W hyp = RandomWords(rng, 12, 5);
    const double expected = static_cast<double>(EditDistanceOracle(ref, hyp)) / ref.size();
    ASSERT_EQ(Wer(ref, hyp), expected) << i;
  }
}

TEST(WerTest, Examples) {
  EXPECT_EQ(Wer({"a", "b"}, {"a", "b"}), 0.0);
  EXPECT_DOUBLE_EQ(Wer({"the", "cat", "sat"}, {"the", "cat"}), 1.0 / 3);
  EXPECT_EQ(Wer({"a", "b"}, {"x", "b", "c"}), 1.0);
  EXPECT_THROW(Wer({}, {"a"}), ValidationError);
  EXPECT_EQ(WerNormalized({"Hello,", "World"}, {"hello", "world."}), 0.0);
}

TEST(AlignTest, IdentityIsAllMatches) {
  const auto a = AlignWords({"a", "b", "c"}, {"a", "b", "c"});
  EXPECT_EQ(a.matches, 3);
  EXPECT_EQ(a.errors(), 0);
}

TEST(AlignTest, SingleDeletion) {
  const auto a = AlignWords({"a", "b", "c"}, {"a", "c"});
  const std::vector<AlignOp> want{{EditOp::kMatch, 0, 0}, {EditOp::kDelete, 1, -1}, {EditOp::kMatch, 2, 1}};
  EXPECT_EQ(a.ops, want);
}

TEST(AlignTest, SingleInsertion) {
  const auto a = AlignWords({"a", "b"}, {"a", "x", "b"});
  const std::vector<AlignOp> want{{EditOp::kMatch, 0, 0}, {EditOp::kInsert, -1, 1}, {EditOp::kMatch, 1, 2}};
  EXPECT_EQ(a.ops, want);
  EXPECT_EQ(a.errors(), 1);
}

TEST(AlignTest, OpsCoverBothSequences) {
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const W r = RandomWords(rng, 8, 3), h = RandomWords(rng, 8, 3);
    const auto a = AlignWords(r, h);
    int ri = 0, hi = 0;
    for (const auto& o : a.ops) {
      if (o.ref >= 0) ASSERT_EQ(o.ref, ri++);
      if (o.hyp >= 0) ASSERT_EQ(o.hyp, hi++);
      if (o.op == EditOp::kMatch) ASSERT_EQ(r[o.ref], h[o.hyp]);
      if (o.op == EditOp::kSubstitute) ASSERT_NE(r[o.ref], h[o.hyp]);
    }
    EXPECT_EQ(ri, static_cast<int>(r.size()));
    EXPECT_EQ(hi, static_cast<int>(h.size()));
    EXPECT_EQ(a.errors(), EditDistanceOracle(r, h));
  }
}

UtteranceRef Ref(const W& words) { return {"t", words, std::vector<bool>(words.size(), false)}; }

TEST(ComprehensionLabelTest, PerfectHypothesisIsCorrect) {
  const auto d = MakeDecode({"a", "bc"}, {1, 2});
  const auto l = LabelComprehension(Ref({"a", "bc"}), d);
  EXPECT_EQ(l.labels.token_labels, std::vector<TokenLabel>(3, TokenLabel::kCorrect));
  EXPECT_EQ(l.reference_deletions, 0);
}

TEST(ComprehensionLabelTest, SubstitutedWordFlagsAllTokens) {
  const auto d = MakeDecode({"a", "bx"}, {1, 2});
  const auto l = LabelComprehension(Ref({"a", "by"}), d);
  EXPECT_EQ(l.labels.token_labels,
            (std::vector<TokenLabel>{TokenLabel::kCorrect, TokenLabel::kCompError, TokenLabel::kCompError}));
  EXPECT_EQ(l.labels.word_labels, (std::vector<WordLabel>{WordLabel::kCorrect, WordLabel::kError}));
}

TEST(ComprehensionLabelTest, InsertionIsFlaggedAndDeletionCounted) {
  const auto d = MakeDecode({"a", "x", "b"}, {1, 1, 1});
  const auto l = LabelComprehension(Ref({"a", "b"}), d);
  EXPECT_EQ(l.labels.word_labels, (std::vector<WordLabel>{WordLabel::kCorrect, WordLabel::kError, WordLabel::kCorrect}));
  const auto short_hyp = MakeDecode({"a"}, {1});
  EXPECT_EQ(LabelComprehension(Ref({"a", "b"}), short_hyp).reference_deletions, 1);
}

TEST(PerceptionLabelTest, IdenticalHypothesesAreClean) {
  const auto d = MakeDecode({"a", "b"}, {1, 1});
  const auto l = LabelPerceptionDeletion(d, d);
  EXPECT_EQ(l.token_labels, std::vector<TokenLabel>(2, TokenLabel::kCorrect));
  EXPECT_EQ(std::count(l.deletion_frame_flags.begin(), l.deletion_frame_flags.end(), true), 0);
}

TEST(PerceptionLabelTest, SubstitutionIsPerceptionError) {
  const auto c = MakeDecode({"a", "b"}, {1, 1});
  const auto d = MakeDecode({"a", "q"}, {1, 1});
  const auto l = LabelPerceptionDeletion(c, d);
  EXPECT_EQ(l.token_labels, (std::vector<TokenLabel>{TokenLabel::kCorrect, TokenLabel::kPercError}));
}

TEST(PerceptionLabelTest, MissingWordFlagsItsCleanFrames) {
  // Clean: gap, a(frame 1), gap, b(3,4), gap, c(6), trailing gap.
  const auto c = MakeDecode({"a", "bd", "c"}, {1, 2, 1});
  auto d = c;
  d.tokens.erase(d.tokens.begin() + 1, d.tokens.begin() + 3);
  d.RebuildWords();
  const auto l = LabelPerceptionDeletion(c, d);
  std::vector<bool> want(c.num_frames(), false);
  want[3] = want[4] = true;
  EXPECT_EQ(l.deletion_frame_flags, want);
  EXPECT_EQ(l.token_labels, std::vector<TokenLabel>(2, TokenLabel::kCorrect));
}

TEST(PerceptionLabelTest, GridMismatchThrows) {
  const auto c = MakeDecode({"a"}, {1});
  const auto d = MakeDecode({"a"}, {1}, 2);
  EXPECT_THROW(LabelPerceptionDeletion(c, d), ValidationError);
}

TEST(WordFlagsTest, AnyTokenRule) {
  const auto d = MakeDecode({"ab", "c"}, {2, 1});
  EXPECT_EQ(WordFlagsFromTokens({false, false, false}, d.words), (std::vector<bool>{false, false}));
  EXPECT_EQ(WordFlagsFromTokens({false, true, false}, d.words), (std::vector<bool>{true, false}));
}

TEST(LabelRoundTripTest, ReconstructsOracleLabels) {
  const auto& lex = testing::DefaultLexicon();
  OracleConfig cfg;
  cfg.d_model = 16;
  ToyTransducer tx(lex, cfg);
  Rng rng(31);
  int mismatches = 0, compared = 0;
  for (int i = 0; i < 60; ++i) {
    const auto u = GenerateUtterance(lex, "u" + std::to_string(i), rng);
    const auto tl = tx.MakeTimeline(u);
    const auto clean = tx.CleanReferenceDecode(u, 4);
    for (auto c : kAllEventClasses) {
      const auto [dist, oracle] = tx.Decode(u, UniformTrack(tl.num_frames, c), 4);
      ++compared;
      if (!(LabelDistorted(u, clean, dist) == oracle)) ++mismatches;
    }
    const auto [clean2, clean_labels] = tx.Decode(u, UniformTrack(tl.num_frames, EventClass::kClean), 4);
    EXPECT_EQ(clean2, clean);
    EXPECT_EQ(LabelComprehension(u, clean).labels, clean_labels);
  }
  EXPECT_EQ(mismatches, 0) << "of " << compared;
}

TEST(DetectionReportTest, HandCount) {
  const auto r = MakeDetectionReport({true, false, true, false}, {true, true, false, false}, Level::kWord);
  EXPECT_EQ(r.tp, 1);
  EXPECT_EQ(r.fn, 1);
  EXPECT_EQ(r.fp, 1);
  EXPECT_EQ(r.tn, 1);
  EXPECT_DOUBLE_EQ(r.recall(), 0.5);
  EXPECT_DOUBLE_EQ(r.fpr(), 0.5);
}

TEST(DetectionReportTest, Extremes) {
  const std::vector<bool> gold{true, false, true, false};
  const auto perfect = MakeDetectionReport(gold, gold, Level::kToken);
  EXPECT_EQ(perfect.recall(), 1.0);
  EXPECT_EQ(perfect.fpr(), 0.0);
  const auto none = MakeDetectionReport(std::vector<bool>(4, false), gold, Level::kToken);
  EXPECT_EQ(none.recall(), 0.0);
  EXPECT_EQ(none.fpr(), 0.0);
  EXPECT_THROW(MakeDetectionReport({true}, gold, Level::kToken), ValidationError);
}

TEST(EventReportTest, ConfusionAndMacroF1) {
  EventReport r;
  r.Add({EventClass::kClean, EventClass::kClean, EventClass::kNoise, EventClass::kNoise},
        {EventClass::kClean, EventClass::kNoise, EventClass::kNoise, EventClass::kNoise});
  EXPECT_EQ(r.counts[0][0], 1);
  EXPECT_EQ(r.counts[0][2], 1);
  EXPECT_EQ(r.counts[2][2], 2);
  // Clean: P 1, R 0.5, F1 2/3. Noise: P 2/3, R 1, F1 0.8.
  EXPECT_NEAR(r.MacroF1(), (2.0 / 3 + 0.8) / 2, 1e-12);
  const auto rows = r.RowNormalized();
  EXPECT_DOUBLE_EQ(rows[0][0], 50.0);
  EXPECT_DOUBLE_EQ(rows[2][2], 100.0);
  EXPECT_DOUBLE_EQ(rows[1][1], 0.0);
}

}  // namespace
}  // namespace cadr
