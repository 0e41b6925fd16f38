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

#include "cadr/core/rng.hpp"
#include "cadr/fusion/detectors.hpp"
#include "cadr/fusion/fusion.hpp"
#include "test_util.hpp"

namespace cadr {
namespace {

using testing::MakeDecode;

std::vector<EventClass> Events(std::size_t n, EventClass c) { return std::vector<EventClass>(n, c); }

TEST(FuseTest, ComprehensionWinsOverPerception) {
  const auto d = MakeDecode({"alpha", "beta"}, {1, 1});
  const auto p = Fuse({true, false}, {true, true}, {}, Events(2, EventClass::kNoise), d);
  EXPECT_EQ(p.token_causes[0], Cause::kComprehension);
  EXPECT_EQ(p.token_causes[1], Cause::kPerception);
  EXPECT_EQ(p.word_flags, (std::vector<bool>{true, true}));
}

TEST(FuseTest, IndexMismatchThrows) {
  const auto d = MakeDecode({"alpha", "beta"}, {1, 1});
  EXPECT_THROW(Fuse({true}, {true, true}, {}, Events(2, EventClass::kClean), d), ValidationError);
  EXPECT_THROW(Fuse({true, false}, {true}, {}, Events(2, EventClass::kClean), d), ValidationError);
  EXPECT_THROW(Fuse({true, false}, {true, false}, {}, Events(1, EventClass::kClean), d), ValidationError);
}

TEST(FuseTest, DeletionOnUnemittedSpanSurvives) {
  // Frames: 0 gap, 1 alpha, 2 gap, 3 beta, 4 gap.
  const auto d = MakeDecode({"alpha", "beta"}, {1, 1});
  const auto p = Fuse({false, false}, {false, false}, {{2, 2}}, Events(2, EventClass::kClean), d);
  ASSERT_EQ(p.deletion_events.size(), 1u);
  EXPECT_FALSE(p.Empty());
}

TEST(FuseTest, DeletionTouchingFlaggedTokenIsSuppressed) {
  const auto d = MakeDecode({"alpha", "beta"}, {1, 1});
  const auto p = Fuse({false, false}, {true, false}, {{0, 1}, {4, 4}}, Events(2, EventClass::kClean), d);
  ASSERT_EQ(p.deletion_events.size(), 1u);
  EXPECT_EQ(p.deletion_events[0], (DeletionEvent{4, 4}));
}

TEST(FuseTest, TotalAndIdempotent) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.Index(6));
    std::vector<std::string> words;
    std::vector<int> pieces;
    for (int w = 0; w < n; ++w) {
      words.push_back("word" + std::to_string(w));
      pieces.push_back(1 + static_cast<int>(rng.Index(3)));
    }
    const auto d = MakeDecode(words, pieces);
    std::vector<bool> comp(d.tokens.size()), perc(d.tokens.size());
    std::vector<EventClass> ev(d.tokens.size());
    for (std::size_t i = 0; i < comp.size(); ++i) {
      comp[i] = rng.Bernoulli(0.2);
      perc[i] = rng.Bernoulli(0.3);
      ev[i] = EventClassFromInt(static_cast<int>(rng.Index(6)));
    }
    DeletionEvents del;
    for (int f = 0; f < d.num_frames(); ++f)
      if (rng.Bernoulli(0.1)) del.push_back({f, f});
    const auto p = Fuse(comp, perc, del, ev, d);
    for (std::size_t i = 0; i < comp.size(); ++i) {
      const Cause want = comp[i] ? Cause::kComprehension : perc[i] ? Cause::kPerception : Cause::kNone;
      EXPECT_EQ(p.token_causes[i], want);
    }
    EXPECT_EQ(Refuse(p, d), p);
    const auto tt = TagTranscript(d, p);
    EXPECT_EQ(StripTags(tt.text), JoinWords(d.WordStrings()));
  }
}

TEST(StrategyTest, MappingIsTotal) {
  EXPECT_EQ(StrategyHint(Cause::kComprehension, EventClass::kNoise), Strategy::kSpellOrParaphrase);
  EXPECT_EQ(StrategyHint(Cause::kPerception, EventClass::kNoise), Strategy::kQuieterRoom);
  EXPECT_EQ(StrategyHint(Cause::kPerception, EventClass::kRir), Strategy::kQuieterRoom);
  EXPECT_EQ(StrategyHint(Cause::kPerception, EventClass::kInterference), Strategy::kWaitForOtherSpeaker);
  EXPECT_EQ(StrategyHint(Cause::kPerception, EventClass::kPacketLoss), Strategy::kCheckConnection);
  EXPECT_EQ(StrategyHint(Cause::kPerception, EventClass::kClean), Strategy::kRepeat);
  EXPECT_EQ(StrategyHint(Cause::kPerception, EventClass::kMissing), Strategy::kRepeat);
  for (auto c : kAllEventClasses) {
    EXPECT_EQ(StrategyHint(Cause::kComprehension, c), Strategy::kSpellOrParaphrase);
    EXPECT_EQ(StrategyHint(Cause::kDeletion, c), Strategy::kAskMissingContent);
  }
  EXPECT_THROW(StrategyHint(Cause::kNone, EventClass::kClean), ValidationError);
}

TEST(TagTest, NoErrorsGivesPlainHypothesis) {
  const auto d = MakeDecode({"alpha", "beta", "gamma"}, {1, 2, 1});
  const auto p = Fuse(std::vector<bool>(4), std::vector<bool>(4), {}, Events(4, EventClass::kNoise), d);
  const auto tt = TagTranscript(d, p);
  EXPECT_EQ(tt.text, "alpha beta gamma");
  EXPECT_TRUE(tt.spans.empty());
}

TEST(TagTest, PerceptionUnderNoiseGetsNoiseTag) {
  const auto d = MakeDecode({"alpha", "beta"}, {1, 1});
  const auto p = Fuse({false, false}, {false, true}, {}, Events(2, EventClass::kNoise), d);
  const auto tt = TagTranscript(d, p);
  EXPECT_EQ(tt.text, "alpha <noise>beta</noise>");
  ASSERT_EQ(tt.spans.size(), 1u);
  EXPECT_EQ(tt.spans[0].strategy, Strategy::kQuieterRoom);
}

TEST(TagTest, PerceptionUnderCleanFallsBackToUnknown) {
  const auto d = MakeDecode({"alpha"}, {1});
  const auto p = Fuse({false}, {true}, {}, Events(1, EventClass::kClean), d);
  EXPECT_EQ(TagTranscript(d, p).text, "<unknown>alpha</unknown>");
  EXPECT_EQ(TagTranscript(d, p).spans[0].strategy, Strategy::kRepeat);
}

TEST(TagTest, ComprehensionIsUnknownWhateverTheEvent) {
  const auto d = MakeDecode({"alpha"}, {1});
  const auto p = Fuse({true}, {true}, {}, Events(1, EventClass::kPacketLoss), d);
  const auto tt = TagTranscript(d, p);
  EXPECT_EQ(tt.text, "<unknown>alpha</unknown>");
  EXPECT_EQ(tt.spans[0].strategy, Strategy::kSpellOrParaphrase);
}

TEST(TagTest, WordEventIsTokenMajority) {
  const auto d = MakeDecode({"abcdef"}, {3});
  const auto p = Fuse({false, false, false}, {true, false, false}, {},
                      {EventClass::kInterference, EventClass::kPacketLoss, EventClass::kPacketLoss}, d);
  EXPECT_EQ(TagTranscript(d, p).text, "<packetloss>abcdef</packetloss>");
}

TEST(TagTest, DeletionAtNearestBoundaryTiesLeft) {
  // gap 2: frames 0-1 gap, 2 alpha, 3-4 gap, 5 beta, 6-7 gap.
  // Boundaries sit at frames 0, 3 and 6.
  const auto d = MakeDecode({"alpha", "beta"}, {1, 1}, 2);
  auto tag = [&](int start) {
    const auto p = Fuse({false, false}, {false, false}, {{start, start}}, Events(2, EventClass::kClean), d);
    return TagTranscript(d, p).text;
  };
  EXPECT_EQ(tag(0), "<del/> alpha beta");
  EXPECT_EQ(tag(1), "<del/> alpha beta");   // 1 from 0, 2 from 3
  EXPECT_EQ(tag(3), "alpha <del/> beta");
  EXPECT_EQ(tag(4), "alpha <del/> beta");   // 1 from 3, 2 from 6
  EXPECT_EQ(tag(7), "alpha beta <del/>");
  const auto d1 = MakeDecode({"alpha", "beta"}, {1, 1}, 3);
  // Boundaries at 0, 4, 8; frame 6 is equidistant from 4 and 8.
  const auto p = Fuse({false, false}, {false, false}, {{6, 6}}, Events(2, EventClass::kClean), d1);
  EXPECT_EQ(TagTranscript(d1, p).text, "alpha <del/> beta");
}

TEST(TagTest, SpansAreNumberedInOrder) {
  const auto d = MakeDecode({"alpha", "beta", "gamma"}, {1, 1, 1}, 2);
  const auto p = Fuse({true, false, false}, {false, false, true}, {{3, 3}}, Events(3, EventClass::kRir), d);
  const auto tt = TagTranscript(d, p);
  EXPECT_EQ(tt.text, "<unknown>alpha</unknown> <del/> beta <rir>gamma</rir>");
  ASSERT_EQ(tt.spans.size(), 3u);
  EXPECT_EQ(tt.spans[1].deletion, true);
  EXPECT_EQ(tt.spans[1].position, 1);
  EXPECT_EQ(tt.spans[2].position, 2);
  const auto items = ParseTaggedTranscript(tt.text);
  ASSERT_EQ(items.size(), 4u);
  EXPECT_EQ(items[0].number, 1);
  EXPECT_EQ(items[1].tag, "del");
  EXPECT_EQ(items[2].number, 0);
  EXPECT_EQ(items[3].word, "gamma");
}

TEST(TagTest, StripTagsRejectsMalformedMarkup) {
  EXPECT_EQ(StripTags("<del/> a <noise>b</noise> <del/>"), "a b");
  EXPECT_THROW(StripTags("<noise>a"), ValidationError);
  EXPECT_THROW(StripTags("<noise>a</rir>"), ValidationError);
  EXPECT_THROW(StripTags("<shout>a</shout>"), ValidationError);
  EXPECT_THROW(StripTags("<noise"), ValidationError);
}

TEST(TagTest, EmptyHypothesisWithDeletion) {
  DecodeResult d;
  d.utterance_id = "e";
  d.frame_embeddings = FloatMatrix(3, 2);
  const auto p = Fuse({}, {}, {{0, 2}}, {}, d);
  const auto tt = TagTranscript(d, p);
  EXPECT_EQ(tt.text, "<del/>");
  EXPECT_EQ(StripTags(tt.text), "");
}

TEST(OracleDetectorsTest, ReadsLabels) {
  const auto d = MakeDecode({"alpha", "beta"}, {1, 1});
  LabelSet l;
  l.token_labels = {TokenLabel::kCompError, TokenLabel::kPercError};
  l.deletion_frame_flags.assign(d.num_frames(), false);
  l.deletion_frame_flags[4] = true;
  l.RecomputeWordLabels(d.words);
  AnalyzedDecode a{d, l, UniformTrack(d.num_frames(), EventClass::kNoise)};
  const auto p = OracleDetectors().Detect(a);
  EXPECT_EQ(p.token_causes, (std::vector<Cause>{Cause::kComprehension, Cause::kPerception}));
  EXPECT_EQ(p.deletion_events, (DeletionEvents{{4, 4}}));
  EXPECT_EQ(p.token_events, Events(2, EventClass::kNoise));
  a.labels.reset();
  EXPECT_THROW(OracleDetectors().Detect(a), ValidationError);
}

}  // namespace
}  // namespace cadr
