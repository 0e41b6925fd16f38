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

#include "cadr/align/label.hpp"
#include "cadr/confidence/tsallis.hpp"
#include "cadr/eval/metrics.hpp"
#include "cadr/transducer/oracle.hpp"
#include "test_util.hpp"

namespace cadr {
namespace {

const Lexicon& Lex() { return testing::DefaultLexicon(); }

OracleConfig SmallConfig() {
  OracleConfig cfg;
  cfg.d_model = 32;
  return cfg;
}

std::vector<UtteranceRef> Corpus(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<UtteranceRef> out;
  for (int i = 0; i < n; ++i) out.push_back(GenerateUtterance(Lex(), "u" + std::to_string(i), rng));
  return out;
}

TEST(TimelineTest, SingleWord) {
  const std::string w = Lex().words().front();
  const UtteranceRef u{"one", {w}, {false}};
  const auto tl = SynthesizeTimeline(u, Lex());
  const auto& ids = Lex().Tokenize(w);
  ASSERT_EQ(tl.tokens.size(), ids.size());
  EXPECT_TRUE(StartsWord(Lex().piece(tl.tokens[0].token_id)));
  int total = 0;
  for (const auto& t : tl.tokens) {
    EXPECT_EQ(t.duration, PieceDuration(Lex().piece(t.token_id)));
    total += t.duration;
  }
  EXPECT_EQ(tl.num_frames, total);
}

TEST(TimelineTest, EmptyReferenceIsRejected) {
  try {
    SynthesizeTimeline(UtteranceRef{"e", {}, {}}, Lex());
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("empty reference"), std::string::npos);
  }
}

TEST(TimelineTest, TokensTileAllButTheGaps) {
  const auto& words = Lex().words();
  const UtteranceRef u{"three", {words[0], words[1], words[2]}, {false, false, false}};
  const auto tl = SynthesizeTimeline(u, Lex());
  int covered = 0, expect_begin = 0;
  for (std::size_t k = 0; k < tl.tokens.size(); ++k) {
    if (k > 0 && tl.tokens[k].word != tl.tokens[k - 1].word) ++expect_begin;
    EXPECT_EQ(tl.tokens[k].begin, expect_begin);
    expect_begin = tl.tokens[k].end();
    covered += tl.tokens[k].duration;
  }
  EXPECT_EQ(tl.num_frames - covered, 2);
  const auto gap = tl.GapMask();
  EXPECT_EQ(std::count(gap.begin(), gap.end(), true), 2);
}

TEST(OracleTest, ZeroErrorChannelIsPerfect) {
  auto cfg = SmallConfig();
  cfg.p_comp_hard = 0.0;
  cfg.p_perc[0] = 0.0;
  const ToyTransducer tx(Lex(), cfg);
  for (const auto& u : Corpus(50, 1)) {
    const auto tl = tx.MakeTimeline(u);
    const auto [d, labels] = tx.Decode(u, UniformTrack(tl.num_frames, EventClass::kClean), 3);
    EXPECT_EQ(d.WordStrings(), u.words);
    EXPECT_EQ(labels.token_labels, std::vector<TokenLabel>(d.tokens.size(), TokenLabel::kCorrect));
    EXPECT_NO_THROW(d.Validate());
  }
}

TEST(OracleTest, CertainDeletionUnderMissing) {
  auto cfg = SmallConfig();
  cfg.p_del[static_cast<int>(EventClass::kMissing)] = 1.0;
  const ToyTransducer tx(Lex(), cfg);
  for (const auto& u : Corpus(30, 2)) {
    const auto tl = tx.MakeTimeline(u);
    const auto [d, labels] = tx.Decode(u, UniformTrack(tl.num_frames, EventClass::kMissing), 3);
    EXPECT_TRUE(d.tokens.empty());
    const auto gap = tl.GapMask();
    for (int f = 0; f < tl.num_frames; ++f) EXPECT_EQ(labels.deletion_frame_flags[f], !gap[f]);
  }
}

TEST(OracleTest, PartialMissingDeletesOnlyCoveredWords) {
  auto cfg = SmallConfig();
  cfg.p_del[static_cast<int>(EventClass::kMissing)] = 1.0;
  cfg.p_perc[0] = 0.0;
  cfg.p_comp_hard = 0.0;
  const ToyTransducer tx(Lex(), cfg);
  for (const auto& u : Corpus(30, 12)) {
    const auto tl = tx.MakeTimeline(u);
    auto track = UniformTrack(tl.num_frames, EventClass::kClean);
    for (int f = tl.word_begin[1]; f < tl.word_end[1]; ++f) track.classes[f] = EventClass::kMissing;
    const auto [d, labels] = tx.Decode(u, track, 3);
    auto want = u.words;
    want.erase(want.begin() + 1);
    EXPECT_EQ(d.WordStrings(), want);
  }
}

TEST(OracleTest, EmpiricalRatesMatchConfiguration) {
  auto cfg = SmallConfig();
  cfg.insertion_ratio = 0.0;
  const int noise = static_cast<int>(EventClass::kNoise);
  cfg.p_del[noise] = 0.0;
  const ToyTransducer tx(Lex(), cfg);
  long perc_tokens = 0, tokens = 0, del_words = 0, words = 0, hard = 0, hard_wrong = 0;
  for (const auto& u : Corpus(200, 3)) {
    const auto tl = tx.MakeTimeline(u);
    const auto clean = tx.CleanReferenceDecode(u, 5);
    // Perception: with deletions and insertions off, tokens align one to one.
    const auto [dn, ln] = tx.Decode(u, UniformTrack(tl.num_frames, EventClass::kNoise), 5);
    EXPECT_EQ(dn.tokens.size(), tl.tokens.size());
    for (std::size_t k = 0; k < tl.tokens.size(); ++k) {
      ++tokens;
      perc_tokens += dn.tokens[k].token_id != clean.tokens[k].token_id || clean.tokens[k].token_id != tl.tokens[k].token_id;
    }
    const auto [dm, lm] = tx.Decode(u, UniformTrack(tl.num_frames, EventClass::kMissing), 5);
    words += tl.num_words();
    del_words += tl.num_words() - static_cast<long>(dm.words.size());
    for (int w = 0; w < tl.num_words(); ++w) {
      if (!u.hard_flags[w]) continue;
      ++hard;
      hard_wrong += clean.words[w].text != u.words[w];
    }
  }
  EXPECT_NEAR(static_cast<double>(perc_tokens) / tokens, cfg.p_perc[noise], 0.03);
  EXPECT_NEAR(static_cast<double>(del_words) / words, cfg.p_del[static_cast<int>(EventClass::kMissing)], 0.03);
  // Hard words also slip under clean perception now and then.
  EXPECT_NEAR(static_cast<double>(hard_wrong) / hard, cfg.p_comp_hard, 0.05);
}

TEST(OracleTest, CleanReferenceIsTheAllCleanDecode) {
  const ToyTransducer tx(Lex(), SmallConfig());
  for (const auto& u : Corpus(10, 4)) {
    const auto tl = tx.MakeTimeline(u);
    EXPECT_EQ(tx.CleanReferenceDecode(u, 8), tx.Decode(u, UniformTrack(tl.num_frames, EventClass::kClean), 8).first);
  }
}

TEST(OracleTest, CertainComprehensionErrorOnHardWords) {
  auto cfg = SmallConfig();
  cfg.p_comp_hard = 1.0;
  const ToyTransducer tx(Lex(), cfg);
  int hard = 0;
  for (auto u : Corpus(40, 5)) {
    u.hard_flags.assign(u.words.size(), false);
    u.hard_flags[0] = true;
    const auto clean = tx.CleanReferenceDecode(u, 2);
    ASSERT_FALSE(clean.words.empty());
    EXPECT_NE(clean.words[0].text, u.words[0]);
    ++hard;
  }
  EXPECT_EQ(hard, 40);
}

TEST(OracleTest, CleanWerTracksComprehensionRate) {
  auto cfg = SmallConfig();
  cfg.p_perc[0] = 0.0;
  const ToyTransducer tx(Lex(), cfg);
  long errors = 0, ref_words = 0, hard = 0;
  for (const auto& u : Corpus(500, 6)) {
    const auto clean = tx.CleanReferenceDecode(u, 9);
    errors += AlignWords(u.words, clean.WordStrings()).errors();
    ref_words += static_cast<long>(u.words.size());
    hard += std::count(u.hard_flags.begin(), u.hard_flags.end(), true);
  }
  const double expected = cfg.p_comp_hard * static_cast<double>(hard) / ref_words;
  EXPECT_NEAR(static_cast<double>(errors) / ref_words, expected, 0.03);
}

TEST(OracleTest, DeterministicGivenSeed) {
  const ToyTransducer tx(Lex(), SmallConfig());
  const auto u = Corpus(1, 7).front();
  const auto tl = tx.MakeTimeline(u);
  const auto track = UniformTrack(tl.num_frames, EventClass::kPacketLoss);
  EXPECT_EQ(tx.Decode(u, track, 42), tx.Decode(u, track, 42));
  EXPECT_NE(tx.Decode(u, track, 42).first.frame_embeddings, tx.Decode(u, track, 43).first.frame_embeddings);
}

TEST(OracleTest, TrackLengthMismatchIsRejected) {
  const ToyTransducer tx(Lex(), SmallConfig());
  const auto u = Corpus(1, 8).front();
  EXPECT_THROW(tx.Decode(u, UniformTrack(3, EventClass::kClean), 1), ValidationError);
}

TEST(OracleTest, ComprehensionErrorsAreConfidentlyWrong) {
  const ToyTransducer tx(Lex(), OracleConfig{});
  double comp = 0.0, perc = 0.0;
  int n_comp = 0, n_perc = 0;
  for (const auto& u : Corpus(150, 9)) {
    const auto tl = tx.MakeTimeline(u);
    const auto [d, labels] = tx.Decode(u, UniformTrack(tl.num_frames, EventClass::kNoise), 11);
    const auto conf = TokenConfidences(d, kDefaultAlpha);
    for (std::size_t k = 0; k < conf.size(); ++k) {
      if (labels.token_labels[k] == TokenLabel::kCompError) comp += conf[k], ++n_comp;
      if (labels.token_labels[k] == TokenLabel::kPercError) perc += conf[k], ++n_perc;
    }
  }
  ASSERT_GT(n_comp, 20);
  ASSERT_GT(n_perc, 20);
  EXPECT_GE(comp / n_comp - perc / n_perc, 0.2);
}

TEST(OracleTest, InvalidConfigIsRejected) {
  auto cfg = SmallConfig();
  cfg.temp_perc = cfg.temp_correct;
  EXPECT_THROW(cfg.Validate(), ValidationError);
  cfg = SmallConfig();
  cfg.p_del[0] = 0.1;
  EXPECT_THROW(cfg.Validate(), ValidationError);
  cfg = SmallConfig();
  cfg.p_perc[static_cast<int>(EventClass::kNoise)] = 0.0;
  EXPECT_THROW(cfg.Validate(), ValidationError);
}

}  // namespace
}  // namespace cadr
