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

#include "cadr/eval/maj.hpp"
#include "cadr/eval/report.hpp"
#include "cadr/eval/rounds.hpp"

namespace cadr {
namespace {

ClarifySession Session(const std::string& id, double w0, int ref_len, const std::vector<double>& round_wers,
                       Termination t = Termination::kMaxRounds) {
  ClarifySession s;
  s.utterance_id = id;
  s.initial_wer = w0;
  s.reference_length = ref_len;
  for (std::size_t r = 0; r < round_wers.size(); ++r) {
    RoundRecord rec;
    rec.round = static_cast<int>(r) + 1;
    rec.wer = round_wers[r];
    s.rounds.push_back(rec);
  }
  s.termination = t;
  return s;
}

TEST(RoundStatsTest, UnchangedSessionsHaveZeroWerr) {
  const auto st = ComputeRoundStats({Session("a", 0.5, 4, {0.5, 0.5}), Session("b", 0.25, 4, {})}, 3);
  ASSERT_EQ(st.wer.size(), 4u);
  for (int k = 0; k <= 3; ++k) {
    EXPECT_DOUBLE_EQ(st.wer[k], 3.0 / 8);
    ASSERT_TRUE(st.werr[k].has_value());
    EXPECT_DOUBLE_EQ(*st.werr[k], 0.0);
    EXPECT_DOUBLE_EQ(st.improved_rate[k], 0.0);
    EXPECT_DOUBLE_EQ(st.degradation_fpr[k], 0.0);
  }
}

TEST(RoundStatsTest, OneOfTwoImproved) {
  const auto st = ComputeRoundStats({Session("a", 0.5, 4, {0.0}), Session("b", 0.5, 4, {0.5})}, 2);
  EXPECT_DOUBLE_EQ(st.improved_rate[0], 0.0);
  EXPECT_DOUBLE_EQ(st.improved_rate[1], 0.5);
  EXPECT_DOUBLE_EQ(st.improved_rate[2], 0.5);
  EXPECT_DOUBLE_EQ(st.wer[1], 2.0 / 8);
  EXPECT_DOUBLE_EQ(*st.werr[1], 0.5);
  EXPECT_DOUBLE_EQ(st.mean_session_werr[1], 0.5);
}

TEST(RoundStatsTest, CorpusWerPoolsEditCounts) {
  // 1 error in 2 words and 0 errors in 8 words: pooled 0.1, not the mean 0.25.
  const auto st = ComputeRoundStats({Session("a", 0.5, 2, {}), Session("b", 0.0, 8, {})}, 1);
  EXPECT_DOUBLE_EQ(st.wer[0], 0.1);
  EXPECT_EQ(st.zero_baseline_sessions, 1);
  EXPECT_DOUBLE_EQ(st.mean_session_werr[0], 0.0);
}

TEST(RoundStatsTest, DegradationAndFinalRate) {
  const auto st = ComputeRoundStats(
      {Session("a", 0.25, 4, {0.5}), Session("b", 0.25, 4, {0.25}, Termination::kCleanDetected)}, 2);
  EXPECT_DOUBLE_EQ(st.degradation_fpr[1], 0.5);
  EXPECT_LT(*st.werr[1], 0.0);
  EXPECT_DOUBLE_EQ(st.final_rate[0], 0.0);
  EXPECT_DOUBLE_EQ(st.final_rate[1], 0.5);
  EXPECT_DOUBLE_EQ(st.final_rate[2], 0.5);
}

TEST(RoundStatsTest, ZeroCorpusWerHasNoWerr) {
  const auto st = ComputeRoundStats({Session("a", 0.0, 3, {0.0})}, 1);
  EXPECT_FALSE(st.werr[0].has_value());
  EXPECT_DOUBLE_EQ(st.wer[1], 0.0);
}

TEST(RoundStatsTest, RejectsSessionsWithoutReference) {
  ClarifySession s;
  s.utterance_id = "x";
  EXPECT_THROW(ComputeRoundStats({s}, 1), ValidationError);
  EXPECT_THROW(ComputeRoundStats({}, 0), ValidationError);
}

TEST(MajTest, ParsesScores) {
  EXPECT_EQ(ParseMajScore("87"), 87);
  EXPECT_EQ(ParseMajScore(" 100\n"), 100);
  EXPECT_EQ(ParseMajScore("Reasoning first. Score: 42"), 42);
  EXPECT_EQ(ParseMajScore("rating=7"), 7);
  EXPECT_FALSE(ParseMajScore("Score: 101").has_value());
  EXPECT_FALSE(ParseMajScore("no number here").has_value());
}

TEST(MajTest, MockJudgeBounds) {
  MockJudge judge;
  EXPECT_EQ(MajScore({"transcribe", "the cat sat", "the cat sat"}, judge), 100);
  EXPECT_EQ(MajScore({"transcribe", "the cat sat", ""}, judge), 0);
  EXPECT_EQ(MajScore({"transcribe", "a b", "a c"}, judge), 50);
}

TEST(MajTest, PromptHasAllFields) {
  const auto p = MajPrompt({"INSTR", "REF", "PRED"});
  EXPECT_NE(p.find("INSTR"), std::string::npos);
  EXPECT_NE(p.find("REF"), std::string::npos);
  EXPECT_NE(p.find("PRED"), std::string::npos);
  EXPECT_EQ(p.find("{prediction}"), std::string::npos);
}

class FlakyJudge : public JudgePort {
 public:
  explicit FlakyJudge(int bad) : bad_(bad) {}
  std::string Judge(const MajItem&, const std::string&) override {
    ++calls;
    return calls <= bad_ ? "I cannot say" : "Score: 64";
  }
  int calls = 0;

 private:
  int bad_;
};

TEST(MajTest, RetriesUnparseableOutput) {
  FlakyJudge two(2);
  EXPECT_EQ(MajScore({"i", "r", "p"}, two, 2), 64);
  EXPECT_EQ(two.calls, 3);
  FlakyJudge three(3);
  EXPECT_THROW(MajScore({"i", "r", "p"}, three, 2), Error);
  EXPECT_EQ(three.calls, 3);
}

TEST(ReportTest, NumberFormatting) {
  EXPECT_EQ(Fmt2(1.005), "1.00");
  EXPECT_EQ(Fmt2(-0.001), "0.00");
  EXPECT_EQ(Pct2(0.12345), "12.35");
  EXPECT_EQ(Fmt2(std::nan("")), "n/a");
}

TEST(ReportTest, CsvQuoting) {
  Table t{"t", "T", {"name", "value"}, {}};
  t.AddRow({"plain", "1"});
  t.AddRow({"a,b", "say \"hi\""});
  t.AddRow({"two\nlines", "x"});
  EXPECT_EQ(ToCsv(t), "name,value\r\nplain,1\r\n\"a,b\",\"say \"\"hi\"\"\"\r\n\"two\nlines\",x\r\n");
  EXPECT_THROW(t.AddRow({"short"}), ValidationError);
}

TEST(ReportTest, MarkdownEscapesPipes) {
  Table t{"t", "Title", {"k", "v"}, {}};
  t.AddRow({"a|b", "1"});
  const auto md = ToMarkdown(t);
  EXPECT_NE(md.find("### Title"), std::string::npos);
  EXPECT_NE(md.find("a\\|b"), std::string::npos);
  EXPECT_EQ(md, ToMarkdown(t));
}

}  // namespace
}  // namespace cadr
