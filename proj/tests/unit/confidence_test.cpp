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

#include <cmath>
#include <set>

#include "cadr/confidence/tsallis.hpp"
#include "cadr/core/rng.hpp"
#include "test_util.hpp"

namespace cadr {
namespace {

// Evaluated with 50-digit arithmetic outside this code base.
constexpr double kPeakedOracle = 0.048604743105036634;

std::vector<float> OneHot(int V, int k) {
  std::vector<float> p(V, 0.0f);
  p[k] = 1.0f;
  return p;
}

TEST(TsallisTest, OneHotIsOne) {
  for (int V : {4, 1024}) {
    EXPECT_NEAR(TsallisConfidence(OneHot(V, 0), 0.33), 1.0, 1e-9) << V;
    EXPECT_NEAR(TsallisConfidence(OneHot(V, V - 1), 0.33), 1.0, 1e-9) << V;
  }
}

TEST(TsallisTest, UniformIsZero) {
  for (int V : {4, 1024}) {
    const std::vector<float> p(V, 1.0f / V);
    EXPECT_NEAR(TsallisConfidence(p, 0.33), 0.0, 1e-9) << V;
  }
}

TEST(TsallisTest, PeakedCaseMatchesHighPrecisionOracle) {
  const std::vector<float> p{0.7f, 0.1f, 0.1f, 0.1f};
  EXPECT_NEAR(TsallisConfidence(p, 0.33), kPeakedOracle, 1e-3);
}

TEST(TsallisTest, OrderedByPeakedness) {
  const std::vector<float> flat{0.4f, 0.3f, 0.2f, 0.1f};
  const std::vector<float> peaked{0.9f, 0.05f, 0.03f, 0.02f};
  EXPECT_LT(TsallisConfidence(flat, 0.33), TsallisConfidence(peaked, 0.33));
}

TEST(TsallisTest, RejectsBadInput) {
  EXPECT_THROW(TsallisConfidence(std::vector<float>{0.5f, 0.4f}, 0.33), ValidationError);
  EXPECT_THROW(TsallisConfidence(std::vector<float>{1.0f}, 0.33), ValidationError);
  EXPECT_THROW(TsallisConfidence(std::vector<float>{0.5f, 0.5f}, 1.0), ValidationError);
  EXPECT_THROW(TsallisConfidence(std::vector<float>{-0.5f, 1.5f}, 0.33), ValidationError);
}

TEST(WordConfidenceTest, MeanOfTokens) {
  EXPECT_DOUBLE_EQ(WordConfidence(std::vector<double>{0.8}), 0.8);
  EXPECT_DOUBLE_EQ(WordConfidence(std::vector<double>{1.0, 0.0}), 0.5);
  EXPECT_DOUBLE_EQ(WordConfidence(std::vector<double>(5, 0.3)), 0.3);
  EXPECT_THROW(WordConfidence(std::vector<double>{}), ValidationError);
}

TEST(CalibrateTest, SeparableSetGetsMidpoint) {
  const std::vector<double> conf{0.9, 0.4, 0.2, 0.35};
  const std::vector<bool> err{false, false, true, true};
  const auto th = CalibrateThreshold(conf, err, 0.0);
  EXPECT_DOUBLE_EQ(th.tau, 0.375);
  EXPECT_DOUBLE_EQ(th.achieved_recall, 1.0);
  EXPECT_DOUBLE_EQ(th.achieved_fpr, 0.0);
}

TEST(CalibrateTest, InactiveCapFlagsEverything) {
  const std::vector<double> conf{0.9, 0.4, 0.2, 0.35};
  const std::vector<bool> err{false, false, true, true};
  const auto th = CalibrateThreshold(conf, err, 1.0);
  EXPECT_GT(th.tau, 1.0);
  EXPECT_DOUBLE_EQ(th.achieved_recall, 1.0);
  EXPECT_DOUBLE_EQ(th.achieved_fpr, 1.0);
}

TEST(CalibrateTest, OverlappingScoresCostRecallAtZeroFpr) {
  // Every error outscores some correct word.
  const std::vector<double> conf{0.1, 0.5, 0.8, 0.3, 0.6, 0.9};
  const std::vector<bool> err{false, false, false, true, true, true};
  const auto th = CalibrateThreshold(conf, err, 0.0);
  EXPECT_DOUBLE_EQ(th.achieved_fpr, 0.0);
  EXPECT_LT(th.achieved_recall, 1.0);
  EXPECT_DOUBLE_EQ(th.achieved_recall, 0.0);
}

// Recall of the best threshold by trying every cut between sorted scores.
double SweepOracle(const std::vector<double>& conf, const std::vector<bool>& err, double beta) {
  std::set<double> cuts{-1.0, 2.0};
  for (double c : conf) cuts.insert(c);
  double best = 0.0;
  long pos = 0, neg = 0;
  for (bool e : err) (e ? pos : neg) += 1;
  for (double c : cuts) {
    // Rule conf <= c covers every threshold strictly above c and below the next value.
    long tp = 0, fp = 0;
    for (std::size_t i = 0; i < conf.size(); ++i)
      if (conf[i] <= c) (err[i] ? tp : fp) += 1;
    if (static_cast<double>(fp) / neg <= beta) best = std::max(best, static_cast<double>(tp) / pos);
  }
  return best;
}

TEST(CalibrateTest, MatchesExhaustiveSweep) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.Index(40));
    std::vector<double> conf;
    std::vector<bool> err;
    for (int i = 0; i < n; ++i) {
      const bool e = i == 0 || (i != 1 && rng.Bernoulli(0.4));
      err.push_back(e);
      // Coarse grid so ties occur.
      conf.push_back(std::round((e ? rng.Uniform(0.0, 0.7) : rng.Uniform(0.3, 1.0)) * 20) / 20);
    }
    for (double beta : {0.01, 0.05, 0.10}) {
      const auto th = CalibrateThreshold(conf, err, beta);
      EXPECT_LE(th.achieved_fpr, beta);
      EXPECT_DOUBLE_EQ(th.achieved_recall, SweepOracle(conf, err, beta)) << trial << " " << beta;
      const auto flags = FlagByThreshold(conf, th.tau);
      long tp = 0, fp = 0, pos = 0, neg = 0;
      for (int i = 0; i < n; ++i) {
        (err[i] ? pos : neg) += 1;
        if (flags[i]) (err[i] ? tp : fp) += 1;
      }
      EXPECT_DOUBLE_EQ(th.achieved_recall, static_cast<double>(tp) / pos);
      EXPECT_DOUBLE_EQ(th.achieved_fpr, static_cast<double>(fp) / neg);
    }
  }
}

TEST(CalibrateTest, NeedsBothClasses) {
  EXPECT_THROW(CalibrateThreshold({0.1, 0.2}, {true, true}, 0.05), ValidationError);
  EXPECT_THROW(CalibrateThreshold({0.1, 0.2}, {true}, 0.05), ValidationError);
}

TEST(MatchFprTest, PicksClosestFpr) {
  const std::vector<double> conf{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  const std::vector<bool> err{true, false, true, false, false, false};
  const auto th = MatchFpr(conf, err, 0.25);
  EXPECT_DOUBLE_EQ(th.achieved_fpr, 0.25);
  EXPECT_DOUBLE_EQ(th.achieved_recall, 1.0);
}

TEST(FlagWordsTest, OneHotWordsAreNotFlaggedAndFlatOnesAre) {
  auto d = testing::MakeDecode({"a", "b"}, {1, 2}, 1, 8);
  d.tokens[0].probs = OneHot(8, 1);
  Threshold th;
  th.tau = 0.375;
  // Tokens of word "b" keep the uniform default.
  EXPECT_EQ(FlagWords(d, th), (std::vector<bool>{false, true}));
  for (auto& t : d.tokens) t.probs = OneHot(8, 2);
  th.tau = 0.99;
  EXPECT_EQ(FlagWords(d, th), (std::vector<bool>{false, false}));
}

}  // namespace
}  // namespace cadr
