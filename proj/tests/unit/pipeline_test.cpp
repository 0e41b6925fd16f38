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

#include <atomic>
#include <sstream>

#include "cadr/pipeline/evaluate.hpp"
#include "cadr/pipeline/parallel.hpp"
#include "cadr/pipeline/pipeline.hpp"
#include "test_util.hpp"

namespace cadr {
namespace {

using testing::TempDir;
using J = nlohmann::ordered_json;

std::string ErrorOf(const J& j) {
  try {
    RunConfigFromJson(j);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

TEST(ConfigTest, DefaultsAreValid) {
  EXPECT_NO_THROW(ValidateConfig(RunConfig{}));
  EXPECT_NO_THROW(RunConfigFromJson(J::object()));
}

TEST(ConfigTest, ErrorsNameTheField) {
  EXPECT_NE(ErrorOf({{"corpus", {{"n_utterances", 0}}}}).find("corpus.n_utterances"), std::string::npos);
  EXPECT_NE(ErrorOf({{"corpus", {{"n_utterance", 10}}}}).find("unknown key"), std::string::npos);
  EXPECT_NE(ErrorOf({{"seed", "seven"}}).find("seed"), std::string::npos);
  EXPECT_NE(ErrorOf({{"clarify", {{"fidelity", 1.5}}}}).find("clarify.fidelity"), std::string::npos);
  EXPECT_NE(ErrorOf({{"distortion", {{"conditions", {"Noise", "Noise"}}}}}).find("duplicate"), std::string::npos);
}

TEST(ConfigTest, RoundTripKeepsTheHash) {
  RunConfig c;
  c.seed = 99;
  c.clarify.K = 5;
  const auto back = RunConfigFromJson(ToJson(c));
  EXPECT_EQ(ConfigHash(back), ConfigHash(c));
  EXPECT_EQ(ToJson(back), ToJson(c));
  RunConfig d = c;
  d.seed = 100;
  EXPECT_NE(ConfigHash(d), ConfigHash(c));
}

TEST(ParallelForTest, EveryIndexOnce) {
  for (int jobs : {1, 2, 8}) {
    std::vector<std::atomic<int>> hits(100);
    ParallelFor(hits.size(), jobs, [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
  ParallelFor(0, 4, [](std::size_t) { FAIL(); });
}

TEST(ParallelForTest, LowestFailingIndexIsRethrown) {
  try {
    ParallelFor(50, 4, [](std::size_t i) {
      if (i == 7 || i == 30) throw Error("at " + std::to_string(i));
    });
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "at 7");
  }
}

RunConfig TinyRun(std::uint64_t seed = 5) {
  RunConfig c;
  c.seed = seed;
  c.corpus.n_utterances = 60;
  c.detectors.cnn.hidden = 32;
  c.detectors.cnn.layers = 2;
  c.detectors.train.epochs = 2;
  c.clarify.text_bypass = true;
  return c;
}

PipelineOptions Quiet(int jobs = 1) {
  PipelineOptions o;
  o.jobs = jobs;
  o.log = nullptr;
  return o;
}

TEST(SynthTest, SubsetsHoldASixthEach) {
  TempDir dir;
  auto cfg = TinyRun();
  cfg.corpus.n_utterances = 600;
  Pipeline p(dir.path(), cfg, Quiet());
  p.RunStage(Stage::kSynth);
  const auto subsets = J::parse(ReadTextFile(dir / "manifests/subsets.json"));
  EXPECT_EQ(subsets.size(), cfg.distortion.conditions.size());
  for (const auto& [cond, ids] : subsets.items()) EXPECT_EQ(ids.size(), 100u) << cond;
  EXPECT_EQ(ReadLines(dir / "manifests/utterances.jsonl").size(), 600u);
}

TEST(SynthTest, SameSeedSameManifests) {
  TempDir a, b, c;
  Pipeline(a.path(), TinyRun(5), Quiet()).RunStage(Stage::kSynth);
  Pipeline(b.path(), TinyRun(5), Quiet()).RunStage(Stage::kSynth);
  Pipeline(c.path(), TinyRun(6), Quiet()).RunStage(Stage::kSynth);
  for (const char* f : {"manifests/utterances.jsonl", "manifests/subsets.json"}) {
    EXPECT_EQ(ReadTextFile(a / f), ReadTextFile(b / f)) << f;
    EXPECT_NE(ReadTextFile(a / f), ReadTextFile(c / f)) << f;
  }
}

TEST(PipelineTest, ConfigMismatchIsRefused) {
  TempDir dir;
  Pipeline(dir.path(), TinyRun(5), Quiet()).Init();
  EXPECT_THROW(Pipeline(dir.path(), TinyRun(6), Quiet()).Init(), ValidationError);
  EXPECT_EQ(Pipeline::Open(dir.path(), Quiet()).config_hash(), ConfigHash(Pipeline(dir.path(), TinyRun(5)).config()));
}

std::map<std::string, std::string> Reports(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(root / "reports")) out[e.path().filename().string()] = ReadTextFile(e.path());
  return out;
}

TEST(PipelineTest, EndToEndIsDeterministicAndConsistent) {
  TempDir a, b;
  Pipeline pa(a.path(), TinyRun(), Quiet(1));
  pa.RunAll();
  Pipeline pb(b.path(), TinyRun(), Quiet(3));
  pb.RunAll();
  const auto ra = Reports(a.path());
  EXPECT_TRUE(ra.count("report.md"));
  EXPECT_TRUE(ra.count("metrics.json"));
  EXPECT_EQ(ra, Reports(b.path()));
  EXPECT_TRUE(pa.Validate().empty());
  for (auto s : kAllStages) EXPECT_TRUE(pa.UpToDate(s)) << StageName(s);

  // Resume skips current stages; an orphan is reported.
  std::ostringstream log;
  auto opt = Quiet();
  opt.log = &log;
  Pipeline(a.path(), TinyRun(), opt).RunAll();
  EXPECT_EQ(log.str().find("start"), std::string::npos);
  WriteTextFile(a / "bundles/stray.json", "{}");
  const auto v = pa.Validate();
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].find("orphaned file"), std::string::npos);
}

}  // namespace
}  // namespace cadr
