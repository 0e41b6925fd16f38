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
#include <limits>

#include "cadr/core/bundle.hpp"
#include "cadr/core/manifest.hpp"
#include "cadr/core/rng.hpp"
#include "cadr/core/wav.hpp"
#include "test_util.hpp"

namespace cadr {
namespace {

using testing::TempDir;

// A random valid bundle: random piece splits, normalized random probs,
// random embeddings, random track and labels consistent with the decode.
Bundle RandomBundle(Rng& rng, const std::string& id) {
  const int V = 6 + static_cast<int>(rng.Index(10));
  const int d = 1 + static_cast<int>(rng.Index(5));
  const int n_tokens = static_cast<int>(rng.Index(8));
  Bundle b;
  auto& dec = b.decode;
  dec.utterance_id = id;
  dec.vocab_size = V;
  int frame = 0;
  for (int i = 0; i < n_tokens; ++i) {
    frame += 1 + static_cast<int>(rng.Index(3));
    TokenRecord t;
    t.token_id = static_cast<int>(rng.Index(V));
    t.piece = (i == 0 || rng.Bernoulli(0.5) ? std::string(kBoundaryMarker) : "") + "p" + std::to_string(i);
    t.emit_frame = frame;
    t.duration = static_cast<int>(rng.Index(kMaxDuration + 1));
    double sum = 0.0;
    for (int v = 0; v < V; ++v) {
      t.probs.push_back(static_cast<float>(rng.Uniform()));
      sum += t.probs.back();
    }
    for (auto& p : t.probs) p = static_cast<float>(p / sum);
    for (int k = 0; k < d; ++k) t.joint_embedding.push_back(static_cast<float>(rng.Normal()));
    dec.tokens.push_back(std::move(t));
  }
  dec.frame_embeddings = FloatMatrix(frame + 2, d);
  for (auto& v : dec.frame_embeddings.data) v = static_cast<float>(rng.Normal());
  dec.RebuildWords();
  for (int t = 0; t < dec.num_frames(); ++t)
    b.track.classes.push_back(EventClassFromInt(static_cast<int>(rng.Index(kNumEventClasses))));
  for (int i = 0; i < n_tokens; ++i) b.labels.token_labels.push_back(static_cast<TokenLabel>(rng.Index(3)));
  const auto emitted = dec.EmissionMask();
  for (int t = 0; t < dec.num_frames(); ++t) b.labels.deletion_frame_flags.push_back(!emitted[t] && rng.Bernoulli(0.3));
  b.labels.RecomputeWordLabels(dec.words);
  return b;
}

// The sum-to-1 check is tolerance based; renormalizing floats may still miss
// by more than that, so the test uses its own tolerance.
constexpr double kTol = 1e-5;

TEST(BundleTest, RoundTripIsLossless) {
  TempDir dir;
  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    const auto b = RandomBundle(rng, "u" + std::to_string(i));
    const auto path = dir / ("u" + std::to_string(i) + ".json");
    WriteBundle(b, path, kTol);
    EXPECT_EQ(ReadBundle(path), b) << i;
  }
}

TEST(BundleTest, WriteIsAPureFunction) {
  TempDir dir;
  Rng rng(3);
  const auto b = RandomBundle(rng, "x");
  WriteBundle(b, dir / "a.json", kTol);
  WriteBundle(b, dir / "b.json", kTol);
  EXPECT_EQ(ReadF32(dir / "a.f32"), ReadF32(dir / "b.f32"));
  auto ja = nlohmann::json::parse(ReadTextFile(dir / "a.json"));
  auto jb = nlohmann::json::parse(ReadTextFile(dir / "b.json"));
  ja.erase("sidecar");
  jb.erase("sidecar");
  EXPECT_EQ(ja, jb);
}

Bundle SimpleBundle() {
  Bundle b;
  b.decode = testing::MakeDecode({"hello", "world"}, {2, 1});
  b.track = UniformTrack(b.decode.num_frames(), EventClass::kClean);
  b.labels.token_labels.assign(b.decode.tokens.size(), TokenLabel::kCorrect);
  b.labels.deletion_frame_flags.assign(b.decode.num_frames(), false);
  b.labels.RecomputeWordLabels(b.decode.words);
  return b;
}

std::string FieldOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

TEST(BundleTest, UnnormalizedProbsAreRejected) {
  auto b = SimpleBundle();
  for (auto& p : b.decode.tokens[1].probs) p *= 0.9f;
  EXPECT_NE(FieldOf([&] { ValidateBundle(b.decode, b.track, b.labels); }).find("probs not normalized"),
            std::string::npos);
}

TEST(BundleTest, DurationOutsideRangeIsRejected) {
  auto b = SimpleBundle();
  b.decode.tokens[0].duration = 7;
  const auto what = FieldOf([&] { ValidateBundle(b.decode, b.track, b.labels); });
  EXPECT_NE(what.find("tokens[0].duration"), std::string::npos);
  EXPECT_NE(what.find("duration outside {0..4}"), std::string::npos);
}

TEST(BundleTest, InvalidBundleIsNotWritten) {
  TempDir dir;
  auto b = SimpleBundle();
  b.decode.tokens[0].duration = 7;
  EXPECT_THROW(WriteBundle(b, dir / "x.json"), ValidationError);
  EXPECT_FALSE(fs::exists(dir / "x.json"));
}

TEST(BundleTest, TruncatedSidecarIsRejected) {
  TempDir dir;
  const auto b = SimpleBundle();
  WriteBundle(b, dir / "x.json");
  auto floats = ReadF32(dir / "x.f32");
  floats.pop_back();
  WriteF32(dir / "x.f32", floats);
  try {
    ReadBundle(dir / "x.json");
    FAIL() << "expected an error";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("sidecar length mismatch"), std::string::npos);
  }
}

TEST(BundleTest, NonFiniteEmbeddingIsRejected) {
  TempDir dir;
  const auto b = SimpleBundle();
  WriteBundle(b, dir / "x.json");
  auto floats = ReadF32(dir / "x.f32");
  floats[0] = std::numeric_limits<float>::quiet_NaN();
  WriteF32(dir / "x.f32", floats);
  try {
    ReadBundle(dir / "x.json");
    FAIL() << "expected an error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite value"), std::string::npos);
  }
}

TEST(BundleTest, MissingSidecarIsRejected) {
  TempDir dir;
  WriteBundle(SimpleBundle(), dir / "x.json");
  fs::remove(dir / "x.f32");
  EXPECT_THROW(ReadBundle(dir / "x.json"), IoError);
}

TEST(TypesTest, AnyTokenRule) {
  const std::vector<HypWord> one{{"w", 0, 2}};
  EXPECT_EQ(AnyTokenRule({false, false}, one), std::vector<bool>{false});
  EXPECT_EQ(AnyTokenRule({false, true}, one), std::vector<bool>{true});
  const std::vector<HypWord> three{{"a", 0, 1}, {"b", 1, 3}, {"c", 3, 4}};
  EXPECT_EQ(AnyTokenRule({false, false, true, false}, three), (std::vector<bool>{false, true, false}));
  EXPECT_THROW(AnyTokenRule({false, false}, std::vector<HypWord>{{"a", 0, 1}}), ValidationError);
  EXPECT_THROW(AnyTokenRule({false, false}, std::vector<HypWord>{{"a", 1, 2}}), ValidationError);
}

TEST(TypesTest, GroupWordsFollowsBoundaryMarker) {
  std::vector<TokenRecord> toks(4);
  toks[0].piece = std::string(kBoundaryMarker) + "he";
  toks[1].piece = "llo";
  toks[2].piece = std::string(kBoundaryMarker) + "wor";
  toks[3].piece = "ld";
  const auto w = GroupWords(toks);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0], (HypWord{"hello", 0, 2}));
  EXPECT_EQ(w[1], (HypWord{"world", 2, 4}));
}

TEST(TypesTest, DominantTiesGoToTheMoreSevereClass) {
  FrameEventTrack t{{EventClass::kNoise, EventClass::kMissing, EventClass::kClean, EventClass::kClean}};
  EXPECT_EQ(t.Dominant(0, 2), EventClass::kMissing);
  EXPECT_EQ(t.Dominant(0, 4), EventClass::kClean);
  EXPECT_EQ(t.Dominant(1, 4), EventClass::kClean);
}

TEST(TypesTest, FrameArithmetic) {
  EXPECT_EQ(SamplesPerFrame(), 1280);
  EXPECT_EQ(FrameCount(16000 * 5), 63);
  EXPECT_EQ(FrameCount(3840), 3);
  EXPECT_EQ(FrameCount(3841), 4);
}

TEST(TypesTest, LabelSetRejectsDeletionOnEmission) {
  auto b = SimpleBundle();
  b.labels.deletion_frame_flags[b.decode.tokens[0].emit_frame] = true;
  EXPECT_THROW(b.labels.Validate(b.decode), ValidationError);
}

TEST(ManifestTest, RoundTripAndValidate) {
  TempDir dir;
  CorpusManifest m;
  m.seed = 42;
  for (int i = 0; i < 3; ++i) {
    const std::string id = "u" + std::to_string(i);
    WriteBundle(SimpleBundle(), dir / (id + ".json"));
    ManifestRecord r;
    r.utterance_id = id;
    r.decode_path = id + ".json";
    r.split = static_cast<Split>(i);
    r.distortion_spec = {{"kind", "Noise"}};
    m.records.push_back(r);
  }
  WriteManifest(m, dir / "m.jsonl");
  const auto back = ReadManifest(dir / "m.jsonl");
  EXPECT_EQ(back, m);
  EXPECT_TRUE(ValidateManifest(back, dir.path()).empty());
}

TEST(ManifestTest, DuplicateIdIsReported) {
  TempDir dir;
  WriteBundle(SimpleBundle(), dir / "a.json");
  CorpusManifest m;
  ManifestRecord r;
  r.utterance_id = "dup";
  r.decode_path = "a.json";
  m.records = {r, r};
  const auto v = ValidateManifest(m, dir.path());
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].find("'dup'"), std::string::npos);
}

TEST(ManifestTest, UnresolvablePathsAreReported) {
  TempDir dir;
  CorpusManifest m;
  ManifestRecord r;
  r.utterance_id = "a";
  r.decode_path = "missing.json";
  r.audio_path = "missing.wav";
  m.records = {r};
  EXPECT_EQ(ValidateManifest(m, dir.path()).size(), 2u);
}

TEST(WavTest, Pcm16RoundTripWithinQuantization) {
  TempDir dir;
  AudioClip c;
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) c.samples.push_back(static_cast<float>(rng.Uniform(-0.9, 0.9)));
  WriteWav(c, dir / "a.wav");
  const auto back = ReadWav(dir / "a.wav");
  ASSERT_EQ(back.samples.size(), c.samples.size());
  EXPECT_EQ(back.sample_rate, kSampleRate);
  for (std::size_t i = 0; i < c.samples.size(); ++i) EXPECT_NEAR(back.samples[i], c.samples[i], 0.5 / 32768 + 1e-9);
}

TEST(RngTest, SeededStreamsAreReproducible) {
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.NextU64(), b.NextU64());
  EXPECT_NE(DeriveSeed(1, "x"), DeriveSeed(1, "y"));
  EXPECT_EQ(DeriveSeed(1, "x"), DeriveSeed(1, "x"));
}

TEST(RngTest, IndexStaysInRange) {
  Rng r(2);
  for (int i = 0; i < 10000; ++i) ASSERT_LT(r.Index(7), 7u);
}

}  // namespace
}  // namespace cadr
