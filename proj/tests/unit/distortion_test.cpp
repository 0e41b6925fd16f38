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

#include "cadr/distortion/distortion.hpp"

namespace cadr {
namespace {

AudioClip RandomClip(std::uint64_t seed, double seconds, double amp = 0.3) {
  Rng rng(seed);
  AudioClip c;
  c.samples.resize(static_cast<std::size_t>(seconds * kSampleRate));
  for (auto& s : c.samples) s = static_cast<float>(amp * rng.Uniform(-1.0, 1.0));
  return c;
}

double SnrDb(std::span<const float> signal, std::span<const float> added) {
  return 10.0 * std::log10(MeanPower(signal) / MeanPower(added));
}

TEST(SnrTest, GainExamples) {
  EXPECT_DOUBLE_EQ(SnrGain(2.0, 2.0, 0.0), 1.0);
  EXPECT_NEAR(SnrGain(2.0, 2.0, 20.0), 0.1, 1e-15);
  EXPECT_THROW(SnrGain(1.0, 0.0, 0.0), Error);
}

TEST(SnrTest, MeasuredSnrMatchesTarget) {
  const auto clip = RandomClip(1, 2.0);
  const auto noise = SynthPinkNoise(7, 1.3);
  for (double target : {-5.0, 0.0, 5.0, 10.0, 20.0}) {
    const auto mixed = MixAtSnr(clip, noise, target);
    std::vector<float> added(clip.samples.size());
    for (std::size_t i = 0; i < added.size(); ++i) added[i] = mixed.samples[i] - clip.samples[i];
    EXPECT_NEAR(SnrDb(clip.samples, added), target, 0.1) << target;
  }
}

std::vector<double> NaiveConvolution(const std::vector<float>& x, const std::vector<float>& h) {
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t n = 0; n < x.size(); ++n)
    for (std::size_t k = 0; k < h.size() && k <= n; ++k) y[n] += static_cast<double>(h[k]) * x[n - k];
  return y;
}

TEST(RirTest, UnitImpulseIsIdentity) {
  const auto clip = RandomClip(2, 0.2);
  AudioClip rir;
  rir.samples = {1.0f};
  const auto out = ApplyRir(clip, rir);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) ASSERT_NEAR(out.samples[i], clip.samples[i], 1e-6);
}

TEST(RirTest, DelayedImpulseShifts) {
  const auto clip = RandomClip(3, 0.2);
  AudioClip rir;
  rir.samples.assign(17, 0.0f);
  rir.samples.back() = 1.0f;
  const auto out = ApplyRir(clip, rir);
  for (std::size_t i = 0; i < 16; ++i) ASSERT_NEAR(out.samples[i], 0.0, 1e-6);
  for (std::size_t i = 16; i < clip.samples.size(); ++i) ASSERT_NEAR(out.samples[i], clip.samples[i - 16], 1e-6);
}

TEST(RirTest, MatchesTimeDomainConvolution) {
  const auto clip = RandomClip(4, 0.25, 0.05);
  AudioClip rir;
  Rng rng(5);
  for (int k = 0; k < 600; ++k) rir.samples.push_back(static_cast<float>(std::exp(-k / 120.0) * rng.Normal() * 0.2));
  const auto want = NaiveConvolution(clip.samples, rir.samples);
  double peak = 0.0;
  for (double v : want) peak = std::max(peak, std::abs(v));
  ASSERT_LT(peak, 1.0) << "test signal must not trigger peak rescaling";
  const auto out = ApplyRir(clip, rir);
  for (std::size_t i = 0; i < want.size(); ++i) ASSERT_NEAR(out.samples[i], want[i], 1e-5) << i;
}

TEST(MissingTest, ZeroDurationIsIdentity) {
  const auto clip = RandomClip(6, 1.0);
  EXPECT_EQ(MaskMissing(clip, 0.3, 0.0), clip);
}

TEST(MissingTest, FullMaskZeroesEverything) {
  const auto clip = RandomClip(6, 1.0);
  const auto out = MaskMissing(clip, 0.0, clip.seconds());
  for (float v : out.samples) ASSERT_EQ(v, 0.0f);
}

TEST(MissingTest, MaskIsExact) {
  const auto clip = RandomClip(7, 2.0);
  const auto out = MaskMissing(clip, 1.0, 0.5);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    if (i >= 16000 && i < 24000) ASSERT_EQ(out.samples[i], 0.0f) << i;
    else ASSERT_EQ(out.samples[i], clip.samples[i]) << i;
  }
  EXPECT_THROW(MaskMissing(clip, 1.8, 0.5), Error);
}

TEST(PacketLossTest, ProxyIsDeterministic) {
  const auto clip = RandomClip(8, 1.0);
  EXPECT_EQ(SimulatePacketLoss(clip, 4, CodecMode::kProxy, 9), SimulatePacketLoss(clip, 4, CodecMode::kProxy, 9));
}

TEST(PacketLossTest, DropRateAt8Kbps) {
  const auto clip = RandomClip(10, 60.0);
  const auto out = SimulatePacketLoss(clip, 8, CodecMode::kProxy, 11);
  const std::size_t frame = 320;
  int zero = 0, total = 0;
  for (std::size_t s = 0; s < out.samples.size(); s += frame, ++total) {
    bool all_zero = true;
    for (std::size_t i = s; i < std::min(s + frame, out.samples.size()); ++i) all_zero = all_zero && out.samples[i] == 0.0f;
    zero += all_zero;
  }
  EXPECT_NEAR(static_cast<double>(zero) / total, 0.10, 0.02);
}

TEST(PacketLossTest, RejectsUnknownBitrate) {
  EXPECT_THROW(SimulatePacketLoss(RandomClip(1, 0.1), 3, CodecMode::kProxy, 1), Error);
}

TEST(PacketLossTest, ExternalCodecKeepsLength) {
  if (!HaveFfmpeg()) GTEST_SKIP() << "ffmpeg not installed";
  AudioClip tone;
  for (int i = 0; i < kSampleRate; ++i) tone.samples.push_back(static_cast<float>(0.3 * std::sin(2 * M_PI * 1000.0 * i / kSampleRate)));
  const auto out = SimulatePacketLoss(tone, 4, CodecMode::kExternal, 1);
  EXPECT_NEAR(static_cast<double>(out.samples.size()), static_cast<double>(tone.samples.size()), 320.0);
}

DistortionSpec Spec(DistortionKind kind) {
  const auto bank = AssetBank::Synthetic(1, 1);
  DistortionSpec s;
  s.kind = kind;
  if (s.HasNoise()) s.noise_id = bank.noises.begin()->first;
  if (s.HasRir()) s.rir_id = bank.rirs.begin()->first;
  if (s.HasInterference()) s.interferer_id = bank.interferers.begin()->first;
  if (s.HasMissing()) s.missing_segment = Segment{1.0, 1.5};
  return s;
}

TEST(TrackTest, FullClipNoise) {
  const auto t = TrackForSpec(Spec(DistortionKind::kNoise), 3 * kSampleRate);
  EXPECT_EQ(t, UniformTrack(FrameCount(3 * kSampleRate), EventClass::kNoise));
}

TEST(TrackTest, MissingSegmentFrames) {
  const auto t = TrackForSpec(Spec(DistortionKind::kMissing), 3 * kSampleRate);
  for (int f = 0; f < t.size(); ++f)
    EXPECT_EQ(t.classes[f], f >= 12 && f <= 18 ? EventClass::kMissing : EventClass::kClean) << f;
}

TEST(TrackTest, NoiseOutranksRir) {
  const auto t = TrackForSpec(Spec(DistortionKind::kRirNoise), 2 * kSampleRate);
  EXPECT_EQ(t, UniformTrack(FrameCount(2 * kSampleRate), EventClass::kNoise));
}

TEST(ApplySpecTest, EveryKindRunsAndTrackMatches) {
  const auto bank = AssetBank::Synthetic(3, 2);
  const auto clip = RandomClip(12, 2.0);
  for (auto kind : kAllDistortionKinds) {
    const auto spec = SampleSpec(kind, clip.seconds(), bank, 100 + static_cast<int>(kind));
    spec.Validate(clip.seconds());
    const auto [out, track] = ApplySpec(clip, spec, bank);
    ASSERT_EQ(out.samples.size(), clip.samples.size());
    EXPECT_EQ(track, TrackForSpec(spec, clip.samples.size())) << DistortionKindName(kind);
    EXPECT_EQ(ToJson(DistortionSpecFromJson(ToJson(spec))), ToJson(spec)) << DistortionKindName(kind);
    const auto again = ApplySpec(clip, spec, bank);
    EXPECT_EQ(again.first, out);
  }
}

TEST(ApplySpecTest, OutOfRangeSnrIsRejected) {
  auto s = Spec(DistortionKind::kNoise);
  s.noise_snr_db = 25.0;
  EXPECT_THROW(s.Validate(2.0), ValidationError);
  s = Spec(DistortionKind::kInterference);
  s.interference_snr_db = 0.0;
  EXPECT_THROW(s.Validate(2.0), ValidationError);
}

}  // namespace
}  // namespace cadr
