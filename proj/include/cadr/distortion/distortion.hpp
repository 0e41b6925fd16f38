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
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <complex>
#include <vector>

#include <unistd.h>

#include <json.hpp>
#include <unsupported/Eigen/FFT>

#include "cadr/core/error.hpp"
#include "cadr/core/rng.hpp"
#include "cadr/core/types.hpp"
#include "cadr/core/wav.hpp"
#include "cadr/distortion/assets.hpp"

namespace cadr {

// ---------------------------------------------------------------------------
// Primitive operations

inline double MeanPower(std::span<const float> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (float v : x) acc += static_cast<double>(v) * v;
  return acc / static_cast<double>(x.size());
}

// `other` repeated or truncated to exactly `n` samples.
inline std::vector<float> LoopTo(std::span<const float> other, std::size_t n) {
  if (other.empty()) throw Error("cannot loop an empty clip");
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = other[i % other.size()];
  return out;
}

inline double SnrGain(double clip_power, double other_power, double snr_db) {
  if (other_power <= 0.0) throw Error("zero-power interferer: gain undefined");
  if (clip_power <= 0.0) throw Error("zero-power clip: SNR undefined");
  return std::sqrt(clip_power / (other_power * std::pow(10.0, snr_db / 10.0)));
}

// clip + g * other, g chosen so that 10 log10(P_clip / P(g*other)) = snr_db.
inline AudioClip MixAtSnr(const AudioClip& clip, const AudioClip& other, double snr_db) {
  if (clip.sample_rate != other.sample_rate) throw Error("sample rate mismatch in mix_at_snr");
  const auto looped = LoopTo(other.samples, clip.samples.size());
  const double g = SnrGain(MeanPower(clip.samples), MeanPower(looped), snr_db);
  AudioClip out = clip;
  for (std::size_t i = 0; i < out.samples.size(); ++i)
    out.samples[i] = static_cast<float>(out.samples[i] + g * looped[i]);
  return out;
}

// Full convolution (via FFT) truncated to the clip length; rescaled to the
// input peak if the result would clip.
inline AudioClip ApplyRir(const AudioClip& clip, const AudioClip& rir) {
  if (rir.samples.empty()) throw Error("empty rir");
  const std::size_t n = clip.samples.size();
  const std::size_t m = std::min(rir.samples.size(), n);
  std::size_t nfft = 1;
  while (nfft < n + m - 1) nfft <<= 1;
  std::vector<double> a(nfft, 0.0), b(nfft, 0.0), y;
  std::copy(clip.samples.begin(), clip.samples.end(), a.begin());
  std::copy(rir.samples.begin(), rir.samples.begin() + static_cast<std::ptrdiff_t>(m), b.begin());
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> fa, fb;
  fft.fwd(fa, a);
  fft.fwd(fb, b);
  for (std::size_t i = 0; i < fa.size(); ++i) fa[i] *= fb[i];
  fft.inv(y, fa);
  y.resize(n);
  double peak_out = 0.0, peak_in = 0.0;
  for (double v : y) peak_out = std::max(peak_out, std::abs(v));
  for (float v : clip.samples) peak_in = std::max(peak_in, static_cast<double>(std::abs(v)));
  const double scale = peak_out > 1.0 ? peak_in / peak_out : 1.0;
  AudioClip out = clip;
  for (std::size_t i = 0; i < n; ++i) out.samples[i] = static_cast<float>(y[i] * scale);
  return out;
}

inline std::pair<std::size_t, std::size_t> SegmentSamples(double start_s, double end_s,
                                                          int sample_rate) {
  return {static_cast<std::size_t>(std::llround(start_s * sample_rate)),
          static_cast<std::size_t>(std::llround(end_s * sample_rate))};
}

// Zeroes [start, start + dur); every other sample is left untouched.
inline AudioClip MaskMissing(const AudioClip& clip, double start_s, double dur_s) {
  if (start_s < 0.0 || dur_s < 0.0 || start_s + dur_s > clip.seconds() + 1e-9)
    throw Error("missing segment out of bounds");
  auto [a, b] = SegmentSamples(start_s, start_s + dur_s, clip.sample_rate);
  b = std::min(b, clip.samples.size());
  AudioClip out = clip;
  std::fill(out.samples.begin() + static_cast<std::ptrdiff_t>(a),
            out.samples.begin() + static_cast<std::ptrdiff_t>(b), 0.0f);
  return out;
}

enum class CodecMode { kProxy, kExternal };

inline bool ValidBitrate(int kbps) { return kbps == 1 || kbps == 2 || kbps == 4 || kbps == 8; }

inline int BitrateIndex(int kbps) {
  switch (kbps) {
    case 1: return 0;
    case 2: return 1;
    case 4: return 2;
    case 8: return 3;
  }
  throw Error("bitrate must be one of {1,2,4,8} kbps, got " + std::to_string(kbps));
}

// Proxy codec constants; monotone in bitrate.
inline constexpr std::array<double, 4> kProxyDropProbability = {0.5, 0.35, 0.2, 0.1};
inline constexpr std::array<int, 4> kProxyLevels = {16, 32, 64, 128};
inline constexpr double kCodecFrameSeconds = 0.020;

inline float Quantize(float x, int levels) {
  const double c = std::clamp(static_cast<double>(x), -1.0, 1.0);
  const double step = std::round((c + 1.0) / 2.0 * (levels - 1));
  return static_cast<float>(step / (levels - 1) * 2.0 - 1.0);
}

inline bool HaveFfmpeg() { return std::system("command -v ffmpeg >/dev/null 2>&1") == 0; }

// Round-trips through libopus using the reference encode command.
inline AudioClip ExternalOpusRoundTrip(const AudioClip& clip, int bitrate_kbps, std::uint64_t seed) {
  if (!HaveFfmpeg())
    throw Error("ffmpeg not found on PATH; rerun packet-loss simulation in proxy mode");
  const fs::path dir = fs::temp_directory_path() /
                       ("cadr-opus-" + std::to_string(DeriveSeed(seed, std::to_string(::getpid()))));
  fs::create_directories(dir);
  const fs::path in = dir / "in.wav", enc = dir / "out.opus", back = dir / "back.wav";
  WriteWav(clip, in);
  const std::string b = std::to_string(bitrate_kbps) + "k";
  const std::string encode = "ffmpeg -i " + in.string() + " -c:a libopus -b:a " + b + " " +
                             enc.string() + " >/dev/null 2>&1";
  const std::string decode = "ffmpeg -i " + enc.string() + " -ar " +
                             std::to_string(clip.sample_rate) + " -ac 1 -c:a pcm_s16le " +
                             back.string() + " >/dev/null 2>&1";
  if (std::system(encode.c_str()) != 0 || std::system(decode.c_str()) != 0) {
    fs::remove_all(dir);
    throw Error("ffmpeg opus round trip failed at " + b);
  }
  AudioClip out = ReadWav(back);
  fs::remove_all(dir);
  out.samples.resize(clip.samples.size(), 0.0f);
  out.sample_rate = clip.sample_rate;
  return out;
}

inline AudioClip SimulatePacketLoss(const AudioClip& clip, int bitrate_kbps, CodecMode mode,
                                    std::uint64_t seed) {
  const int idx = BitrateIndex(bitrate_kbps);
  if (mode == CodecMode::kExternal) return ExternalOpusRoundTrip(clip, bitrate_kbps, seed);
  Rng rng(seed);
  const auto frame = static_cast<std::size_t>(std::lround(kCodecFrameSeconds * clip.sample_rate));
  AudioClip out = clip;
  for (std::size_t start = 0; start < out.samples.size(); start += frame) {
    const std::size_t end = std::min(start + frame, out.samples.size());
    const bool drop = rng.Bernoulli(kProxyDropProbability[idx]);
    for (std::size_t i = start; i < end; ++i)
      out.samples[i] = drop ? 0.0f : Quantize(out.samples[i], kProxyLevels[idx]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Distortion specs

enum class DistortionKind : int {
  kNoise = 0,
  kNoisePartial,
  kRir,
  kInterference,
  kPacketLoss,
  kMissing,
  kRirNoise,
  kMultiNoRir,
  kMultiRir,
};

inline constexpr std::array<DistortionKind, 9> kAllDistortionKinds = {
    DistortionKind::kNoise,      DistortionKind::kNoisePartial, DistortionKind::kRir,
    DistortionKind::kInterference, DistortionKind::kPacketLoss, DistortionKind::kMissing,
    DistortionKind::kRirNoise,   DistortionKind::kMultiNoRir,   DistortionKind::kMultiRir};

inline std::string_view DistortionKindName(DistortionKind k) {
  switch (k) {
    case DistortionKind::kNoise: return "Noise";
    case DistortionKind::kNoisePartial: return "NoisePartial";
    case DistortionKind::kRir: return "RIR";
    case DistortionKind::kInterference: return "Interference";
    case DistortionKind::kPacketLoss: return "PacketLoss";
    case DistortionKind::kMissing: return "Missing";
    case DistortionKind::kRirNoise: return "RIRNoise";
    case DistortionKind::kMultiNoRir: return "MultiNoRIR";
    case DistortionKind::kMultiRir: return "MultiRIR";
  }
  return "?";
}

inline DistortionKind DistortionKindFromName(std::string_view s) {
  for (auto k : kAllDistortionKinds)
    if (DistortionKindName(k) == s) return k;
  throw ValidationError("kind", "unknown distortion kind '" + std::string(s) + "'");
}

struct Segment {
  double start_s = 0.0;
  double end_s = 0.0;
  bool operator==(const Segment&) const = default;
};

// Parameters of one distortion condition. Components absent from the kind are
// ignored; a missing segment on a present component means "whole clip".
struct DistortionSpec {
  DistortionKind kind = DistortionKind::kNoise;
  double noise_snr_db = 10.0;
  std::optional<Segment> noise_segment;
  double interference_snr_db = 10.0;
  std::optional<Segment> interference_segment;
  int bitrate_kbps = 4;
  std::optional<Segment> packet_segment;
  std::optional<Segment> missing_segment;
  std::string noise_id;
  std::string rir_id;
  std::string interferer_id;
  std::uint64_t seed = 0;

  bool HasRir() const {
    return kind == DistortionKind::kRir || kind == DistortionKind::kRirNoise ||
           kind == DistortionKind::kMultiRir;
  }
  bool HasNoise() const {
    return kind == DistortionKind::kNoise || kind == DistortionKind::kNoisePartial ||
           kind == DistortionKind::kRirNoise || kind == DistortionKind::kMultiNoRir ||
           kind == DistortionKind::kMultiRir;
  }
  bool HasInterference() const {
    return kind == DistortionKind::kInterference || kind == DistortionKind::kMultiNoRir ||
           kind == DistortionKind::kMultiRir;
  }
  bool HasPacketLoss() const {
    return kind == DistortionKind::kPacketLoss || kind == DistortionKind::kMultiNoRir ||
           kind == DistortionKind::kMultiRir;
  }
  bool HasMissing() const {
    return kind == DistortionKind::kMissing || kind == DistortionKind::kMultiNoRir ||
           kind == DistortionKind::kMultiRir;
  }

  void Validate(double clip_seconds) const {
    auto check_seg = [&](const std::optional<Segment>& s, const char* field) {
      if (!s) return;
      if (s->start_s < 0.0 || s->end_s < s->start_s || s->end_s > clip_seconds + 1e-9)
        throw ValidationError(field, "segment outside clip bounds");
    };
    if (HasNoise()) {
      if (noise_snr_db < -5.0 || noise_snr_db > 20.0)
        throw ValidationError("noise_snr_db", "outside [-5, 20] dB");
      if (noise_id.empty()) throw ValidationError("noise_id", "required");
      check_seg(noise_segment, "noise_segment");
    }
    if (HasInterference()) {
      if (interference_snr_db < 5.0 || interference_snr_db > 20.0)
        throw ValidationError("interference_snr_db", "outside [5, 20] dB");
      if (interferer_id.empty()) throw ValidationError("interferer_id", "required");
      check_seg(interference_segment, "interference_segment");
    }
    if (HasPacketLoss()) {
      if (!ValidBitrate(bitrate_kbps)) throw ValidationError("bitrate_kbps", "not in {1,2,4,8}");
      check_seg(packet_segment, "packet_segment");
    }
    if (HasMissing()) {
      if (!missing_segment) throw ValidationError("missing_segment", "required");
      check_seg(missing_segment, "missing_segment");
    }
    if (HasRir() && rir_id.empty()) throw ValidationError("rir_id", "required");
  }

  bool operator==(const DistortionSpec&) const = default;
};

inline nlohmann::ordered_json ToJson(const DistortionSpec& s) {
  nlohmann::ordered_json j;
  auto seg = [](const std::optional<Segment>& g) -> nlohmann::ordered_json {
    if (!g) return nullptr;
    return nlohmann::ordered_json::array({g->start_s, g->end_s});
  };
  j["kind"] = DistortionKindName(s.kind);
  j["seed"] = s.seed;
  if (s.HasRir()) j["rir_id"] = s.rir_id;
  if (s.HasNoise()) {
    j["noise_id"] = s.noise_id;
    j["noise_snr_db"] = s.noise_snr_db;
    j["noise_segment"] = seg(s.noise_segment);
  }
  if (s.HasInterference()) {
    j["interferer_id"] = s.interferer_id;
    j["interference_snr_db"] = s.interference_snr_db;
    j["interference_segment"] = seg(s.interference_segment);
  }
  if (s.HasPacketLoss()) {
    j["bitrate_kbps"] = s.bitrate_kbps;
    j["packet_segment"] = seg(s.packet_segment);
  }
  if (s.HasMissing()) j["missing_segment"] = seg(s.missing_segment);
  return j;
}

inline DistortionSpec DistortionSpecFromJson(const nlohmann::ordered_json& j) {
  auto seg = [&](const char* key) -> std::optional<Segment> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return Segment{j[key].at(0).get<double>(), j[key].at(1).get<double>()};
  };
  DistortionSpec s;
  s.kind = DistortionKindFromName(j.at("kind").get<std::string>());
  s.seed = j.value("seed", std::uint64_t{0});
  s.rir_id = j.value("rir_id", "");
  s.noise_id = j.value("noise_id", "");
  s.noise_snr_db = j.value("noise_snr_db", 10.0);
  s.noise_segment = seg("noise_segment");
  s.interferer_id = j.value("interferer_id", "");
  s.interference_snr_db = j.value("interference_snr_db", 10.0);
  s.interference_segment = seg("interference_segment");
  s.bitrate_kbps = j.value("bitrate_kbps", 4);
  s.packet_segment = seg("packet_segment");
  s.missing_segment = seg("missing_segment");
  return s;
}

// Draws a random spec of the given kind for a clip of `clip_seconds`. Partial
// segments span a uniform 20-60% of the clip; missing segments 10-30%.
inline DistortionSpec SampleSpec(DistortionKind kind, double clip_seconds, const AssetBank& bank,
                                 std::uint64_t seed) {
  Rng rng(seed);
  auto pick = [&](const std::map<std::string, AudioClip>& m) {
    auto it = m.begin();
    std::advance(it, static_cast<std::ptrdiff_t>(rng.Index(m.size())));
    return it->first;
  };
  auto segment = [&](double lo, double hi) {
    const double len = clip_seconds * rng.Uniform(lo, hi);
    const double start = rng.Uniform(0.0, clip_seconds - len);
    return Segment{start, start + len};
  };
  DistortionSpec s;
  s.kind = kind;
  s.seed = SplitMix64(seed);
  // Every field is drawn unconditionally so the stream layout is kind-independent.
  s.noise_id = pick(bank.noises);
  s.rir_id = pick(bank.rirs);
  s.interferer_id = pick(bank.interferers);
  s.noise_snr_db = rng.Uniform(-5.0, 20.0);
  s.interference_snr_db = rng.Uniform(5.0, 20.0);
  static constexpr std::array<int, 4> kRates = {1, 2, 4, 8};
  s.bitrate_kbps = kRates[rng.Index(4)];
  const Segment noise_seg = segment(0.2, 0.6);
  const Segment interf_seg = segment(0.2, 0.6);
  const Segment packet_seg = segment(0.2, 0.6);
  const Segment missing_seg = segment(0.1, 0.3);
  const bool multi = kind == DistortionKind::kMultiNoRir || kind == DistortionKind::kMultiRir;
  if (kind == DistortionKind::kNoisePartial || multi) s.noise_segment = noise_seg;
  if (s.HasInterference()) s.interference_segment = interf_seg;
  if (s.HasPacketLoss()) s.packet_segment = packet_seg;
  if (s.HasMissing()) s.missing_segment = missing_seg;
  if (!s.HasNoise()) s.noise_id.clear();
  if (!s.HasRir()) s.rir_id.clear();
  if (!s.HasInterference()) s.interferer_id.clear();
  return s;
}

// Frames on the 80 ms grid touched by the sample range [a, b).
inline void MarkFrames(FrameEventTrack& track, std::size_t a, std::size_t b, EventClass c,
                       int sample_rate) {
  const auto spf = static_cast<std::size_t>(SamplesPerFrame(sample_rate));
  for (int f = 0; f < track.size(); ++f) {
    const std::size_t fa = static_cast<std::size_t>(f) * spf, fb = fa + spf;
    if (std::max(fa, a) < std::min(fb, b)) track.classes[f] = MoreSevere(track.classes[f], c);
  }
}

// Ground-truth event track implied by `spec` for a clip of `n_samples`.
inline FrameEventTrack TrackForSpec(const DistortionSpec& spec, std::size_t n_samples,
                                    int sample_rate = kSampleRate) {
  FrameEventTrack track = UniformTrack(FrameCount(n_samples, sample_rate), EventClass::kClean);
  auto range = [&](const std::optional<Segment>& s) -> std::pair<std::size_t, std::size_t> {
    if (!s) return {0, n_samples};
    auto r = SegmentSamples(s->start_s, s->end_s, sample_rate);
    r.second = std::min(r.second, n_samples);
    return r;
  };
  auto mark = [&](const std::optional<Segment>& s, EventClass c) {
    const auto [a, b] = range(s);
    MarkFrames(track, a, b, c, sample_rate);
  };
  if (spec.HasRir()) mark(std::nullopt, EventClass::kRir);
  if (spec.HasNoise()) mark(spec.noise_segment, EventClass::kNoise);
  if (spec.HasInterference()) mark(spec.interference_segment, EventClass::kInterference);
  if (spec.HasPacketLoss()) mark(spec.packet_segment, EventClass::kPacketLoss);
  if (spec.HasMissing()) mark(spec.missing_segment, EventClass::kMissing);
  return track;
}

struct ApplyOptions {
  CodecMode codec = CodecMode::kProxy;
};

// Applies components in the order RIR -> additive noise/interference ->
// packet loss -> missing, and returns the distorted clip with its track.
inline std::pair<AudioClip, FrameEventTrack> ApplySpec(const AudioClip& clip,
                                                       const DistortionSpec& spec,
                                                       const AssetBank& bank,
                                                       const ApplyOptions& opts = {}) {
  clip.Validate();
  spec.Validate(clip.seconds());
  const std::size_t n = clip.samples.size();
  auto range = [&](const std::optional<Segment>& s) -> std::pair<std::size_t, std::size_t> {
    if (!s) return {0, n};
    auto r = SegmentSamples(s->start_s, s->end_s, clip.sample_rate);
    r.second = std::min(r.second, n);
    return r;
  };
  // Additive mixing on a range, with the gain referenced to whole-clip power.
  auto add = [&](AudioClip& x, const AudioClip& other, double snr_db,
                 const std::optional<Segment>& seg) {
    if (other.sample_rate != x.sample_rate) throw Error("asset sample rate mismatch");
    const auto [a, b] = range(seg);
    if (a >= b) return;
    const auto looped = LoopTo(other.samples, b - a);
    const double g = SnrGain(MeanPower(x.samples), MeanPower(looped), snr_db);
    for (std::size_t i = a; i < b; ++i)
      x.samples[i] = static_cast<float>(x.samples[i] + g * looped[i - a]);
  };

  AudioClip out = clip;
  if (spec.HasRir()) out = ApplyRir(out, bank.Rir(spec.rir_id));
  if (spec.HasNoise()) add(out, bank.Noise(spec.noise_id), spec.noise_snr_db, spec.noise_segment);
  if (spec.HasInterference())
    add(out, bank.Interferer(spec.interferer_id), spec.interference_snr_db,
        spec.interference_segment);
  if (spec.HasPacketLoss()) {
    const auto [a, b] = range(spec.packet_segment);
    if (a < b) {
      AudioClip part;
      part.sample_rate = out.sample_rate;
      part.samples.assign(out.samples.begin() + static_cast<std::ptrdiff_t>(a),
                          out.samples.begin() + static_cast<std::ptrdiff_t>(b));
      part = SimulatePacketLoss(part, spec.bitrate_kbps, opts.codec, spec.seed);
      std::copy(part.samples.begin(), part.samples.end(),
                out.samples.begin() + static_cast<std::ptrdiff_t>(a));
    }
  }
  if (spec.HasMissing()) {
    const auto& s = *spec.missing_segment;
    out = MaskMissing(out, s.start_s, std::min(s.end_s, out.seconds()) - s.start_s);
  }
  return {std::move(out), TrackForSpec(spec, n, clip.sample_rate)};
}

}  // namespace cadr
