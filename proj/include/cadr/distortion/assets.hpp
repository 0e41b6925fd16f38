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
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cadr/core/rng.hpp"
#include "cadr/core/types.hpp"
#include "cadr/core/wav.hpp"

namespace cadr {

enum class AssetMode { kUserSupplied, kSyntheticSeeded };

// Seeded pink noise (Paul Kellet's refined filter over white noise).
inline AudioClip SynthPinkNoise(std::uint64_t seed, double seconds, int sample_rate = kSampleRate) {
  Rng rng(seed);
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(static_cast<std::size_t>(seconds * sample_rate));
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
  for (auto& s : clip.samples) {
    const double white = rng.Normal() * 0.1;
    b0 = 0.99886 * b0 + white * 0.0555179;
    b1 = 0.99332 * b1 + white * 0.0750759;
    b2 = 0.96900 * b2 + white * 0.1538520;
    b3 = 0.86650 * b3 + white * 0.3104856;
    b4 = 0.55000 * b4 + white * 0.5329522;
    b5 = -0.7616 * b5 - white * 0.0168980;
    const double pink = b0 + b1 + b2 + b3 + b4 + b5 + b6 + white * 0.5362;
    b6 = white * 0.115926;
    s = static_cast<float>(pink * 0.25);
  }
  return clip;
}

// Direct-path impulse followed by a white tail with exponential decay
// reaching -60 dB at t60.
inline AudioClip SynthRir(std::uint64_t seed, double t60 = 0.3, int sample_rate = kSampleRate) {
  Rng rng(seed);
  AudioClip rir;
  rir.sample_rate = sample_rate;
  const auto n = static_cast<std::size_t>(t60 * sample_rate);
  rir.samples.resize(n);
  const double tau = t60 * sample_rate / std::log(1000.0);
  rir.samples[0] = 1.0f;
  for (std::size_t i = 1; i < n; ++i)
    rir.samples[i] = static_cast<float>(0.2 * rng.Normal() * std::exp(-static_cast<double>(i) / tau));
  return rir;
}

// Competing "speaker": a sequence of amplitude-modulated tones with random
// pitch, each note 150 ms.
inline AudioClip SynthInterferer(std::uint64_t seed, double seconds, int sample_rate = kSampleRate) {
  Rng rng(seed);
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(static_cast<std::size_t>(seconds * sample_rate));
  const auto note = static_cast<std::size_t>(0.15 * sample_rate);
  double freq = 0.0, phase = 0.0;
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    if (i % note == 0) freq = rng.Uniform(180.0, 420.0);
    phase += 2.0 * M_PI * freq / sample_rate;
    const double t = static_cast<double>(i) / sample_rate;
    const double am = 0.5 * (1.0 + std::sin(2.0 * M_PI * 4.0 * t));
    const double v = std::sin(phase) + 0.5 * std::sin(2.0 * phase) + 0.25 * std::sin(3.0 * phase);
    clip.samples[i] = static_cast<float>(0.2 * am * v);
  }
  return clip;
}

// Named noise / RIR / interferer clips.
struct AssetBank {
  AssetMode mode = AssetMode::kSyntheticSeeded;
  std::map<std::string, AudioClip> noises;
  std::map<std::string, AudioClip> rirs;
  std::map<std::string, AudioClip> interferers;

  static AssetBank Synthetic(std::uint64_t seed, int per_kind = 4) {
    AssetBank bank;
    bank.mode = AssetMode::kSyntheticSeeded;
    for (int i = 0; i < per_kind; ++i) {
      const std::string n = "noise-" + std::to_string(i);
      const std::string r = "rir-" + std::to_string(i);
      const std::string f = "interferer-" + std::to_string(i);
      bank.noises[n] = SynthPinkNoise(DeriveSeed(seed, n), 3.0);
      bank.rirs[r] = SynthRir(DeriveSeed(seed, r));
      bank.interferers[f] = SynthInterferer(DeriveSeed(seed, f), 4.0);
    }
    return bank;
  }

  // Loads `<dir>/{noise,rir,interferer}/*.wav`; names are file stems.
  static AssetBank FromDirectory(const fs::path& dir) {
    AssetBank bank;
    bank.mode = AssetMode::kUserSupplied;
    auto load = [&](const char* sub, std::map<std::string, AudioClip>& into) {
      const fs::path d = dir / sub;
      if (!fs::is_directory(d)) return;
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(d))
        if (e.path().extension() == ".wav") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) into[f.stem().string()] = ReadWav(f);
    };
    load("noise", bank.noises);
    load("rir", bank.rirs);
    load("interferer", bank.interferers);
    if (bank.noises.empty() || bank.rirs.empty() || bank.interferers.empty())
      throw IoError("asset directory needs noise/, rir/ and interferer/ WAV files: " + dir.string());
    return bank;
  }

  const AudioClip& Get(const std::map<std::string, AudioClip>& m, const std::string& id,
                       const char* kind) const {
    auto it = m.find(id);
    if (it == m.end()) throw Error(std::string("missing ") + kind + " asset '" + id + "'");
    return it->second;
  }
  const AudioClip& Noise(const std::string& id) const { return Get(noises, id, "noise"); }
  const AudioClip& Rir(const std::string& id) const { return Get(rirs, id, "rir"); }
  const AudioClip& Interferer(const std::string& id) const {
    return Get(interferers, id, "interferer");
  }
};

}  // namespace cadr
