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
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cadr/core/io.hpp"
#include "cadr/core/types.hpp"

namespace cadr {

namespace wav_detail {

inline std::uint32_t U32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t U16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

inline void Put32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void Put16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace wav_detail

// Reads RIFF/WAVE with PCM-16 or IEEE float-32 samples. Multi-channel input
// is averaged down to mono.
inline AudioClip ReadWav(const fs::path& path) {
  using namespace wav_detail;
  const std::string data = ReadTextFile(path);
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  if (data.size() < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw IoError("not a RIFF/WAVE file: " + path.string());
  std::size_t pos = 12;
  int format = 0, channels = 0, rate = 0, bits = 0;
  const unsigned char* pcm = nullptr;
  std::size_t pcm_bytes = 0;
  while (pos + 8 <= data.size()) {
    const std::uint32_t size = U32(p + pos + 4);
    const unsigned char* body = p + pos + 8;
    if (std::memcmp(p + pos, "fmt ", 4) == 0 && size >= 16) {
      format = U16(body);
      channels = U16(body + 2);
      rate = static_cast<int>(U32(body + 4));
      bits = U16(body + 14);
      if (format == 0xFFFE && size >= 26) format = U16(body + 24);
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      pcm = body;
      pcm_bytes = std::min<std::size_t>(size, data.size() - pos - 8);
    }
    pos += 8 + size + (size & 1);
  }
  if (!pcm || channels <= 0) throw IoError("missing fmt/data chunk: " + path.string());
  AudioClip clip;
  clip.sample_rate = rate;
  if (format == 1 && bits == 16) {
    const std::size_t frames = pcm_bytes / (2 * channels);
    clip.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
      double acc = 0.0;
      for (int c = 0; c < channels; ++c)
        acc += static_cast<std::int16_t>(U16(pcm + 2 * (i * channels + c))) / 32768.0;
      clip.samples[i] = static_cast<float>(acc / channels);
    }
  } else if (format == 3 && bits == 32) {
    const std::size_t frames = pcm_bytes / (4 * channels);
    clip.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
      double acc = 0.0;
      for (int c = 0; c < channels; ++c) {
        float f;
        std::memcpy(&f, pcm + 4 * (i * channels + c), 4);
        acc += f;
      }
      clip.samples[i] = static_cast<float>(acc / channels);
    }
  } else {
    throw IoError("unsupported WAV encoding (need PCM-16 or float-32): " + path.string());
  }
  return clip;
}

// Writes mono PCM-16.
inline void WriteWav(const AudioClip& clip, const fs::path& path) {
  using namespace wav_detail;
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  std::string s;
  s.reserve(44 + 2 * n);
  s += "RIFF";
  Put32(s, 36 + 2 * n);
  s += "WAVEfmt ";
  Put32(s, 16);
  Put16(s, 1);
  Put16(s, 1);
  Put32(s, static_cast<std::uint32_t>(clip.sample_rate));
  Put32(s, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  Put16(s, 2);
  Put16(s, 16);
  s += "data";
  Put32(s, 2 * n);
  for (float x : clip.samples) {
    const double c = std::clamp(static_cast<double>(x), -1.0, 1.0);
    const long q = std::clamp(std::lround(c * 32768.0), -32768L, 32767L);
    Put16(s, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  WriteTextFile(path, s);
}

}  // namespace cadr
