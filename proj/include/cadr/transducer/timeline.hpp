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

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "cadr/core/error.hpp"
#include "cadr/core/rng.hpp"
#include "cadr/core/types.hpp"
#include "cadr/transducer/lexicon.hpp"

namespace cadr {

// Frames a piece occupies in clean speech: 1 + hash mod 4.
inline int PieceDuration(const std::string& piece) {
  return 1 + static_cast<int>(Fnv1a(piece) % kMaxDuration);
}

struct TimelineToken {
  int token_id = 0;
  int word = 0;
  int begin = 0;  // first frame
  int duration = 1;

  int end() const { return begin + duration; }
};

// Clean token layout of an utterance. Tokens of a word are contiguous; words
// are separated by one silence frame.
struct Timeline {
  std::vector<TimelineToken> tokens;
  std::vector<int> word_first_token;  // size n_words + 1
  std::vector<int> word_begin;        // first frame of each word
  std::vector<int> word_end;          // one past the last frame of each word
  int num_frames = 0;

  int num_words() const { return static_cast<int>(word_begin.size()); }
  std::vector<bool> GapMask() const {
    std::vector<bool> gap(num_frames, true);
    for (const auto& t : tokens)
      for (int f = t.begin; f < t.end(); ++f) gap[f] = false;
    return gap;
  }
};

inline Timeline SynthesizeTimeline(const UtteranceRef& utt, const Lexicon& lex) {
  if (utt.words.empty()) throw ValidationError("words", "empty reference");
  Timeline tl;
  int frame = 0;
  for (std::size_t w = 0; w < utt.words.size(); ++w) {
    if (w > 0) ++frame;  // gap
    const auto& ids = lex.Tokenize(utt.words[w]);
    tl.word_first_token.push_back(static_cast<int>(tl.tokens.size()));
    tl.word_begin.push_back(frame);
    for (int id : ids) {
      const int d = PieceDuration(lex.piece(id));
      tl.tokens.push_back({id, static_cast<int>(w), frame, d});
      frame += d;
    }
    tl.word_end.push_back(frame);
  }
  tl.word_first_token.push_back(static_cast<int>(tl.tokens.size()));
  tl.num_frames = frame;
  return tl;
}

// Speech-like carrier for the distortion engine: each token span is a short
// harmonic tone whose pitch and formant tilt depend on the piece; gaps are
// near-silent.
inline AudioClip SynthesizeSpeech(const Timeline& tl, const Lexicon& lex, std::uint64_t seed,
                                  int sample_rate = kSampleRate) {
  const int spf = SamplesPerFrame(sample_rate);
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.assign(static_cast<std::size_t>(tl.num_frames) * spf, 0.0f);
  Rng rng(DeriveSeed(seed, "speech"));
  for (auto& s : clip.samples) s = static_cast<float>(1e-3 * rng.Normal());
  const double two_pi = 2.0 * std::numbers::pi;
  for (const auto& t : tl.tokens) {
    const auto h = Fnv1a(lex.piece(t.token_id));
    const double f0 = 110.0 + static_cast<double>(h % 160);
    const double tilt = 0.4 + 0.1 * static_cast<double>((h >> 8) % 5);
    const std::size_t start = static_cast<std::size_t>(t.begin) * spf;
    const std::size_t len = static_cast<std::size_t>(t.duration) * spf;
    for (std::size_t i = 0; i < len; ++i) {
      const double time = static_cast<double>(i) / sample_rate;
      // raised-cosine envelope over the token span
      const double env = 0.5 - 0.5 * std::cos(two_pi * (i + 0.5) / len);
      double v = 0.0, amp = 1.0;
      for (int k = 1; k <= 6; ++k, amp *= tilt) v += amp * std::sin(two_pi * f0 * k * time);
      clip.samples[start + i] += static_cast<float>(0.25 * env * v);
    }
  }
  for (auto& s : clip.samples) s = std::clamp(s, -1.0f, 1.0f);
  return clip;
}

}  // namespace cadr
