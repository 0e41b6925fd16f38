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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cadr/core/error.hpp"

namespace cadr {

inline constexpr int kSampleRate = 16000;
inline constexpr double kFrameSeconds = 0.080;
inline constexpr int kDefaultVocabSize = 1024;
inline constexpr int kDefaultModelDim = 640;
inline constexpr int kMaxDuration = 4;
inline constexpr double kProbTolerance = 1e-6;
// UTF-8 for U+2581, the word-boundary marker on word-initial pieces.
inline constexpr std::string_view kBoundaryMarker = "\xE2\x96\x81";

// ---------------------------------------------------------------------------
// Event classes

enum class EventClass : int {
  kClean = 0,
  kInterference = 1,
  kNoise = 2,
  kRir = 3,
  kPacketLoss = 4,
  kMissing = 5,
};

inline constexpr int kNumEventClasses = 6;

inline constexpr std::array<EventClass, kNumEventClasses> kAllEventClasses = {
    EventClass::kClean, EventClass::kInterference, EventClass::kNoise,
    EventClass::kRir,   EventClass::kPacketLoss,   EventClass::kMissing};

inline std::string_view EventClassName(EventClass c) {
  switch (c) {
    case EventClass::kClean: return "Clean";
    case EventClass::kInterference: return "Interference";
    case EventClass::kNoise: return "Noise";
    case EventClass::kRir: return "RIR";
    case EventClass::kPacketLoss: return "PacketLoss";
    case EventClass::kMissing: return "Missing";
  }
  return "?";
}

inline EventClass EventClassFromInt(int v) {
  if (v < 0 || v >= kNumEventClasses)
    throw ValidationError("event_class", "value " + std::to_string(v) + " outside [0,6)");
  return static_cast<EventClass>(v);
}

// Overlap precedence: Missing > PacketLoss > Interference > Noise > RIR > Clean.
inline int Severity(EventClass c) {
  switch (c) {
    case EventClass::kClean: return 0;
    case EventClass::kRir: return 1;
    case EventClass::kNoise: return 2;
    case EventClass::kInterference: return 3;
    case EventClass::kPacketLoss: return 4;
    case EventClass::kMissing: return 5;
  }
  return 0;
}

inline EventClass MoreSevere(EventClass a, EventClass b) {
  return Severity(a) >= Severity(b) ? a : b;
}

// ---------------------------------------------------------------------------
// Labels

enum class TokenLabel : int { kCorrect = 0, kCompError = 1, kPercError = 2 };
enum class WordLabel : int { kCorrect = 0, kError = 1 };

// ---------------------------------------------------------------------------
// Dense row-major float matrix.

struct FloatMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  FloatMatrix() = default;
  FloatMatrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0f) {}

  std::span<float> row(int i) {
    return {data.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)};
  }
  std::span<const float> row(int i) const {
    return {data.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)};
  }
  float& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  bool operator==(const FloatMatrix&) const = default;
};

// ---------------------------------------------------------------------------
// Domain types

struct AudioClip {
  std::vector<float> samples;
  int sample_rate = kSampleRate;

  double seconds() const { return static_cast<double>(samples.size()) / sample_rate; }

  void Validate() const {
    if (sample_rate <= 0) throw ValidationError("sample_rate", "must be positive");
    if (samples.empty()) throw ValidationError("samples", "clip is empty");
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!std::isfinite(samples[i]))
        throw ValidationError("samples[" + std::to_string(i) + "]", "non-finite value");
    }
  }

  bool operator==(const AudioClip&) const = default;
};

struct UtteranceRef {
  std::string id;
  std::vector<std::string> words;
  std::vector<bool> hard_flags;

  void Validate() const {
    if (id.empty()) throw ValidationError("id", "empty utterance id");
    if (words.empty()) throw ValidationError("words", "empty reference");
    if (hard_flags.size() != words.size())
      throw ValidationError("hard_flags", "length differs from words");
  }

  bool operator==(const UtteranceRef&) const = default;
};

struct TokenRecord {
  int token_id = 0;
  std::string piece;
  int emit_frame = 0;
  int duration = 1;
  std::vector<float> probs;
  std::vector<float> joint_embedding;

  bool operator==(const TokenRecord&) const = default;
};

// A hypothesis word: its text and the half-open token range it spans.
struct HypWord {
  std::string text;
  int first_token = 0;
  int end_token = 0;

  int num_tokens() const { return end_token - first_token; }
  bool operator==(const HypWord&) const = default;
};

inline bool StartsWord(std::string_view piece) {
  return piece.substr(0, kBoundaryMarker.size()) == kBoundaryMarker;
}

inline std::string StripMarker(std::string_view piece) {
  if (StartsWord(piece)) piece.remove_prefix(kBoundaryMarker.size());
  return std::string(piece);
}

// Groups tokens into words: a token opens a new word iff its piece starts with
// the boundary marker. A leading continuation piece still opens a word.
inline std::vector<HypWord> GroupWords(std::span<const TokenRecord> tokens) {
  std::vector<HypWord> words;
  for (int i = 0; i < static_cast<int>(tokens.size()); ++i) {
    if (words.empty() || StartsWord(tokens[i].piece)) {
      words.push_back({StripMarker(tokens[i].piece), i, i + 1});
    } else {
      words.back().text += StripMarker(tokens[i].piece);
      words.back().end_token = i + 1;
    }
  }
  return words;
}

struct DecodeResult {
  std::string utterance_id;
  int vocab_size = kDefaultVocabSize;
  FloatMatrix frame_embeddings;  // T x d_model
  std::vector<TokenRecord> tokens;
  std::vector<HypWord> words;

  int num_frames() const { return frame_embeddings.rows; }
  int d_model() const { return frame_embeddings.cols; }

  std::vector<std::string> WordStrings() const {
    std::vector<std::string> out;
    out.reserve(words.size());
    for (const auto& w : words) out.push_back(w.text);
    return out;
  }

  // Frames [first emit, last emit + duration) covered by word `w`.
  std::pair<int, int> WordFrameSpan(int w) const {
    const auto& word = words[w];
    const auto& last = tokens[word.end_token - 1];
    return {tokens[word.first_token].emit_frame,
            last.emit_frame + std::max(last.duration, 1)};
  }

  std::vector<bool> EmissionMask() const {
    std::vector<bool> m(num_frames(), false);
    for (const auto& t : tokens)
      if (t.emit_frame >= 0 && t.emit_frame < num_frames()) m[t.emit_frame] = true;
    return m;
  }

  void RebuildWords() { words = GroupWords(tokens); }

  void Validate(double prob_tol = kProbTolerance) const {
    if (utterance_id.empty()) throw ValidationError("utterance_id", "empty");
    if (vocab_size < 2) throw ValidationError("vocab_size", "must be at least 2");
    const int T = num_frames();
    const int d = d_model();
    if (T > 0 && d <= 0) throw ValidationError("d_model", "must be positive");
    if (frame_embeddings.data.size() != static_cast<std::size_t>(T) * d)
      throw ValidationError("frame_embeddings", "size mismatch");
    for (float v : frame_embeddings.data)
      if (!std::isfinite(v)) throw ValidationError("frame_embeddings", "non-finite value");
    int prev_frame = -1;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const auto& t = tokens[i];
      const std::string f = "tokens[" + std::to_string(i) + "]";
      if (t.token_id < 0 || t.token_id >= vocab_size)
        throw ValidationError(f + ".token_id", "outside [0, |V|)");
      if (t.duration < 0 || t.duration > kMaxDuration)
        throw ValidationError(f + ".duration", "duration outside {0..4}");
      if (t.emit_frame < 0 || t.emit_frame >= T)
        throw ValidationError(f + ".emit_frame", "outside [0, T)");
      if (t.emit_frame <= prev_frame)
        throw ValidationError(f + ".emit_frame", "emission frames not strictly increasing");
      prev_frame = t.emit_frame;
      if (static_cast<int>(t.probs.size()) != vocab_size)
        throw ValidationError(f + ".probs", "length differs from |V|");
      double sum = 0.0;
      for (float p : t.probs) {
        if (!std::isfinite(p)) throw ValidationError(f + ".probs", "non-finite value");
        if (p < 0.0f) throw ValidationError(f + ".probs", "negative probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > prob_tol)
        throw ValidationError(f + ".probs", "probs not normalized");
      if (static_cast<int>(t.joint_embedding.size()) != d)
        throw ValidationError(f + ".joint_embedding", "length differs from d_model");
      for (float v : t.joint_embedding)
        if (!std::isfinite(v)) throw ValidationError(f + ".joint_embedding", "non-finite value");
    }
    if (words != GroupWords(tokens))
      throw ValidationError("words", "hypothesis words inconsistent with token pieces");
  }

  bool operator==(const DecodeResult&) const = default;
};

struct FrameEventTrack {
  std::vector<EventClass> classes;

  int size() const { return static_cast<int>(classes.size()); }

  // Majority class over [begin, end); ties go to the more severe class.
  EventClass Dominant(int begin, int end) const {
    std::array<int, kNumEventClasses> counts{};
    begin = std::max(begin, 0);
    end = std::min(end, size());
    if (begin >= end) return begin < size() ? classes[begin] : EventClass::kClean;
    for (int t = begin; t < end; ++t) ++counts[static_cast<int>(classes[t])];
    EventClass best = EventClass::kClean;
    int best_count = -1;
    for (EventClass c : kAllEventClasses) {
      const int n = counts[static_cast<int>(c)];
      if (n > best_count || (n == best_count && Severity(c) > Severity(best))) {
        best = c;
        best_count = n;
      }
    }
    return best;
  }

  bool operator==(const FrameEventTrack&) const = default;
};

inline FrameEventTrack UniformTrack(int frames, EventClass c) {
  return FrameEventTrack{std::vector<EventClass>(frames, c)};
}

// Frame count of a clip on the 80 ms grid.
inline int FrameCount(std::size_t samples, int sample_rate = kSampleRate) {
  const double seconds = static_cast<double>(samples) / sample_rate;
  // Guard against 0.24/0.08 = 3.0000000000000004.
  return static_cast<int>(std::ceil(seconds / kFrameSeconds - 1e-9));
}

inline int SamplesPerFrame(int sample_rate = kSampleRate) {
  return static_cast<int>(std::lround(kFrameSeconds * sample_rate));
}

// Word flag = any constituent token flagged. Spans must tile [0, n_tokens).
inline std::vector<bool> AnyTokenRule(const std::vector<bool>& token_flags,
                                      std::span<const HypWord> spans) {
  std::vector<bool> out;
  out.reserve(spans.size());
  int expected = 0;
  for (std::size_t w = 0; w < spans.size(); ++w) {
    const auto& s = spans[w];
    if (s.first_token != expected)
      throw ValidationError("spans[" + std::to_string(w) + "]",
                            s.first_token > expected ? "span gap" : "span overlap");
    if (s.end_token <= s.first_token)
      throw ValidationError("spans[" + std::to_string(w) + "]", "empty span");
    if (s.end_token > static_cast<int>(token_flags.size()))
      throw ValidationError("spans[" + std::to_string(w) + "]", "span past last token");
    bool any = false;
    for (int t = s.first_token; t < s.end_token; ++t) any = any || token_flags[t];
    out.push_back(any);
    expected = s.end_token;
  }
  if (expected != static_cast<int>(token_flags.size()))
    throw ValidationError("spans", "span gap at end");
  return out;
}

struct LabelSet {
  std::vector<TokenLabel> token_labels;
  std::vector<bool> deletion_frame_flags;
  std::vector<WordLabel> word_labels;

  std::vector<bool> TokenErrorFlags() const {
    std::vector<bool> f(token_labels.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = token_labels[i] != TokenLabel::kCorrect;
    return f;
  }

  void RecomputeWordLabels(std::span<const HypWord> words) {
    const auto flags = AnyTokenRule(TokenErrorFlags(), words);
    word_labels.assign(flags.size(), WordLabel::kCorrect);
    for (std::size_t i = 0; i < flags.size(); ++i)
      if (flags[i]) word_labels[i] = WordLabel::kError;
  }

  void Validate(const DecodeResult& d) const {
    if (token_labels.size() != d.tokens.size())
      throw ValidationError("token_labels", "length differs from token count");
    if (static_cast<int>(deletion_frame_flags.size()) != d.num_frames())
      throw ValidationError("deletion_frame_flags", "length differs from frame count");
    if (word_labels.size() != d.words.size())
      throw ValidationError("word_labels", "length differs from word count");
    const auto flags = AnyTokenRule(TokenErrorFlags(), d.words);
    for (std::size_t i = 0; i < flags.size(); ++i)
      if (flags[i] != (word_labels[i] == WordLabel::kError))
        throw ValidationError("word_labels[" + std::to_string(i) + "]",
                              "violates the any-token rule");
    const auto emitted = d.EmissionMask();
    for (std::size_t t = 0; t < deletion_frame_flags.size(); ++t)
      if (deletion_frame_flags[t] && emitted[t])
        throw ValidationError("deletion_frame_flags[" + std::to_string(t) + "]",
                              "deletion flag on an emission frame");
  }

  bool operator==(const LabelSet&) const = default;
};

enum class Split : int { kTrain = 0, kValid = 1, kTest = 2 };

inline std::string_view SplitName(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "?";
}

inline Split SplitFromName(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "valid") return Split::kValid;
  if (s == "test") return Split::kTest;
  throw ValidationError("split", "unknown split '" + std::string(s) + "'");
}

}  // namespace cadr
