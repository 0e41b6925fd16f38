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

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "cadr/core/error.hpp"
#include "cadr/core/types.hpp"
#include "cadr/detector/predict.hpp"

namespace cadr {

enum class Cause : int { kNone = 0, kComprehension = 1, kPerception = 2, kDeletion = 3 };

inline std::string_view CauseName(Cause c) {
  switch (c) {
    case Cause::kNone: return "None";
    case Cause::kComprehension: return "Comprehension";
    case Cause::kPerception: return "Perception";
    case Cause::kDeletion: return "Deletion";
  }
  return "?";
}

struct ErrorProfile {
  std::vector<Cause> token_causes;  // None, Comprehension or Perception
  DeletionEvents deletion_events;
  std::vector<EventClass> token_events;
  std::vector<bool> word_flags;

  bool Empty() const {
    if (!deletion_events.empty()) return false;
    for (auto c : token_causes)
      if (c != Cause::kNone) return false;
    return true;
  }

  bool operator==(const ErrorProfile&) const = default;
};

// Comprehension wins over Perception on a token; a deletion event touching
// the frame span of any flagged token is dropped in favour of that token.
inline ErrorProfile Fuse(const std::vector<bool>& comp, const std::vector<bool>& perc,
                         const DeletionEvents& deletions, const std::vector<EventClass>& events,
                         const DecodeResult& d) {
  const std::size_t n = d.tokens.size();
  if (comp.size() != n) throw ValidationError("comp", "index mismatch with tokens");
  if (perc.size() != n) throw ValidationError("perc", "index mismatch with tokens");
  if (events.size() != n) throw ValidationError("events", "index mismatch with tokens");
  ErrorProfile p;
  p.token_events = events;
  p.token_causes.resize(n, Cause::kNone);
  std::vector<bool> flagged(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (comp[i]) p.token_causes[i] = Cause::kComprehension;
    else if (perc[i]) p.token_causes[i] = Cause::kPerception;
    flagged[i] = p.token_causes[i] != Cause::kNone;
  }
  for (const auto& ev : deletions) {
    if (ev.start_frame > ev.end_frame || ev.start_frame < 0 || ev.end_frame >= d.num_frames())
      throw ValidationError("deletion_events", "event outside the frame grid");
    bool shadowed = false;
    for (std::size_t i = 0; i < n && !shadowed; ++i) {
      if (!flagged[i]) continue;
      const auto [b, e] = TokenFrameSpan(d, i);
      shadowed = ev.start_frame < e && ev.end_frame >= b;
    }
    if (!shadowed) p.deletion_events.push_back(ev);
  }
  p.word_flags = AnyTokenRule(flagged, d.words);
  return p;
}

// Re-fusing a fused profile leaves it unchanged.
inline ErrorProfile Refuse(const ErrorProfile& p, const DecodeResult& d) {
  std::vector<bool> comp(p.token_causes.size()), perc(p.token_causes.size());
  for (std::size_t i = 0; i < comp.size(); ++i) {
    comp[i] = p.token_causes[i] == Cause::kComprehension;
    perc[i] = p.token_causes[i] == Cause::kPerception;
  }
  return Fuse(comp, perc, p.deletion_events, p.token_events, d);
}

// ---------------------------------------------------------------------------
// Strategy hints

enum class Strategy : int {
  kRepeat,
  kQuieterRoom,
  kWaitForOtherSpeaker,
  kCheckConnection,
  kSpellOrParaphrase,
  kAskMissingContent,
};

inline std::string_view StrategyName(Strategy s) {
  switch (s) {
    case Strategy::kRepeat: return "Repeat";
    case Strategy::kQuieterRoom: return "QuieterRoom";
    case Strategy::kWaitForOtherSpeaker: return "WaitForOtherSpeaker";
    case Strategy::kCheckConnection: return "CheckConnection";
    case Strategy::kSpellOrParaphrase: return "SpellOrParaphrase";
    case Strategy::kAskMissingContent: return "AskMissingContent";
  }
  return "?";
}

inline Strategy StrategyHint(Cause cause, EventClass event) {
  switch (cause) {
    case Cause::kComprehension: return Strategy::kSpellOrParaphrase;
    case Cause::kDeletion: return Strategy::kAskMissingContent;
    case Cause::kPerception:
      switch (event) {
        case EventClass::kNoise:
        case EventClass::kRir: return Strategy::kQuieterRoom;
        case EventClass::kInterference: return Strategy::kWaitForOtherSpeaker;
        case EventClass::kPacketLoss: return Strategy::kCheckConnection;
        case EventClass::kClean:
        case EventClass::kMissing: return Strategy::kRepeat;
      }
      break;
    case Cause::kNone: break;
  }
  throw ValidationError("cause", "no strategy for cause None");
}

// ---------------------------------------------------------------------------
// Cause-tagged transcripts

inline constexpr int kTagVocabularyVersion = 1;
inline constexpr std::array<std::string_view, 6> kTagVocabulary = {
    "noise", "interference", "rir", "packetloss", "unknown", "del"};

inline std::string_view EventTag(EventClass c) {
  switch (c) {
    case EventClass::kNoise: return "noise";
    case EventClass::kInterference: return "interference";
    case EventClass::kRir: return "rir";
    case EventClass::kPacketLoss: return "packetloss";
    case EventClass::kClean:
    case EventClass::kMissing: return "unknown";
  }
  return "unknown";
}

// One clarification target. Word spans cover hypothesis word `position`;
// deletion sites sit at boundary `position` (before hypothesis word
// `position`, or at the end when it equals the word count).
struct TagSpan {
  int number = 0;  // 1-based, in transcript order
  bool deletion = false;
  int position = 0;
  std::string tag;
  Cause cause = Cause::kNone;
  EventClass event = EventClass::kClean;
  Strategy strategy = Strategy::kRepeat;

  bool operator==(const TagSpan&) const = default;
};

struct TaggedTranscript {
  std::string text;
  std::vector<TagSpan> spans;

  bool operator==(const TaggedTranscript&) const = default;
};

// Majority event class over a word's tokens; ties go to the more severe.
inline EventClass WordEvent(const ErrorProfile& p, const HypWord& w) {
  FrameEventTrack t;
  for (int i = w.first_token; i < w.end_token; ++i) t.classes.push_back(p.token_events[i]);
  return t.Dominant(0, t.size());
}

// Boundary b sits at frame 0 for b = 0, else at the end of word b-1.
inline int NearestBoundary(const DecodeResult& d, int frame) {
  int best = 0, best_dist = std::abs(frame);
  for (int b = 1; b <= static_cast<int>(d.words.size()); ++b) {
    const int dist = std::abs(frame - d.WordFrameSpan(b - 1).second);
    if (dist < best_dist) {
      best = b;
      best_dist = dist;
    }
  }
  return best;
}

// Cause and event of one hypothesis word; kNone means untagged.
struct WordMark {
  Cause cause = Cause::kNone;
  EventClass event = EventClass::kClean;
};

// Renders words with their marks and deletion sites (del_at has one entry
// per boundary, words + 1 in total).
inline TaggedTranscript RenderTagged(const std::vector<std::string>& words, const std::vector<WordMark>& marks,
                                     const std::vector<bool>& del_at) {
  const int W = static_cast<int>(words.size());
  if (static_cast<int>(marks.size()) != W) throw ValidationError("marks", "length differs from words");
  if (static_cast<int>(del_at.size()) != W + 1) throw ValidationError("del_at", "needs one entry per boundary");
  TaggedTranscript out;
  std::vector<std::string> pieces;
  auto del_site = [&](int b) {
    if (!del_at[b]) return;
    pieces.emplace_back("<del/>");
    out.spans.push_back({static_cast<int>(out.spans.size()) + 1, true, b, "del", Cause::kDeletion,
                         EventClass::kMissing, Strategy::kAskMissingContent});
  };
  for (int w = 0; w < W; ++w) {
    del_site(w);
    const auto [cause, ev] = marks[w];
    if (cause == Cause::kNone) {
      pieces.push_back(words[w]);
      continue;
    }
    if (cause == Cause::kDeletion) throw ValidationError("marks", "deletion is not a word cause");
    const std::string tag(cause == Cause::kComprehension ? "unknown" : EventTag(ev));
    pieces.push_back("<" + tag + ">" + words[w] + "</" + tag + ">");
    out.spans.push_back({static_cast<int>(out.spans.size()) + 1, false, w, tag, cause, ev, StrategyHint(cause, ev)});
  }
  del_site(W);
  for (std::size_t i = 0; i < pieces.size(); ++i) out.text += (i ? " " : "") + pieces[i];
  return out;
}

// Word-level marks of a profile: Comprehension if any token has it, else
// Perception if any token has it.
inline std::vector<WordMark> WordMarks(const DecodeResult& d, const ErrorProfile& p) {
  std::vector<WordMark> marks;
  for (const auto& word : d.words) {
    WordMark m;
    for (int i = word.first_token; i < word.end_token; ++i) {
      if (p.token_causes[i] == Cause::kComprehension) m.cause = Cause::kComprehension;
      else if (p.token_causes[i] == Cause::kPerception && m.cause == Cause::kNone) m.cause = Cause::kPerception;
    }
    if (m.cause != Cause::kNone) m.event = WordEvent(p, word);
    marks.push_back(m);
  }
  return marks;
}

inline std::vector<bool> DeletionBoundaries(const DecodeResult& d, const ErrorProfile& p) {
  std::vector<bool> del_at(d.words.size() + 1, false);
  for (const auto& ev : p.deletion_events) del_at[NearestBoundary(d, ev.start_frame)] = true;
  return del_at;
}

inline TaggedTranscript TagTranscript(const DecodeResult& d, const ErrorProfile& p) {
  if (p.token_causes.size() != d.tokens.size() || p.token_events.size() != d.tokens.size())
    throw ValidationError("profile", "inconsistent with decode");
  return RenderTagged(d.WordStrings(), WordMarks(d, p), DeletionBoundaries(d, p));
}

// Removes all tags, dropping <del/> markers together with their separating
// space. Throws on unbalanced or unknown tags.
inline std::string StripTags(std::string_view tagged) {
  std::string out;
  std::vector<std::string> open;
  std::size_t i = 0;
  while (i < tagged.size()) {
    if (tagged[i] != '<') {
      out += tagged[i++];
      continue;
    }
    const auto close = tagged.find('>', i);
    if (close == std::string_view::npos) throw ValidationError("tagged", "unterminated tag");
    std::string_view body = tagged.substr(i + 1, close - i - 1);
    i = close + 1;
    if (body == "del/") continue;
    const bool closing = !body.empty() && body[0] == '/';
    if (closing) body.remove_prefix(1);
    bool known = false;
    for (auto t : kTagVocabulary) known = known || (t == body && t != "del");
    if (!known) throw ValidationError("tagged", "unknown tag '" + std::string(body) + "'");
    if (!closing) {
      if (!open.empty()) throw ValidationError("tagged", "nested tags");
      open.emplace_back(body);
    } else {
      if (open.empty() || open.back() != body) throw ValidationError("tagged", "unbalanced tags");
      open.pop_back();
    }
  }
  if (!open.empty()) throw ValidationError("tagged", "unbalanced tags");
  // Collapse the spaces left behind by removed <del/> markers.
  std::string collapsed;
  for (char c : out) {
    if (c == ' ' && (collapsed.empty() || collapsed.back() == ' ')) continue;
    collapsed += c;
  }
  if (!collapsed.empty() && collapsed.back() == ' ') collapsed.pop_back();
  return collapsed;
}

inline std::string JoinWords(const std::vector<std::string>& words) {
  std::string s;
  for (std::size_t i = 0; i < words.size(); ++i) s += (i ? " " : "") + words[i];
  return s;
}

// Item of a parsed tagged transcript: a plain word, a tagged word or a
// deletion site. Tagged items carry their 1-based span number.
struct TranscriptItem {
  std::string word;  // empty for deletion sites
  std::string tag;   // empty for plain words
  int number = 0;
};

inline std::vector<TranscriptItem> ParseTaggedTranscript(std::string_view tagged) {
  std::vector<TranscriptItem> items;
  int next = 1;
  std::size_t i = 0;
  while (i < tagged.size()) {
    if (tagged[i] == ' ') {
      ++i;
      continue;
    }
    auto end = tagged.find(' ', i);
    if (end == std::string_view::npos) end = tagged.size();
    std::string_view tok = tagged.substr(i, end - i);
    i = end;
    if (tok == "<del/>") {
      items.push_back({"", "del", next++});
      continue;
    }
    if (tok.front() == '<') {
      const auto gt = tok.find('>');
      const auto lt = tok.rfind("</");
      if (gt == std::string_view::npos || lt == std::string_view::npos || lt <= gt)
        throw ValidationError("tagged", "malformed tagged word '" + std::string(tok) + "'");
      const std::string tag(tok.substr(1, gt - 1));
      if (tok.substr(lt) != "</" + tag + ">") throw ValidationError("tagged", "unbalanced tags");
      items.push_back({std::string(tok.substr(gt + 1, lt - gt - 1)), tag, next++});
      continue;
    }
    items.push_back({std::string(tok), "", 0});
  }
  return items;
}

}  // namespace cadr
