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

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cadr/clarify/agents.hpp"
#include "cadr/clarify/merge.hpp"
#include "cadr/clarify/quarantine.hpp"
#include "cadr/clarify/reply.hpp"
#include "cadr/eval/metrics.hpp"
#include "cadr/fusion/detectors.hpp"
#include "cadr/transducer/oracle.hpp"

namespace cadr {

enum class FeedbackMode { kAcoustic, kTextBypass };
enum class Termination { kCleanDetected, kMaxRounds, kUserAbort };

inline std::string_view FeedbackModeName(FeedbackMode m) {
  return m == FeedbackMode::kAcoustic ? "acoustic" : "text_bypass";
}

inline FeedbackMode FeedbackModeFromName(std::string_view s) {
  if (s == "acoustic") return FeedbackMode::kAcoustic;
  if (s == "text_bypass") return FeedbackMode::kTextBypass;
  throw ValidationError("mode", "unknown feedback mode '" + std::string(s) + "'");
}

inline std::string_view TerminationName(Termination t) {
  switch (t) {
    case Termination::kCleanDetected: return "clean_detected";
    case Termination::kMaxRounds: return "max_rounds";
    case Termination::kUserAbort: return "user_abort";
  }
  return "?";
}

inline Termination TerminationFromName(std::string_view s) {
  for (auto t : {Termination::kCleanDetected, Termination::kMaxRounds, Termination::kUserAbort})
    if (TerminationName(t) == s) return t;
  throw ValidationError("termination", "unknown termination '" + std::string(s) + "'");
}

struct SessionOptions {
  int K = 3;
  FeedbackMode mode = FeedbackMode::kTextBypass;
  double fidelity = 1.0;
  std::uint64_t seed = 0;

  void Validate() const {
    if (K < 1) throw ValidationError("K", "must be at least 1");
    if (!(fidelity >= 0.0 && fidelity <= 1.0)) throw ValidationError("fidelity", "outside [0,1]");
  }
};

struct RoundRecord {
  int round = 0;
  std::vector<std::string> hypothesis;  // at the start of the round
  TaggedTranscript tagged;
  Json payload;
  std::vector<std::string> quarantine_violations;
  std::string query;
  std::string reply;
  std::vector<std::string> diagnostics;  // unparsed reply lines, rejected edits
  std::vector<std::string> merged;
  std::optional<double> wer;  // of `merged`, when a reference is known
};

struct ClarifySession {
  std::string utterance_id;
  int K = 3;
  FeedbackMode mode = FeedbackMode::kTextBypass;
  std::vector<std::string> initial_hypothesis;
  std::optional<double> initial_wer;
  int reference_length = 0;  // normalized reference words; 0 without a reference
  std::vector<RoundRecord> rounds;
  std::vector<std::string> final_hypothesis;
  Termination termination = Termination::kMaxRounds;
  std::string error;

  // WER after round k (k = 0 is the first-pass hypothesis); rounds past the
  // end of the session keep its final value.
  double WerAfter(int k) const {
    if (!initial_wer) throw ValidationError("wer", "session has no reference");
    double w = *initial_wer;
    for (int r = 0; r < k && r < static_cast<int>(rounds.size()); ++r)
      if (rounds[r].wer) w = *rounds[r].wer;
    return w;
  }
};

// Everything a session needs besides the two agents.
struct SessionInputs {
  AnalyzedDecode decode;
  std::optional<UtteranceRef> reference;
  const DetectorPort* detectors = nullptr;
  const ToyTransducer* channel = nullptr;  // required in acoustic mode
};

namespace detail {

// A hypothesis word and the decode it came from (source -1: typed text,
// trusted as is).
struct Slot {
  std::string word;
  int source = -1;
  int source_word = 0;
};

struct Source {
  AnalyzedDecode decode;
  ErrorProfile profile;
  std::vector<WordMark> marks;
  std::vector<bool> del_at;
};

inline Source Analyze(AnalyzedDecode a, const DetectorPort& det) {
  Source s{std::move(a), {}, {}, {}};
  s.profile = det.Detect(s.decode);
  s.marks = WordMarks(s.decode.decode, s.profile);
  s.del_at = DeletionBoundaries(s.decode.decode, s.profile);
  return s;
}

inline std::vector<std::string> Words(const std::vector<Slot>& slots) {
  std::vector<std::string> w;
  for (const auto& s : slots) w.push_back(s.word);
  return w;
}

}  // namespace detail

// Detect, tag, query, reply and merge for up to K rounds. Detection runs on
// every decode that contributed words to the current hypothesis: the first
// pass, and in acoustic mode each re-decoded reply.
inline ClarifySession RunSession(const SessionInputs& in, DialogueManagerPort& manager, UserAgentPort& user,
                                 const SessionOptions& opt) {
  opt.Validate();
  if (!in.detectors) throw ValidationError("detectors", "no detectors");
  if (opt.mode == FeedbackMode::kAcoustic && !in.channel)
    throw ValidationError("channel", "acoustic mode needs the transducer channel");
  const auto& first = in.decode.decode;

  ClarifySession s;
  s.utterance_id = first.utterance_id;
  s.K = opt.K;
  s.mode = opt.mode;
  s.initial_hypothesis = first.WordStrings();
  const std::vector<std::string> truth = in.reference ? in.reference->words : std::vector<std::string>{};
  auto wer_of = [&](const std::vector<std::string>& h) -> std::optional<double> {
    if (!in.reference) return std::nullopt;
    return WerNormalized(in.reference->words, h);
  };
  s.initial_wer = wer_of(s.initial_hypothesis);
  if (in.reference) s.reference_length = static_cast<int>(NormalizeWords(in.reference->words).size());

  std::vector<detail::Source> sources;
  sources.push_back(detail::Analyze(in.decode, *in.detectors));
  std::vector<detail::Slot> slots;
  for (int w = 0; w < static_cast<int>(first.words.size()); ++w) slots.push_back({first.words[w].text, 0, w});
  std::set<std::pair<int, int>> resolved_sites;  // (source, boundary)

  Json history = Json::array();
  s.termination = Termination::kMaxRounds;
  for (int round = 1; round <= opt.K; ++round) {
    RoundRecord rec;
    rec.round = round;
    rec.hypothesis = detail::Words(slots);

    // Detect: word marks from each slot's source, deletion sites mapped onto
    // the current slot boundaries.
    const int W = static_cast<int>(slots.size());
    std::vector<WordMark> marks(W);
    std::vector<bool> del_at(W + 1, false);
    std::map<int, std::pair<int, int>> site_key;  // boundary -> (source, boundary)
    for (int i = 0; i < W; ++i)
      if (slots[i].source >= 0) marks[i] = sources[slots[i].source].marks[slots[i].source_word];
    for (int src = 0; src < static_cast<int>(sources.size()); ++src) {
      const auto& da = sources[src].del_at;
      for (int b = 0; b < static_cast<int>(da.size()); ++b) {
        if (!da[b] || resolved_sites.count({src, b})) continue;
        int at = -1;
        for (int i = 0; i < W && at < 0; ++i) {
          if (slots[i].source == src && slots[i].source_word == b) at = i;
          else if (slots[i].source == src && slots[i].source_word == b - 1) at = i + 1;
        }
        if (at < 0 || site_key.count(at)) continue;
        del_at[at] = true;
        site_key[at] = {src, b};
      }
    }
    rec.tagged = RenderTagged(rec.hypothesis, marks, del_at);
    if (rec.tagged.spans.empty()) {
      rec.merged = rec.hypothesis;
      rec.wer = wer_of(rec.merged);
      s.rounds.push_back(std::move(rec));
      s.termination = Termination::kCleanDetected;
      break;
    }

    // Query and reply.
    auto checked = EnforceQuarantine(ManagerPayload(rec.tagged, history));
    rec.payload = checked.payload;
    rec.quarantine_violations = checked.violations;
    try {
      rec.query = manager.Compose(rec.payload);
      rec.reply = user.Reply(rec.query, truth, opt.fidelity,
                             DeriveSeed(opt.seed, s.utterance_id + "#" + std::to_string(round)));
    } catch (const UserAbort& e) {
      s.error = e.what();
    } catch (const TransportError& e) {
      s.error = e.what();
    }
    if (!s.error.empty()) {
      rec.merged = rec.hypothesis;
      rec.wer = wer_of(rec.merged);
      s.rounds.push_back(std::move(rec));
      s.termination = Termination::kUserAbort;
      break;
    }
    auto parsed = ParseReply(rec.reply);
    rec.diagnostics = parsed.diagnostics;

    // In acoustic mode answered words are spoken again and re-decoded.
    std::map<int, int> span_source;
    if (opt.mode == FeedbackMode::kAcoustic) {
      for (auto& e : parsed.edits) {
        if (e.kind != ReplyEdit::Kind::kWords || e.span < 1 || e.span > static_cast<int>(rec.tagged.spans.size()))
          continue;
        const auto& lex = in.channel->lexicon();
        bool known = true;
        for (const auto& w : e.words) known = known && lex.Contains(w);
        if (!known) {
          rec.diagnostics.push_back("span " + std::to_string(e.span) + ": words outside the lexicon kept as text");
          continue;
        }
        UtteranceRef u;
        u.id = s.utterance_id + "#r" + std::to_string(round) + "s" + std::to_string(e.span);
        u.words = e.words;
        for (const auto& w : e.words) u.hard_flags.push_back(lex.IsHard(w));
        const auto tl = in.channel->MakeTimeline(u);
        auto track = UniformTrack(tl.num_frames, EventClass::kClean);
        auto [d, labels] = in.channel->Decode(u, track, DeriveSeed(opt.seed, "reply"));
        e.words = d.WordStrings();
        if (e.words.empty()) e.kind = ReplyEdit::Kind::kNothing;
        span_source[e.span] = static_cast<int>(sources.size());
        sources.push_back(detail::Analyze({std::move(d), std::move(labels), std::move(track)}, *in.detectors));
      }
    }

    auto merged = MergeCorrections(rec.hypothesis, rec.tagged.spans, parsed.edits);
    rec.diagnostics.insert(rec.diagnostics.end(), merged.diagnostics.begin(), merged.diagnostics.end());
    for (int k : merged.resolved_spans) {
      const auto& sp = rec.tagged.spans[static_cast<std::size_t>(k - 1)];
      if (sp.deletion) resolved_sites.insert(site_key.at(sp.position));
    }
    std::vector<detail::Slot> next;
    for (std::size_t i = 0; i < merged.words.size(); ++i) {
      const auto& o = merged.origins[i];
      if (o.hyp >= 0) {
        next.push_back(slots[o.hyp]);
      } else if (auto it = span_source.find(o.span); it != span_source.end()) {
        next.push_back({merged.words[i], it->second, o.n});
      } else {
        next.push_back({merged.words[i], -1, 0});
      }
    }
    slots = std::move(next);
    rec.merged = detail::Words(slots);
    rec.wer = wer_of(rec.merged);
    history.push_back({{"round", round}, {"query", rec.query}, {"reply", rec.reply}});
    s.rounds.push_back(std::move(rec));
  }
  s.final_hypothesis = s.rounds.empty() ? s.initial_hypothesis : s.rounds.back().merged;
  return s;
}

// ---------------------------------------------------------------------------
// JSON-lines log: one line per round; the last line also carries the outcome.

inline Json ToJson(const RoundRecord& r) {
  Json j;
  j["round"] = r.round;
  j["hypothesis"] = r.hypothesis;
  j["tagged_transcript"] = r.tagged.text;
  j["spans"] = Json::array();
  for (const auto& sp : r.tagged.spans)
    j["spans"].push_back({{"number", sp.number},
                          {"deletion", sp.deletion},
                          {"position", sp.position},
                          {"tag", sp.tag},
                          {"cause", std::string(CauseName(sp.cause))},
                          {"event", std::string(EventClassName(sp.event))},
                          {"strategy", std::string(StrategyName(sp.strategy))}});
  j["payload"] = r.payload;
  j["quarantine_violations"] = r.quarantine_violations;
  j["query"] = r.query;
  j["reply"] = r.reply;
  j["diagnostics"] = r.diagnostics;
  j["merged"] = r.merged;
  j["wer"] = r.wer ? Json(*r.wer) : Json(nullptr);
  return j;
}

inline EventClass EventClassFromName(std::string_view s) {
  for (auto c : kAllEventClasses)
    if (EventClassName(c) == s) return c;
  throw ValidationError("event", "unknown event class '" + std::string(s) + "'");
}

inline Cause CauseFromName(std::string_view s) {
  for (auto c : {Cause::kNone, Cause::kComprehension, Cause::kPerception, Cause::kDeletion})
    if (CauseName(c) == s) return c;
  throw ValidationError("cause", "unknown cause '" + std::string(s) + "'");
}

inline RoundRecord RoundFromJson(const Json& j) {
  RoundRecord r;
  r.round = j.at("round").get<int>();
  r.hypothesis = j.at("hypothesis").get<std::vector<std::string>>();
  r.tagged.text = j.at("tagged_transcript").get<std::string>();
  for (const auto& sp : j.at("spans"))
    r.tagged.spans.push_back({sp.at("number").get<int>(), sp.at("deletion").get<bool>(),
                              sp.at("position").get<int>(), sp.at("tag").get<std::string>(),
                              CauseFromName(sp.at("cause").get<std::string>()),
                              EventClassFromName(sp.at("event").get<std::string>()),
                              StrategyFromName(sp.at("strategy").get<std::string>())});
  r.payload = j.at("payload");
  r.quarantine_violations = j.at("quarantine_violations").get<std::vector<std::string>>();
  r.query = j.at("query").get<std::string>();
  r.reply = j.at("reply").get<std::string>();
  r.diagnostics = j.at("diagnostics").get<std::vector<std::string>>();
  r.merged = j.at("merged").get<std::vector<std::string>>();
  if (!j.at("wer").is_null()) r.wer = j.at("wer").get<double>();
  return r;
}

inline std::string SessionToJsonl(const ClarifySession& s) {
  std::string out;
  for (std::size_t i = 0; i < s.rounds.size(); ++i) {
    Json j;
    j["utterance_id"] = s.utterance_id;
    j["K"] = s.K;
    j["mode"] = std::string(FeedbackModeName(s.mode));
    if (i == 0) {
      j["initial_hypothesis"] = s.initial_hypothesis;
      j["initial_wer"] = s.initial_wer ? Json(*s.initial_wer) : Json(nullptr);
      j["reference_length"] = s.reference_length;
    }
    const Json round = ToJson(s.rounds[i]);
    for (auto it = round.begin(); it != round.end(); ++it) j[it.key()] = it.value();
    if (i + 1 == s.rounds.size()) {
      j["termination"] = std::string(TerminationName(s.termination));
      j["final_hypothesis"] = s.final_hypothesis;
      j["error"] = s.error;
    }
    out += j.dump() + "\n";
  }
  return out;
}

// Parses the concatenated logs of any number of sessions, in order.
inline std::vector<ClarifySession> SessionsFromJsonl(std::string_view text) {
  std::vector<ClarifySession> out;
  std::size_t pos = 0;
  bool open = false;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (Trim(line).empty()) continue;
    const Json j = Json::parse(line);
    if (!open) {
      if (!j.contains("initial_hypothesis")) throw ValidationError("log", "session does not start with round 1");
      ClarifySession s;
      s.utterance_id = j.at("utterance_id").get<std::string>();
      s.K = j.at("K").get<int>();
      s.mode = FeedbackModeFromName(j.at("mode").get<std::string>());
      s.initial_hypothesis = j.at("initial_hypothesis").get<std::vector<std::string>>();
      if (!j.at("initial_wer").is_null()) s.initial_wer = j.at("initial_wer").get<double>();
      s.reference_length = j.value("reference_length", 0);
      out.push_back(std::move(s));
      open = true;
    } else if (j.at("utterance_id").get<std::string>() != out.back().utterance_id) {
      throw ValidationError("log", "rounds of two sessions interleave");
    }
    auto& s = out.back();
    s.rounds.push_back(RoundFromJson(j));
    if (j.contains("termination")) {
      s.termination = TerminationFromName(j.at("termination").get<std::string>());
      s.final_hypothesis = j.at("final_hypothesis").get<std::vector<std::string>>();
      s.error = j.at("error").get<std::string>();
      open = false;
    }
  }
  if (open) throw ValidationError("log", "truncated session log");
  return out;
}

// ---------------------------------------------------------------------------
// Leakage audit: reference n-grams in manager-bound payloads that neither a
// hypothesis shown so far nor an earlier user reply made public.

struct Leak {
  int round = 0;
  NGram ngram;
};

inline std::vector<Leak> AuditLeakage(const ClarifySession& s, const std::vector<std::string>& reference, int n = 3) {
  std::vector<Leak> leaks;
  std::set<NGram> pub = NGrams(NormalizeWords(s.initial_hypothesis), n);
  for (const auto& r : s.rounds) {
    for (const auto& g : NGrams(NormalizeWords(r.hypothesis), n)) pub.insert(g);
    for (const auto& g : LeakedNGrams(r.payload, reference, pub, n)) leaks.push_back({r.round, g});
    for (const auto& g : NGrams(TextWords(r.reply), n)) pub.insert(g);
    for (const auto& g : NGrams(NormalizeWords(r.merged), n)) pub.insert(g);
  }
  return leaks;
}

}  // namespace cadr
