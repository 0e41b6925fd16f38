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

#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "cadr/clarify/chat.hpp"
#include "cadr/clarify/quarantine.hpp"
#include "cadr/clarify/reply.hpp"
#include "cadr/fusion/fusion.hpp"

namespace cadr {

// The user ended the dialogue.
class UserAbort : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Dialogue managers. They see the quarantined payload and nothing else.

class DialogueManagerPort {
 public:
  virtual ~DialogueManagerPort() = default;
  virtual std::string Compose(const Json& payload) = 0;
};

inline std::string_view StrategySentence(Strategy s) {
  switch (s) {
    case Strategy::kRepeat: return "Could you repeat this part?";
    case Strategy::kQuieterRoom: return "It was noisy around here. Could you move somewhere quieter and say it again?";
    case Strategy::kWaitForOtherSpeaker: return "Someone else was talking over this part. Could you repeat it once they have finished?";
    case Strategy::kCheckConnection: return "The connection dropped around here. Could you check it and repeat this part?";
    case Strategy::kSpellOrParaphrase: return "I did not recognise this word. Could you spell it or say it another way?";
    case Strategy::kAskMissingContent: return "I think I missed something here. What did you say at this point?";
  }
  return "";
}

inline Strategy StrategyFromName(std::string_view name) {
  for (auto s : {Strategy::kRepeat, Strategy::kQuieterRoom, Strategy::kWaitForOtherSpeaker,
                 Strategy::kCheckConnection, Strategy::kSpellOrParaphrase, Strategy::kAskMissingContent})
    if (StrategyName(s) == name) return s;
  throw ValidationError("strategy", "unknown strategy '" + std::string(name) + "'");
}

inline constexpr std::string_view kAnswerFormat =
    "Please answer each numbered item on its own line as \"number: words\", "
    "\"number: -\" if nothing belongs there, or \"number: I am not sure\".";

// Deterministic offline manager.
class TemplatedManager : public DialogueManagerPort {
 public:
  std::string Compose(const Json& payload) override {
    const std::string tagged = payload.at("tagged_transcript").get<std::string>();
    std::vector<TranscriptItem> spans;
    for (auto& it : ParseTaggedTranscript(tagged))
      if (it.number > 0) spans.push_back(it);
    std::string q = payload.at("history").empty() ? "I want to make sure I understood you correctly.\n"
                                                  : "Thanks. A few parts are still unclear.\n";
    q += std::string(kTranscriptPrefix) + tagged + "\n";
    for (const auto& h : payload.at("strategy_hints")) {
      const int k = h.at("span").get<int>();
      std::string what = "(missing words)";
      for (const auto& s : spans)
        if (s.number == k && s.tag != "del") what = "\"" + s.word + "\"";
      q += "[" + std::to_string(k) + "] " + what + ": " +
           std::string(StrategySentence(StrategyFromName(h.at("strategy").get<std::string>()))) + "\n";
    }
    q += kAnswerFormat;
    return q;
  }
};

inline constexpr std::string_view kManagerSystemPrompt =
    "You are the dialogue manager of a spoken assistant. You receive a JSON object with the "
    "speech recogniser's transcript, where uncertain spans are wrapped in cause tags "
    "(<noise>, <interference>, <rir>, <packetloss>, <unknown>) and <del/> marks places where "
    "words may be missing, plus a numbered strategy hint for each span and the earlier rounds "
    "of this conversation. Write one short, polite clarification request that asks the user "
    "about every numbered span, following its strategy hint. Refer to spans by number. Do not "
    "guess what the user said.";

// Chat-model manager. The transcript line and the answer format are appended
// so replies stay machine-parseable whatever the model writes.
class LlmManager : public DialogueManagerPort {
 public:
  explicit LlmManager(std::shared_ptr<ChatTransport> chat) : chat_(std::move(chat)) {}

  std::string Compose(const Json& payload) override {
    const std::string text = chat_->Complete({{"system", std::string(kManagerSystemPrompt)},
                                              {"user", payload.dump()}});
    return Trim(text) + "\n" + std::string(kTranscriptPrefix) +
           payload.at("tagged_transcript").get<std::string>() + "\n" + std::string(kAnswerFormat);
  }

 private:
  std::shared_ptr<ChatTransport> chat_;
};

// ---------------------------------------------------------------------------
// User agents. Only they hold the ground truth.

class UserAgentPort {
 public:
  virtual ~UserAgentPort() = default;
  virtual std::string Reply(const std::string& query, const std::vector<std::string>& truth,
                            double fidelity, std::uint64_t seed) = 0;
};

class ScriptedUser : public UserAgentPort {
 public:
  std::string Reply(const std::string& query, const std::vector<std::string>& truth, double fidelity,
                    std::uint64_t seed) override {
    if (truth.empty()) throw ValidationError("truth", "the scripted user needs the reference");
    return ScriptedReply(query, truth, fidelity, seed);
  }
};

// A person at the keyboard. A blank line ends the reply; "quit" or end of
// input aborts the session.
class TerminalUser : public UserAgentPort {
 public:
  TerminalUser(std::istream& in, std::ostream& out) : in_(in), out_(out) {}

  std::string Reply(const std::string& query, const std::vector<std::string>&, double, std::uint64_t) override {
    out_ << "\n" << query << "\n> " << std::flush;
    std::string reply, line;
    bool any = false;
    while (std::getline(in_, line)) {
      any = true;
      if (Trim(line) == "quit") throw UserAbort("user quit");
      if (Trim(line).empty()) break;
      reply += line + "\n";
      out_ << "> " << std::flush;
    }
    if (!any) throw UserAbort("end of input");
    return reply;
  }

 private:
  std::istream& in_;
  std::ostream& out_;
};

inline std::string UserSystemPrompt(const std::vector<std::string>& truth) {
  return "You are role-playing a person talking to a voice assistant. What you actually said was: \"" +
         JoinWords(truth) +
         "\". The assistant misheard parts of it and will ask about numbered spans. Reply with one line "
         "per span number in the form \"number: words\" giving exactly what you said there, "
         "\"number: -\" if nothing belongs there, or \"number: I am not sure\". Write nothing else.";
}

// Chat-model user simulator with up to `max_repairs` format repair prompts.
// Fidelity is left to the model.
class LlmUser : public UserAgentPort {
 public:
  explicit LlmUser(std::shared_ptr<ChatTransport> chat, int max_repairs = 2)
      : chat_(std::move(chat)), max_repairs_(max_repairs) {}

  std::string Reply(const std::string& query, const std::vector<std::string>& truth, double,
                    std::uint64_t) override {
    std::vector<ChatMessage> msgs = {{"system", UserSystemPrompt(truth)}, {"user", query}};
    std::string reply = chat_->Complete(msgs);
    for (int r = 0; r < max_repairs_; ++r) {
      const auto parsed = ParseReply(reply);
      if (parsed.diagnostics.empty() && !parsed.edits.empty()) break;
      msgs.push_back({"assistant", reply});
      msgs.push_back({"user", "Your reply did not follow the format. " + std::string(kAnswerFormat) +
                                  " Write nothing else."});
      reply = chat_->Complete(msgs);
    }
    return reply;
  }

 private:
  std::shared_ptr<ChatTransport> chat_;
  int max_repairs_;
};

}  // namespace cadr
