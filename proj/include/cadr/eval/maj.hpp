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
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <string>

#include "cadr/clarify/chat.hpp"
#include "cadr/clarify/quarantine.hpp"

namespace cadr {

inline constexpr std::string_view kMajPromptVersion = "maj-v1";
inline constexpr std::string_view kMajPromptTemplate =
#include "cadr/eval/maj_prompt_v1.inc"
    ;

struct MajItem {
  std::string instruction;
  std::string reference;
  std::string prediction;
};

inline std::string MajPrompt(const MajItem& item) {
  std::string out(kMajPromptTemplate);
  auto fill = [&](const std::string& key, const std::string& value) {
    const auto at = out.find(key);
    if (at == std::string::npos) throw Error("judge template lacks " + key);
    out.replace(at, key.size(), value);
  };
  fill("{instruction}", item.instruction);
  fill("{reference}", item.reference);
  fill("{prediction}", item.prediction);
  return out;
}

// Accepts a bare integer or "Score: N" (case-insensitive) within [0, 100].
inline std::optional<int> ParseMajScore(const std::string& text) {
  static const std::regex bare(R"(^\s*(\d{1,3})\s*$)");
  static const std::regex labelled(R"((?:score|rating)\s*[:=]?\s*(\d{1,3})\b)", std::regex::icase);
  std::smatch m;
  if (!std::regex_search(text, m, bare) && !std::regex_search(text, m, labelled)) return std::nullopt;
  const int v = std::stoi(m[1].str());
  if (v < 0 || v > 100) return std::nullopt;
  return v;
}

class JudgePort {
 public:
  virtual ~JudgePort() = default;
  virtual std::string Judge(const MajItem& item, const std::string& prompt) = 0;
};

// Hermetic judge: token-overlap F1 of prediction against reference, times 100.
class MockJudge : public JudgePort {
 public:
  std::string Judge(const MajItem& item, const std::string&) override {
    return "Score: " + std::to_string(static_cast<int>(std::lround(100.0 * TokenF1(item.reference, item.prediction))));
  }

  static double TokenF1(const std::string& reference, const std::string& prediction) {
    const auto ref = TextWords(reference);
    const auto hyp = TextWords(prediction);
    if (ref.empty() || hyp.empty()) return ref.empty() && hyp.empty() ? 1.0 : 0.0;
    std::map<std::string, int> counts;
    for (const auto& w : ref) ++counts[w];
    int common = 0;
    for (const auto& w : hyp)
      if (auto it = counts.find(w); it != counts.end() && it->second > 0) {
        --it->second;
        ++common;
      }
    if (common == 0) return 0.0;
    const double p = static_cast<double>(common) / hyp.size(), r = static_cast<double>(common) / ref.size();
    return 2 * p * r / (p + r);
  }
};

class LlmJudge : public JudgePort {
 public:
  explicit LlmJudge(std::shared_ptr<ChatTransport> chat) : chat_(std::move(chat)) {}
  std::string Judge(const MajItem&, const std::string& prompt) override {
    return chat_->Complete({{"user", prompt}});
  }

 private:
  std::shared_ptr<ChatTransport> chat_;
};

// Score in [0, 100]. Unparseable judge output is retried up to `max_retries`
// times; transport errors propagate.
inline int MajScore(const MajItem& item, JudgePort& judge, int max_retries = 2) {
  const std::string prompt = MajPrompt(item);
  std::string last;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    last = judge.Judge(item, prompt);
    if (auto v = ParseMajScore(last)) return *v;
  }
  throw Error("judge output unparseable after " + std::to_string(max_retries) + " retries: '" + last + "'");
}

}  // namespace cadr
