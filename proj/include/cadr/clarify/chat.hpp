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

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

// <resolv.h>, pulled in by httplib, defines `_res`, which collides with
// Eigen parameter names in later headers.
#ifdef _res
#undef _res
#endif

#include "cadr/core/error.hpp"

namespace cadr {

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatConfig {
  std::string endpoint;  // e.g. http://localhost:8000/v1/chat/completions
  std::string model;
  std::string api_key_env = "CADR_LLM_API_KEY";
  double timeout_s = 60.0;
  int max_retries = 3;
  int backoff_ms = 500;  // doubled after each failed attempt
  double temperature = 0.0;
};

// Anything that turns a chat history into one assistant message.
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual std::string Complete(const std::vector<ChatMessage>& messages) = 0;
};

// Splits "scheme://host[:port][/path]" into the origin and the path.
inline std::pair<std::string, std::string> SplitEndpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("endpoint", "missing scheme in '" + url + "'");
  const auto path_begin = url.find('/', scheme_end + 3);
  if (path_begin == std::string::npos) return {url, "/v1/chat/completions"};
  return {url.substr(0, path_begin), url.substr(path_begin)};
}

inline std::string ChatRequestBody(const ChatConfig& cfg, const std::vector<ChatMessage>& messages) {
  nlohmann::ordered_json body;
  body["model"] = cfg.model;
  body["messages"] = nlohmann::ordered_json::array();
  for (const auto& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  body["temperature"] = cfg.temperature;
  return body.dump();
}

inline std::string ChatResponseContent(const std::string& body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) throw TransportError("chat response is not JSON");
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw TransportError("chat response lacks choices[0].message.content");
  }
}

// OpenAI-compatible chat-completion client with bounded retries and
// exponential backoff. One request in flight per instance.
class HttpChatClient : public ChatTransport {
 public:
  explicit HttpChatClient(ChatConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.endpoint.empty()) throw ValidationError("endpoint", "empty chat endpoint");
    if (cfg_.model.empty()) throw ValidationError("model", "empty chat model name");
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (cfg_.endpoint.rfind("https://", 0) == 0)
      throw ValidationError("endpoint", "https endpoints need a build with CADR_WITH_OPENSSL=ON");
#endif
  }

  std::string Complete(const std::vector<ChatMessage>& messages) override {
    const auto [origin, path] = SplitEndpoint(cfg_.endpoint);
    httplib::Client client(origin);
    const auto timeout = std::chrono::milliseconds(static_cast<long>(cfg_.timeout_s * 1000));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);
    const std::string body = ChatRequestBody(cfg_, messages);
    std::string last_error;
    int delay = cfg_.backoff_ms;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        delay *= 2;
      }
      auto res = client.Post(path, headers, body, "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (res->status == 200) return ChatResponseContent(res->body);
      last_error = "HTTP " + std::to_string(res->status);
      // Client errors other than rate limiting will not improve on retry.
      if (res->status >= 400 && res->status < 500 && res->status != 429) break;
    }
    throw TransportError("chat request to " + cfg_.endpoint + " failed: " + last_error);
  }

 private:
  ChatConfig cfg_;
};

}  // namespace cadr
