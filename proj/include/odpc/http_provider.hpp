/* Copyright 2026 The ODPC Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <cstdlib>
#include <string>
#include <vector>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "odpc/error.hpp"
#include "odpc/peer_gen.hpp"

namespace odpc {

struct HttpLlmConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  int timeout_seconds = 60;
};

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  require(scheme_end != std::string::npos, ErrorKind::kConfiguration, "bad endpoint URL " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

/// OpenAI-compatible chat-completions provider. The API key comes from
/// ODPC_LLM_API_KEY.
class HttpLlmProvider : public LlmProvider {
 public:
  explicit HttpLlmProvider(HttpLlmConfig cfg) : cfg_(std::move(cfg)) {}

  static nlohmann::json build_request(const std::string& model, const std::string& prompt) {
    return {
        {"model", model},
        {"temperature", 0},
        {"messages",
         {{{"role", "system"},
           {"content",
            "Answer with a comma-separated list of short category names only. "
            "Do not number them or add explanations."}},
          {{"role", "user"}, {"content", prompt}}}},
    };
  }

  static std::vector<std::string> parse_response(const std::string& body) {
    try {
      const auto doc = nlohmann::json::parse(body);
      const auto content = doc.at("choices").at(0).at("message").at("content").get<std::string>();
      return parse_label_list(content);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kGeneration, std::string("unparseable LLM response: ") + e.what());
    }
  }

  std::vector<std::string> request(const std::string& prompt) override {
    const char* key = std::getenv(std::string(kApiKeyEnv).c_str());
    require(key != nullptr && *key != '\0', ErrorKind::kConfiguration,
            std::string(kApiKeyEnv) + " is not set");
    const auto url = parse_url(cfg_.endpoint);
    httplib::Client client(url.origin);
    client.set_read_timeout(cfg_.timeout_seconds, 0);
    client.set_connection_timeout(cfg_.timeout_seconds, 0);
    httplib::Headers headers{{"Authorization", std::string("Bearer ") + key}};
    const auto res = client.Post(url.path, headers, build_request(cfg_.model, prompt).dump(),
                                 "application/json");
    require(static_cast<bool>(res), ErrorKind::kGeneration,
            "LLM request failed: " + httplib::to_string(res.error()));
    require(res->status == 200, ErrorKind::kGeneration,
            "LLM endpoint returned HTTP " + std::to_string(res->status));
    return parse_response(res->body);
  }

  std::string id() const override { return "http:" + cfg_.model + "@" + cfg_.endpoint; }
  bool needs_network() const override { return true; }

 private:
  HttpLlmConfig cfg_;
};

}  // namespace odpc
