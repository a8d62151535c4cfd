#pragma once

#include <chrono>
#include <cstdlib>
#include <memory>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "fgclep/errors.hpp"
#include "fgclep/proposer.hpp"

namespace fgclep::proposer {

// First and second chat-turn instructions sent with every report.
inline constexpr const char* kFeatureQuestion =
    "What waveform features are most likely to be present in electrocardiograms with these "
    "symptoms?";
inline constexpr const char* kFormatInstruction =
    "Organize these waveform features into a Python list, with each item representing a distinct "
    "waveform feature.";

struct ChatMessage {
  std::string role;
  std::string content;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  // Returns the assistant reply for one chat completion; throws
  // errc::transport on network failure.
  virtual std::string complete(const std::vector<ChatMessage>& messages,
                               const ProposerConfig& cfg) = 0;
};

// POSTs to <endpoint>/chat/completions with a bearer token from
// FGCLEP_LLM_KEY; the endpoint comes from the config or FGCLEP_LLM_ENDPOINT.
class HttpLlmClient : public LlmClient {
 public:
  std::string complete(const std::vector<ChatMessage>& messages,
                       const ProposerConfig& cfg) override {
    std::string endpoint = cfg.endpoint;
    if (endpoint.empty()) {
      const char* env = std::getenv("FGCLEP_LLM_ENDPOINT");
      if (env) endpoint = env;
    }
    if (endpoint.empty()) {
      fail(errc::transport, "no LLM endpoint configured (set FGCLEP_LLM_ENDPOINT)");
    }
    std::string base = endpoint;
    std::string prefix;
    const std::size_t scheme = endpoint.find("://");
    if (scheme != std::string::npos) {
      const std::size_t slash = endpoint.find('/', scheme + 3);
      if (slash != std::string::npos) {
        base = endpoint.substr(0, slash);
        prefix = endpoint.substr(slash);
      }
    }
    httplib::Client client(base);
    client.set_connection_timeout(std::chrono::duration<double>(cfg.timeout_s));
    client.set_read_timeout(std::chrono::duration<double>(cfg.timeout_s));
    httplib::Headers headers;
    if (const char* key = std::getenv("FGCLEP_LLM_KEY")) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    nlohmann::json body;
    body["model"] = cfg.model;
    body["temperature"] = 0;
    body["messages"] = nlohmann::json::array();
    for (const auto& m : messages) {
      body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    }
    auto res = client.Post(prefix + "/chat/completions", headers, body.dump(), "application/json");
    if (!res) {
      fail(errc::transport, "request to '" + endpoint + "' failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      fail(errc::transport,
           "'" + endpoint + "' answered HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    try {
      const nlohmann::json reply = nlohmann::json::parse(res->body);
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      fail(errc::parse_error, std::string("malformed completion response: ") + e.what() +
                                  "; body: " + res->body);
    }
  }
};

// Deterministic offline stand-in: replays scripted replies and records what it
// was asked. Default for tests.
class MockLlmClient : public LlmClient {
 public:
  explicit MockLlmClient(std::vector<std::string> replies) : replies_(std::move(replies)) {}

  std::string complete(const std::vector<ChatMessage>& messages,
                       const ProposerConfig& cfg) override {
    (void)cfg;
    requests.push_back(messages);
    if (next_ >= replies_.size()) {
      fail(errc::transport, "mock client ran out of scripted replies");
    }
    return replies_[next_++];
  }

  std::vector<std::vector<ChatMessage>> requests;

 private:
  std::vector<std::string> replies_;
  std::size_t next_ = 0;
};

namespace detail {

template <typename F>
auto with_retries(int retries, F&& call) {
  int attempt = 0;
  for (;;) {
    try {
      return call();
    } catch (const Error& e) {
      if (e.code() != errc::transport || attempt >= retries) throw;
      const auto backoff = std::chrono::milliseconds(100L << attempt);
      std::this_thread::sleep_for(backoff);
      ++attempt;
    }
  }
}

}  // namespace detail

// Two sequential chat turns: the report plus the feature question, then the
// formatting instruction; the second reply is parsed as a Python-style list.
inline std::vector<std::string> propose_llm(const corpus::ReportText& report,
                                            const ProposerConfig& cfg, LlmClient& client) {
  std::vector<ChatMessage> messages;
  messages.push_back({"user", report.text + "\n\n" + kFeatureQuestion});
  const std::string first =
      detail::with_retries(cfg.retries, [&] { return client.complete(messages, cfg); });
  messages.push_back({"assistant", first});
  messages.push_back({"user", kFormatInstruction});
  const std::string second =
      detail::with_retries(cfg.retries, [&] { return client.complete(messages, cfg); });
  return parse_feature_list(second);
}

}  // namespace fgclep::proposer
