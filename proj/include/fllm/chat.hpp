#pragma once

// Chat-completions wire objects and the backend interface every model
// endpoint (real or mock) implements.

#include <deque>
#include <mutex>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "fllm/error.hpp"

namespace fllm {

enum class Role { system, user, assistant };

inline std::string to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

inline Role parse_role(std::string_view name) {
  if (name == "system") return Role::system;
  if (name == "user") return Role::user;
  if (name == "assistant") return Role::assistant;
  throw Error(ErrorCode::parse, "unknown role '" + std::string(name) + "'");
}

struct ChatMessage {
  Role role = Role::user;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string model = "fllm";
  std::vector<ChatMessage> messages;
  /// Evaluation requests always use 0.
  double temperature = 0.0;
  int max_tokens = 256;
};

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
  int total_tokens = 0;
};

struct ChatResponse {
  std::string text;
  std::string finish_reason = "stop";
  Usage usage;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse chat(const ChatRequest& request) = 0;
  /// "scripted", "oracle", "random" or "http".
  [[nodiscard]] virtual std::string kind() const = 0;
};

inline nlohmann::json to_json(const ChatMessage& message) {
  return {{"role", to_string(message.role)}, {"content", message.content}};
}

/// Body of POST /v1/chat/completions. Keys serialize in sorted order, so the
/// dump is byte-stable.
inline nlohmann::json chat_request_json(const ChatRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : request.messages) messages.push_back(to_json(m));
  return {{"model", request.model},
          {"messages", std::move(messages)},
          {"temperature", request.temperature},
          {"max_tokens", request.max_tokens}};
}

inline std::string chat_request_body(const ChatRequest& request) {
  return chat_request_json(request).dump();
}

inline ChatResponse parse_chat_response(const std::string& body) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::backend, std::string("chat response is not JSON: ") + e.what());
  }
  const auto choices = doc.find("choices");
  if (choices == doc.end() || !choices->is_array() || choices->empty()) {
    throw Error(ErrorCode::backend, "chat response has no choices");
  }
  const auto& first = (*choices)[0];
  ChatResponse response;
  if (first.contains("message") && first["message"].contains("content") &&
      first["message"]["content"].is_string()) {
    response.text = first["message"]["content"].get<std::string>();
  } else {
    throw Error(ErrorCode::backend, "chat response choice has no message content");
  }
  if (first.contains("finish_reason") && first["finish_reason"].is_string()) {
    response.finish_reason = first["finish_reason"].get<std::string>();
  }
  if (doc.contains("usage") && doc["usage"].is_object()) {
    const auto& u = doc["usage"];
    response.usage.prompt_tokens = u.value("prompt_tokens", 0);
    response.usage.completion_tokens = u.value("completion_tokens", 0);
    response.usage.total_tokens = u.value("total_tokens", 0);
  }
  return response;
}

/// Returns queued replies in order and records every request it sees.
class ScriptedBackend final : public ChatBackend {
 public:
  struct Failure {
    std::string message;
  };

  ScriptedBackend() = default;
  explicit ScriptedBackend(std::vector<std::string> replies) {
    for (auto& r : replies) queue_.emplace_back(std::move(r));
  }

  void enqueue(std::string reply) {
    std::lock_guard lock(mutex_);
    queue_.emplace_back(std::move(reply));
  }

  void enqueue_failure(std::string message) {
    std::lock_guard lock(mutex_);
    queue_.emplace_back(Failure{std::move(message)});
  }

  ChatResponse chat(const ChatRequest& request) override {
    std::lock_guard lock(mutex_);
    requests_.push_back(request);
    if (queue_.empty()) throw Error(ErrorCode::backend, "scripted backend has no queued reply");
    auto next = std::move(queue_.front());
    queue_.pop_front();
    if (auto* failure = std::get_if<Failure>(&next)) {
      throw Error(ErrorCode::backend, failure->message);
    }
    ChatResponse response;
    response.text = std::get<std::string>(std::move(next));
    return response;
  }

  [[nodiscard]] std::string kind() const override { return "scripted"; }

  [[nodiscard]] std::vector<ChatRequest> requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
  }

  [[nodiscard]] std::size_t remaining() const {
    std::lock_guard lock(mutex_);
    return queue_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::deque<std::variant<std::string, Failure>> queue_;
  std::vector<ChatRequest> requests_;
};

}  // namespace fllm
