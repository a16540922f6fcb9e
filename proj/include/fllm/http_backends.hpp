#pragma once

// HTTP implementations of the chat backend and the embedding provider,
// speaking the de-facto /v1/chat/completions and /v1/embeddings shapes.

#include <chrono>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "fllm/chat.hpp"
#include "fllm/embedding.hpp"
#include "fllm/error.hpp"

namespace fllm {

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

struct HttpResult {
  int status = 0;
  std::string body;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  /// Throws Error(transport) when no HTTP response was received.
  virtual HttpResult post_json(const std::string& path, const std::string& body, const HttpHeaders& headers) = 0;
  /// Human-readable base of the endpoint, used in error messages.
  [[nodiscard]] virtual std::string endpoint() const = 0;
};

/// Splits "http://host:port/prefix" into scheme+authority and path prefix.
struct BaseUrl {
  std::string origin;
  std::string prefix;

  static BaseUrl parse(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
      throw Error(ErrorCode::invalid_argument, "base URL '" + url + "' has no scheme");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    BaseUrl out;
    out.origin = url.substr(0, path_start);
    if (path_start != std::string::npos) out.prefix = url.substr(path_start);
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
    return out;
  }

  /// Appends an API path such as "/v1/embeddings", without doubling a "/v1"
  /// already present in the prefix.
  [[nodiscard]] std::string path(std::string api_path) const {
    if (prefix.size() >= 3 && prefix.compare(prefix.size() - 3, 3, "/v1") == 0 && api_path.rfind("/v1/", 0) == 0) {
      api_path = api_path.substr(3);
    }
    return prefix + api_path;
  }
};

class HttplibTransport final : public HttpTransport {
 public:
  explicit HttplibTransport(std::string base_url, std::chrono::milliseconds timeout = std::chrono::seconds(30))
      : base_url_(std::move(base_url)), url_(BaseUrl::parse(base_url_)), timeout_(timeout) {}

  HttpResult post_json(const std::string& path, const std::string& body, const HttpHeaders& headers) override {
    httplib::Client client(url_.origin);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    const std::string full_path = url_.path(path);
    auto res = client.Post(full_path, h, body, "application/json");
    if (!res) {
      throw Error(ErrorCode::transport,
                  "POST " + url_.origin + full_path + " failed: " + httplib::to_string(res.error()));
    }
    return {res->status, res->body};
  }

  [[nodiscard]] std::string endpoint() const override { return base_url_; }

 private:
  std::string base_url_;
  BaseUrl url_;
  std::chrono::milliseconds timeout_;
};

struct RetryPolicy {
  int max_retries = 2;
  std::chrono::milliseconds backoff{200};
  double multiplier = 2.0;
};

namespace detail {

inline bool retryable_status(int status) { return status == 429 || status >= 500; }

/// POST with retries on transport failures, 429 and 5xx. Other non-2xx
/// statuses fail immediately with the body in the message.
inline std::string post_with_retries(HttpTransport& transport, const std::string& path, const std::string& body,
                                     const HttpHeaders& headers, const RetryPolicy& retry) {
  auto delay = retry.backoff;
  for (int attempt = 0;; ++attempt) {
    const bool last = attempt >= retry.max_retries;
    try {
      HttpResult res = transport.post_json(path, body, headers);
      if (res.status >= 200 && res.status < 300) return std::move(res.body);
      if (last || !retryable_status(res.status)) {
        throw Error(ErrorCode::backend, "HTTP " + std::to_string(res.status) + " from " + transport.endpoint() +
                                            path + ": " + res.body);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::transport || last) throw;
    }
    std::this_thread::sleep_for(delay);
    delay = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(delay.count()) * retry.multiplier));
  }
}

inline HttpHeaders auth_headers(const std::string& api_key) {
  HttpHeaders headers;
  if (!api_key.empty()) headers.emplace_back("Authorization", "Bearer " + api_key);
  return headers;
}

}  // namespace detail

class HttpChatBackend final : public ChatBackend {
 public:
  HttpChatBackend(std::shared_ptr<HttpTransport> transport, std::string api_key = {}, RetryPolicy retry = {})
      : transport_(std::move(transport)), api_key_(std::move(api_key)), retry_(retry) {}

  ChatResponse chat(const ChatRequest& request) override {
    const std::string body = detail::post_with_retries(*transport_, "/v1/chat/completions", chat_request_body(request),
                                                       detail::auth_headers(api_key_), retry_);
    return parse_chat_response(body);
  }

  [[nodiscard]] std::string kind() const override { return "http"; }

 private:
  std::shared_ptr<HttpTransport> transport_;
  std::string api_key_;
  RetryPolicy retry_;
};

inline std::string embeddings_request_body(const std::string& model, std::span<const std::string> texts) {
  return nlohmann::json{{"input", std::vector<std::string>(texts.begin(), texts.end())}, {"model", model}}.dump();
}

inline std::vector<EmbeddingVector> parse_embeddings_response(const std::string& body, std::size_t expected) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::backend, std::string("embeddings response is not JSON: ") + e.what());
  }
  if (!doc.contains("data") || !doc["data"].is_array()) {
    throw Error(ErrorCode::backend, "embeddings response has no data array");
  }
  const auto& data = doc["data"];
  if (data.size() != expected) {
    throw Error(ErrorCode::backend, "embeddings response has " + std::to_string(data.size()) +
                                        " vectors, expected " + std::to_string(expected));
  }
  std::vector<EmbeddingVector> out(expected);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& entry = data[i];
    const std::size_t slot = entry.contains("index") ? entry["index"].get<std::size_t>() : i;
    if (slot >= expected) throw Error(ErrorCode::backend, "embeddings response index out of range");
    out[slot].values = entry.at("embedding").get<std::vector<float>>();
  }
  return out;
}

class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  HttpEmbeddingProvider(std::shared_ptr<HttpTransport> transport, std::string model, std::size_t dims,
                        std::string api_key = {}, RetryPolicy retry = {}, std::size_t batch_size = 64)
      : transport_(std::move(transport)),
        model_(std::move(model)),
        dims_(dims),
        api_key_(std::move(api_key)),
        retry_(retry),
        batch_size_(std::max<std::size_t>(batch_size, 1)) {}

  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override {
    for (const auto& t : texts) {
      if (text::trim(t).empty()) throw Error(ErrorCode::invalid_argument, "cannot embed empty text");
    }
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (std::size_t start = 0; start < texts.size(); start += batch_size_) {
      const auto chunk = texts.subspan(start, std::min(batch_size_, texts.size() - start));
      const std::string body = detail::post_with_retries(*transport_, "/v1/embeddings",
                                                         embeddings_request_body(model_, chunk),
                                                         detail::auth_headers(api_key_), retry_);
      for (auto& v : parse_embeddings_response(body, chunk.size())) {
        if (v.dims() != dims_) {
          throw Error(ErrorCode::backend, "embedding has " + std::to_string(v.dims()) + " dims, configured " +
                                              std::to_string(dims_));
        }
        validate(v);
        out.push_back(std::move(v));
      }
    }
    return out;
  }

  [[nodiscard]] std::size_t dims() const override { return dims_; }

  [[nodiscard]] std::string fingerprint() const override {
    return "http:" + model_ + ":dims=" + std::to_string(dims_);
  }

 private:
  std::shared_ptr<HttpTransport> transport_;
  std::string model_;
  std::size_t dims_;
  std::string api_key_;
  RetryPolicy retry_;
  std::size_t batch_size_;
};

}  // namespace fllm
