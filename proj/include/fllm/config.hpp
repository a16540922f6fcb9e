#pragma once

// Engine configuration: a key = value file, FLLM_* environment overrides and
// explicit (command-line) overrides, in increasing precedence.
//
//   catalog.root          dataset root (required)
//   catalog.layout        flat | nondisjoint | disjoint          [flat]
//   index.path            index file                             [fllm.index]
//   knowledge.path        knowledge JSONL to index (optional)
//   embedder.kind         hashing | http                         [hashing]
//   embedder.dims         vector size                            [256]
//   embedder.seed         hashing seed                           [0]
//   embedder.base_url / embedder.model / embedder.api_key        (http)
//   backend.kind          scripted | oracle | random | http      [oracle]
//   backend.base_url / backend.api_key                           (http)
//   backend.model         model name sent in requests            [fllm]
//   backend.seed          seed of the random backend             [0]
//   backend.max_retries   [2]   backend.backoff_ms [200]   backend.timeout_ms [30000]
//   retrieval.k_per_path  [10]  retrieval.k_final [10]
//   retrieval.llm_questions  true | false                        [false]
//   retrieval.n_questions [2]
//   prompt.char_budget    [8000]
//   service.host [127.0.0.1]  service.port [8080]  service.page_size [50]
//   service.concurrency   backend calls in flight                [4]
//   service.fallback      retrieval-only answer on backend failure [true]
//
// The environment variable for a key is FLLM_ + the key upper-cased with dots
// replaced by underscores, e.g. FLLM_BACKEND_KIND.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fllm/catalog.hpp"
#include "fllm/chat.hpp"
#include "fllm/embedding.hpp"
#include "fllm/error.hpp"
#include "fllm/http_backends.hpp"
#include "fllm/inference.hpp"
#include "fllm/text.hpp"

namespace fllm {

struct Config {
  std::filesystem::path catalog_root;
  std::string catalog_layout = "flat";
  std::filesystem::path index_path = "fllm.index";
  std::optional<std::filesystem::path> knowledge_path;

  std::string embedder_kind = "hashing";
  std::size_t embedder_dims = 256;
  std::uint64_t embedder_seed = 0;
  std::string embedder_base_url;
  std::string embedder_model;
  std::string embedder_api_key;

  std::string backend_kind = "oracle";
  std::string backend_base_url;
  std::string backend_model = "fllm";
  std::string backend_api_key;
  std::uint64_t backend_seed = 0;
  int backend_max_retries = 2;
  int backend_backoff_ms = 200;
  int backend_timeout_ms = 30000;

  std::size_t k_per_path = 10;
  std::size_t k_final = 10;
  bool llm_questions = false;
  std::size_t n_questions = 2;
  std::size_t char_budget = 8000;

  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t page_size = 50;
  std::size_t concurrency = 4;
  bool fallback = true;

  [[nodiscard]] CatalogLayout layout() const {
    if (catalog_layout == "flat") return CatalogLayout::flat();
    return CatalogLayout::polyvore(parse_split_mode(catalog_layout));
  }

  [[nodiscard]] RetryPolicy retry() const {
    return {backend_max_retries, std::chrono::milliseconds(backend_backoff_ms), 2.0};
  }

  [[nodiscard]] PromptTemplates templates() const {
    PromptTemplates t;
    t.char_budget = char_budget;
    return t;
  }
};

using ConfigValues = std::map<std::string, std::string>;
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

inline std::string env_name(const std::string& key) {
  std::string out = "FLLM_";
  for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

/// Parse "key = value" lines; '#' starts a comment line.
inline ConfigValues parse_config_text(std::string_view body, const std::string& source = "config") {
  ConfigValues values;
  const auto lines = text::split_lines(body);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = text::trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::validation, source + ":" + std::to_string(i + 1) + ": expected key = value");
    }
    const std::string key(text::trim(line.substr(0, eq)));
    if (key.empty()) throw Error(ErrorCode::validation, source + ":" + std::to_string(i + 1) + ": empty key");
    values[key] = std::string(text::trim(line.substr(eq + 1)));
  }
  return values;
}

namespace detail {

struct ConfigField {
  const char* key;
  std::function<void(Config&, const std::string&)> set;
};

inline std::size_t parse_count(const std::string& v, std::size_t min_value) {
  std::size_t pos = 0;
  unsigned long long n = 0;
  try {
    n = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || v.front() == '-') throw std::invalid_argument("expected a non-negative integer");
  if (n < min_value) throw std::invalid_argument("must be at least " + std::to_string(min_value));
  return static_cast<std::size_t>(n);
}

inline int parse_int(const std::string& v, int min_value, int max_value) {
  std::size_t pos = 0;
  long n = 0;
  try {
    n = std::stol(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) throw std::invalid_argument("expected an integer");
  if (n < min_value || n > max_value) {
    throw std::invalid_argument("must be in [" + std::to_string(min_value) + ", " + std::to_string(max_value) + "]");
  }
  return static_cast<int>(n);
}

inline bool parse_bool(const std::string& v) {
  const std::string s = text::to_lower(v);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument("expected true or false");
}

inline std::string one_of(const std::string& v, std::initializer_list<const char*> allowed) {
  for (const char* a : allowed) {
    if (v == a) return v;
  }
  std::string list;
  for (const char* a : allowed) list += (list.empty() ? "" : "|") + std::string(a);
  throw std::invalid_argument("expected one of " + list + ", got '" + v + "'");
}

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = {
      {"catalog.root", [](Config& c, const std::string& v) { c.catalog_root = v; }},
      {"catalog.layout",
       [](Config& c, const std::string& v) { c.catalog_layout = one_of(v, {"flat", "nondisjoint", "disjoint"}); }},
      {"index.path", [](Config& c, const std::string& v) { c.index_path = v; }},
      {"knowledge.path",
       [](Config& c, const std::string& v) {
         if (v.empty()) c.knowledge_path.reset();
         else c.knowledge_path = v;
       }},
      {"embedder.kind", [](Config& c, const std::string& v) { c.embedder_kind = one_of(v, {"hashing", "http"}); }},
      {"embedder.dims", [](Config& c, const std::string& v) { c.embedder_dims = parse_count(v, 1); }},
      {"embedder.seed", [](Config& c, const std::string& v) { c.embedder_seed = parse_count(v, 0); }},
      {"embedder.base_url", [](Config& c, const std::string& v) { c.embedder_base_url = v; }},
      {"embedder.model", [](Config& c, const std::string& v) { c.embedder_model = v; }},
      {"embedder.api_key", [](Config& c, const std::string& v) { c.embedder_api_key = v; }},
      {"backend.kind",
       [](Config& c, const std::string& v) { c.backend_kind = one_of(v, {"scripted", "oracle", "random", "http"}); }},
      {"backend.base_url", [](Config& c, const std::string& v) { c.backend_base_url = v; }},
      {"backend.model", [](Config& c, const std::string& v) { c.backend_model = v; }},
      {"backend.api_key", [](Config& c, const std::string& v) { c.backend_api_key = v; }},
      {"backend.seed", [](Config& c, const std::string& v) { c.backend_seed = parse_count(v, 0); }},
      {"backend.max_retries", [](Config& c, const std::string& v) { c.backend_max_retries = parse_int(v, 0, 20); }},
      {"backend.backoff_ms", [](Config& c, const std::string& v) { c.backend_backoff_ms = parse_int(v, 0, 600000); }},
      {"backend.timeout_ms",
       [](Config& c, const std::string& v) { c.backend_timeout_ms = parse_int(v, 1, 3600000); }},
      {"retrieval.k_per_path", [](Config& c, const std::string& v) { c.k_per_path = parse_count(v, 1); }},
      {"retrieval.k_final", [](Config& c, const std::string& v) { c.k_final = parse_count(v, 1); }},
      {"retrieval.llm_questions", [](Config& c, const std::string& v) { c.llm_questions = parse_bool(v); }},
      {"retrieval.n_questions", [](Config& c, const std::string& v) { c.n_questions = parse_count(v, 0); }},
      {"prompt.char_budget", [](Config& c, const std::string& v) { c.char_budget = parse_count(v, 1); }},
      {"service.host", [](Config& c, const std::string& v) { c.host = v; }},
      {"service.port", [](Config& c, const std::string& v) { c.port = parse_int(v, 0, 65535); }},
      {"service.page_size", [](Config& c, const std::string& v) { c.page_size = parse_count(v, 1); }},
      {"service.concurrency", [](Config& c, const std::string& v) { c.concurrency = parse_count(v, 1); }},
      {"service.fallback", [](Config& c, const std::string& v) { c.fallback = parse_bool(v); }},
  };
  return fields;
}

}  // namespace detail

/// Merge the three sources and validate. All field problems are reported
/// together, one "key: message" per line.
inline Config resolve_config(const ConfigValues& file_values, const EnvLookup& env = process_env,
                             const ConfigValues& overrides = {}) {
  const auto& fields = detail::config_fields();
  std::vector<std::string> problems;
  for (const auto& [key, value] : file_values) {
    const bool known = std::any_of(fields.begin(), fields.end(), [&](const auto& f) { return key == f.key; });
    if (!known) problems.push_back(key + ": unknown key");
  }
  for (const auto& [key, value] : overrides) {
    const bool known = std::any_of(fields.begin(), fields.end(), [&](const auto& f) { return key == f.key; });
    if (!known) problems.push_back(key + ": unknown key");
  }

  Config config;
  for (const auto& field : fields) {
    std::optional<std::string> value;
    std::string origin;
    if (auto it = file_values.find(field.key); it != file_values.end()) {
      value = it->second;
      origin = "file";
    }
    if (env) {
      if (auto v = env(env_name(field.key))) {
        value = *v;
        origin = env_name(field.key);
      }
    }
    if (auto it = overrides.find(field.key); it != overrides.end()) {
      value = it->second;
      origin = "override";
    }
    if (!value) continue;
    try {
      field.set(config, *value);
    } catch (const std::exception& e) {
      problems.push_back(std::string(field.key) + ": " + e.what() + " (from " + origin + ")");
    }
  }

  if (config.catalog_root.empty()) problems.push_back("catalog.root: required");
  if (config.backend_kind == "http" && config.backend_base_url.empty()) {
    problems.push_back("backend.base_url: required when backend.kind = http");
  }
  if (config.embedder_kind == "http") {
    if (config.embedder_base_url.empty()) problems.push_back("embedder.base_url: required when embedder.kind = http");
    if (config.embedder_model.empty()) problems.push_back("embedder.model: required when embedder.kind = http");
  }
  if (!problems.empty()) throw Error(ErrorCode::validation, "invalid configuration:\n  " + text::join(problems, "\n  "));
  return config;
}

inline Config load_config(const std::optional<std::filesystem::path>& path, const EnvLookup& env = process_env,
                          const ConfigValues& overrides = {}) {
  ConfigValues values;
  if (path) values = parse_config_text(detail::read_file(*path), path->string());
  return resolve_config(values, env, overrides);
}

inline std::shared_ptr<EmbeddingProvider> make_provider(const Config& config) {
  if (config.embedder_kind == "http") {
    auto transport = std::make_shared<HttplibTransport>(config.embedder_base_url,
                                                        std::chrono::milliseconds(config.backend_timeout_ms));
    return std::make_shared<HttpEmbeddingProvider>(transport, config.embedder_model, config.embedder_dims,
                                                   config.embedder_api_key, config.retry());
  }
  return std::make_shared<HashingEmbedder>(config.embedder_dims, config.embedder_seed);
}

inline std::shared_ptr<ChatBackend> make_http_backend(const Config& config, const std::string& base_url) {
  auto transport =
      std::make_shared<HttplibTransport>(base_url, std::chrono::milliseconds(config.backend_timeout_ms));
  return std::make_shared<HttpChatBackend>(transport, config.backend_api_key, config.retry());
}

/// The oracle backend judges with the configured embedder.
inline std::shared_ptr<ChatBackend> make_backend(const Config& config,
                                                 const std::shared_ptr<EmbeddingProvider>& provider) {
  if (config.backend_kind == "oracle") {
    return std::make_shared<SimilarityOracleBackend>(provider, config.templates());
  }
  if (config.backend_kind == "random") {
    return std::make_shared<SeededRandomBackend>(config.backend_seed, config.templates());
  }
  if (config.backend_kind == "scripted") return std::make_shared<ScriptedBackend>();
  return make_http_backend(config, config.backend_base_url);
}

}  // namespace fllm
