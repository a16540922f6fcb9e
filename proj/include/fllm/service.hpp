#pragma once

// Read-only HTTP service over an immutable catalog + index snapshot, and the
// offline index build it serves from.

#include <chrono>
#include <limits>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "fllm/catalog.hpp"
#include "fllm/chat.hpp"
#include "fllm/config.hpp"
#include "fllm/embedding.hpp"
#include "fllm/error.hpp"
#include "fllm/inference.hpp"
#include "fllm/qagen.hpp"
#include "fllm/retrieval.hpp"
#include "fllm/vector_index.hpp"

namespace fllm {

inline std::string item_doc_id(const std::string& item_id) { return "item:" + item_id; }

/// Index every catalog item (kind item) and knowledge document (kind qa when
/// the text is a "Q: ... A: ..." pair, knowledge otherwise).
inline VectorIndex build_index(const Catalog& catalog, const std::vector<KnowledgeDoc>& knowledge,
                               EmbeddingProvider& provider, std::size_t batch_size = 256) {
  std::vector<DocumentRecord> docs;
  for (const auto& [id, item] : catalog.items) {
    DocumentRecord doc;
    doc.doc_id = item_doc_id(id);
    doc.text = item_text(item);
    doc.kind = DocKind::item;
    doc.tags = {{"item_id", id}, {"semantic_category", item.semantic_category}};
    docs.push_back(std::move(doc));
  }
  for (const auto& k : knowledge) {
    DocumentRecord doc;
    doc.doc_id = k.doc_id;
    doc.text = k.text;
    doc.kind = k.text.rfind("Q: ", 0) == 0 ? DocKind::qa : DocKind::knowledge;
    if (k.style) doc.tags["style"] = *k.style;
    if (k.occasion) doc.tags["occasion"] = *k.occasion;
    docs.push_back(std::move(doc));
  }
  std::vector<std::string> texts;
  texts.reserve(docs.size());
  for (const auto& d : docs) texts.push_back(d.text);
  for (std::size_t start = 0; start < docs.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, docs.size() - start);
    auto vectors = provider.embed_batch(std::span<const std::string>(texts).subspan(start, n));
    for (std::size_t i = 0; i < n; ++i) docs[start + i].vector = std::move(vectors[i]);
  }
  VectorIndex index(provider.dims(), provider.fingerprint());
  index.upsert(std::move(docs));
  return index;
}

struct RecommendRequest {
  std::optional<std::string> query_item_id;
  std::optional<std::string> free_text;
  std::optional<std::string> style;
  std::optional<std::string> occasion;
  int k = 10;
};

inline RecommendRequest parse_recommend_request(const nlohmann::json& body) {
  if (!body.is_object()) throw Error(ErrorCode::invalid_argument, "request body must be a JSON object");
  RecommendRequest req;
  auto opt_string = [&](const char* key) -> std::optional<std::string> {
    auto it = body.find(key);
    if (it == body.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw Error(ErrorCode::invalid_argument, std::string(key) + " must be a string");
    std::string v = text::normalize_whitespace(it->get<std::string>());
    if (v.empty()) return std::nullopt;
    return v;
  };
  req.query_item_id = opt_string("query_item_id");
  req.free_text = opt_string("free_text");
  req.style = opt_string("style");
  req.occasion = opt_string("occasion");
  if (auto it = body.find("k"); it != body.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw Error(ErrorCode::invalid_argument, "k must be an integer");
    req.k = it->get<int>();
  }
  if (req.k < 1 || req.k > 50) throw Error(ErrorCode::invalid_argument, "k must be in [1, 50]");
  if (!req.query_item_id && !req.free_text) {
    throw Error(ErrorCode::invalid_argument, "one of query_item_id or free_text is required");
  }
  return req;
}

inline nlohmann::json to_json(const Item& item) {
  nlohmann::json j = {{"item_id", item.item_id},
                      {"title", item.title},
                      {"description", item.description},
                      {"semantic_category", item.semantic_category}};
  if (item.fine_category_id) j["category_id"] = *item.fine_category_id;
  if (item.image_ref) j["image_ref"] = *item.image_ref;
  return j;
}

struct Recommendation {
  std::string item_id;
  std::string title;
  double score = 0.0;
  std::string rationale;
};

/// Everything one recommend call produced, before JSON rendering.
struct RecommendResult {
  std::vector<Recommendation> recommendations;
  QueryPlan plan;
  PathResults paths;
  std::vector<FusedDoc> fused;
  std::string rationale;
  bool fallback = false;
  std::string backend_error;
};

struct ServiceState {
  Catalog catalog;
  std::shared_ptr<const VectorIndex> index;
  std::shared_ptr<EmbeddingProvider> provider;
  std::shared_ptr<ChatBackend> backend;
  Config config;
};

class Service {
 public:
  struct Response {
    int status = 200;
    nlohmann::json body;
  };

  explicit Service(ServiceState state)
      : state_(std::move(state)),
        backend_slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(state_.config.concurrency, 1))) {
    if (!state_.index || !state_.provider || !state_.backend) {
      throw Error(ErrorCode::invalid_argument, "service needs an index, an embedder and a backend");
    }
  }

  [[nodiscard]] const ServiceState& state() const { return state_; }

  /// plan -> execute -> fuse -> assemble -> chat. Item documents among the
  /// fused hits, minus the query item, are the recommendations.
  RecommendResult run_recommend(const RecommendRequest& req) {
    const Config& cfg = state_.config;
    if (req.query_item_id && !state_.catalog.find_item(*req.query_item_id)) {
      throw Error(ErrorCode::not_found, *req.query_item_id);
    }
    QueryContext ctx;
    if (req.query_item_id) ctx.query_items.push_back(*req.query_item_id);
    ctx.free_text = req.free_text;
    ctx.style = req.style;
    ctx.occasion = req.occasion;
    ctx.k_per_path = std::max<std::size_t>(cfg.k_per_path, static_cast<std::size_t>(req.k) + 1);
    ctx.k_final = cfg.k_final;

    RecommendResult result;
    {
      std::optional<SlotGuard> guard;
      if (cfg.llm_questions) guard.emplace(backend_slots_);
      result.plan = plan_queries(ctx, state_.catalog, cfg.llm_questions ? state_.backend.get() : nullptr,
                                 cfg.n_questions);
    }
    result.paths = execute(result.plan, *state_.index, *state_.provider, ctx.k_per_path);
    const auto all = fuse(result.paths.per_path_hits, std::numeric_limits<std::size_t>::max());
    result.fused.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(std::min(all.size(), ctx.k_final)));

    for (const auto& f : all) {
      if (result.recommendations.size() >= static_cast<std::size_t>(req.k)) break;
      auto doc = state_.index->get(f.doc_id);
      if (!doc || doc->kind != DocKind::item) continue;
      const auto id_tag = doc->tags.find("item_id");
      if (id_tag == doc->tags.end() || (req.query_item_id && id_tag->second == *req.query_item_id)) continue;
      const Item* item = state_.catalog.find_item(id_tag->second);
      if (!item) continue;
      result.recommendations.push_back({item->item_id, item->title, f.fused_score, {}});
    }

    PromptInputs inputs;
    if (req.query_item_id) inputs.items.push_back(*state_.catalog.find_item(*req.query_item_id));
    inputs.free_text = req.free_text;
    inputs.style = req.style;
    inputs.occasion = req.occasion;
    const auto context = resolve_context(result.fused, *state_.index);
    const PromptBundle bundle = assemble_prompt(Task::recommend, inputs, context, cfg.templates());
    ChatRequest request;
    request.model = cfg.backend_model;
    request.temperature = 0.0;
    request.max_tokens = 512;
    request.messages = bundle.messages();
    try {
      SlotGuard guard(backend_slots_);
      const ChatResponse response = state_.backend->chat(request);
      result.rationale = std::string(text::trim(response.text));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::backend && e.code() != ErrorCode::transport) throw;
      result.fallback = true;
      result.backend_error = e.what();
    }
    for (auto& r : result.recommendations) r.rationale = result.rationale;
    return result;
  }

  Response recommend(const nlohmann::json& body) {
    const auto start = std::chrono::steady_clock::now();
    RecommendRequest req;
    try {
      req = parse_recommend_request(body);
    } catch (const Error& e) {
      return {400, {{"error", e.what()}}};
    }
    RecommendResult result;
    try {
      result = run_recommend(req);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::not_found) return {404, {{"error", "unknown item_id"}, {"item_id", e.what()}}};
      if (e.code() == ErrorCode::invalid_argument) return {400, {{"error", e.what()}}};
      return {502, {{"error", e.what()}}};
    }
    nlohmann::json body_out = render(result);
    body_out["latency_ms"] =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (result.fallback) {
      nlohmann::json failure = {{"error", "chat backend failed: " + result.backend_error}, {"fallback", true}};
      if (state_.config.fallback) {
        body_out["error"] = failure["error"];
        return {502, std::move(body_out)};
      }
      return {502, std::move(failure)};
    }
    return {200, std::move(body_out)};
  }

  /// Paged listing; `query` matches id, title or description, `category`
  /// matches semantic_category (both case-insensitive). Pages start at 1.
  Response items(const std::string& query, const std::string& category, int page) const {
    if (page < 1) return {400, {{"error", "page must be at least 1"}}};
    std::vector<const Item*> matches;
    for (const auto& [id, item] : state_.catalog.items) {
      if (!category.empty() && text::to_lower(item.semantic_category) != text::to_lower(category)) continue;
      if (!query.empty() && !text::contains_ci(id, query) && !text::contains_ci(item.title, query) &&
          !text::contains_ci(item.description, query)) {
        continue;
      }
      matches.push_back(&item);
    }
    const std::size_t page_size = state_.config.page_size;
    const std::size_t begin = std::min(matches.size(), (static_cast<std::size_t>(page) - 1) * page_size);
    const std::size_t end = std::min(matches.size(), begin + page_size);
    nlohmann::json list = nlohmann::json::array();
    for (std::size_t i = begin; i < end; ++i) list.push_back(to_json(*matches[i]));
    return {200, {{"items", std::move(list)}, {"page", page}, {"page_size", page_size}, {"total", matches.size()}}};
  }

  Response item(const std::string& id) const {
    const Item* found = state_.catalog.find_item(id);
    if (!found) return {404, {{"error", "unknown item_id"}, {"item_id", id}}};
    return {200, to_json(*found)};
  }

  /// Never touches the backend.
  Response health() const {
    return {200, {{"status", "ok"}, {"index_size", state_.index->size()}, {"backend", state_.backend->kind()}}};
  }

  void mount(httplib::Server& server) {
    auto send = [](httplib::Response& res, const Response& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    server.Post("/api/recommend", [this, send](const httplib::Request& req, httplib::Response& res) {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::parse_error& e) {
        send(res, {400, {{"error", std::string("malformed JSON: ") + e.what()}}});
        return;
      }
      send(res, recommend(body));
    });
    server.Get("/api/items", [this, send](const httplib::Request& req, httplib::Response& res) {
      int page = 1;
      if (req.has_param("page")) {
        try {
          page = std::stoi(req.get_param_value("page"));
        } catch (const std::exception&) {
          send(res, {400, {{"error", "page must be an integer"}}});
          return;
        }
      }
      send(res, items(req.get_param_value("query"), req.get_param_value("category"), page));
    });
    server.Get(R"(/api/items/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, item(req.matches[1].str()));
    });
    server.Get("/api/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
  }

  [[nodiscard]] nlohmann::json render(const RecommendResult& result) const {
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : result.recommendations) {
      nlohmann::json j = {{"item_id", r.item_id}, {"title", r.title}, {"score", r.score}, {"rationale", r.rationale}};
      if (const Item* item = state_.catalog.find_item(r.item_id); item && item->image_ref) {
        j["image_ref"] = *item->image_ref;
      }
      recs.push_back(std::move(j));
    }
    nlohmann::json paths = nlohmann::json::array();
    for (std::size_t i = 0; i < result.plan.paths.size(); ++i) {
      const auto& path = result.plan.paths[i];
      nlohmann::json ids = nlohmann::json::array();
      for (const auto& f : result.fused) {
        if (std::find(f.paths.begin(), f.paths.end(), path.label) != f.paths.end()) ids.push_back(f.doc_id);
      }
      paths.push_back({{"label", path.label},
                       {"path_kind", to_string(path.kind)},
                       {"query_text", path.query_text},
                       {"doc_ids", std::move(ids)}});
    }
    nlohmann::json fused = nlohmann::json::array();
    for (const auto& f : result.fused) {
      fused.push_back({{"doc_id", f.doc_id}, {"fused_score", f.fused_score}, {"paths", f.paths}});
    }
    std::vector<std::string> warnings = result.plan.warnings;
    warnings.insert(warnings.end(), result.paths.warnings.begin(), result.paths.warnings.end());
    return {{"recommendations", std::move(recs)},
            {"provenance", {{"paths", std::move(paths)}, {"fused", std::move(fused)}}},
            {"model", {{"backend", state_.backend->kind()}, {"name", state_.config.backend_model}}},
            {"fallback", result.fallback},
            {"warnings", warnings}};
  }

 private:
  class SlotGuard {
   public:
    explicit SlotGuard(std::counting_semaphore<>& sem) : sem_(sem) { sem_.acquire(); }
    ~SlotGuard() { sem_.release(); }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;

   private:
    std::counting_semaphore<>& sem_;
  };

  ServiceState state_;
  std::counting_semaphore<> backend_slots_;
};

/// Load catalog + index and construct embedder and backend from config.
inline ServiceState open_service_state(const Config& config) {
  ServiceState state;
  state.config = config;
  state.catalog = load_catalog(config.catalog_root, config.layout());
  state.provider = make_provider(config);
  auto index = std::make_shared<VectorIndex>(VectorIndex::load(config.index_path));
  if (index->fingerprint() != state.provider->fingerprint() || index->dims() != state.provider->dims()) {
    throw Error(ErrorCode::validation, "index " + config.index_path.string() + " was built with '" +
                                           index->fingerprint() + "', configured embedder is '" +
                                           state.provider->fingerprint() + "'");
  }
  state.index = std::move(index);
  state.backend = make_backend(config, state.provider);
  return state;
}

}  // namespace fllm
