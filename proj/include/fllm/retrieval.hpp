#pragma once

// Multi-path retrieval: a direct embedding query, a style/occasion query and
// optional model-generated questions are planned, searched independently and
// merged with reciprocal rank fusion.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fllm/catalog.hpp"
#include "fllm/chat.hpp"
#include "fllm/embedding.hpp"
#include "fllm/error.hpp"
#include "fllm/parallel.hpp"
#include "fllm/text.hpp"
#include "fllm/vector_index.hpp"

namespace fllm {

enum class PathKind { direct, style_occasion, auto_question };

inline std::string to_string(PathKind kind) {
  switch (kind) {
    case PathKind::direct: return "direct";
    case PathKind::style_occasion: return "style_occasion";
    case PathKind::auto_question: return "auto_question";
  }
  return "direct";
}

struct QueryContext {
  std::vector<std::string> query_items;
  std::optional<std::string> free_text;
  std::optional<std::string> style;
  std::optional<std::string> occasion;
  std::size_t k_per_path = 10;
  std::size_t k_final = 10;
};

inline void validate(const QueryContext& ctx) {
  const bool has_text = ctx.free_text && !text::trim(*ctx.free_text).empty();
  if (ctx.query_items.empty() && !has_text) {
    throw Error(ErrorCode::invalid_argument, "query needs at least one item or free text");
  }
  if (ctx.k_per_path < 1 || ctx.k_final < 1) throw Error(ErrorCode::invalid_argument, "k values must be at least 1");
}

struct QueryPath {
  PathKind kind = PathKind::direct;
  /// Unique within a plan: "direct", "style_occasion", "auto_question#1", ...
  std::string label;
  std::string query_text;
  DocFilter filter;

  bool operator==(const QueryPath&) const = default;
};

struct QueryPlan {
  std::vector<QueryPath> paths;
  std::vector<std::string> warnings;
};

struct PathHits {
  PathKind kind = PathKind::direct;
  std::string label;
  std::vector<SearchHit> hits;
};

struct FusedDoc {
  std::string doc_id;
  double fused_score = 0.0;
  /// Labels of the paths that returned this document, sorted.
  std::vector<std::string> paths;

  bool operator==(const FusedDoc&) const = default;
};

struct RetrievedContext {
  std::vector<PathHits> per_path_hits;
  std::vector<FusedDoc> fused;
  std::vector<std::string> warnings;
};

struct PlannerTemplates {
  /// Placeholders: {n}, {items}, {preferences}.
  std::string question_prompt =
      "Write {n} short search questions that would retrieve fashion knowledge useful for choosing items "
      "to pair with: {items}.{preferences} Write one question per line and nothing else.";
};

namespace detail {

inline std::vector<const Item*> resolve_query_items(const Catalog& catalog, const std::vector<std::string>& ids) {
  std::vector<const Item*> items;
  for (const auto& id : ids) {
    const Item* item = catalog.find_item(id);
    if (!item) throw Error(ErrorCode::not_found, "unknown item_id " + id);
    items.push_back(item);
  }
  return items;
}

inline std::string display_title(const Item& item) {
  const std::string title = text::normalize_whitespace(item.title);
  return title.empty() ? item_text(item) : title;
}

/// One question per line; list markers are stripped and lines without a
/// letter are skipped.
inline std::vector<std::string> parse_question_lines(std::string_view reply, std::size_t limit) {
  std::vector<std::string> out;
  for (const auto& raw : text::split_lines(reply)) {
    std::string_view line = text::trim(raw);
    std::size_t digits = 0;
    while (digits < line.size() && line[digits] >= '0' && line[digits] <= '9') ++digits;
    if (digits > 0 && digits < line.size() && (line[digits] == '.' || line[digits] == ')')) {
      line = text::trim(line.substr(digits + 1));
    } else if (!line.empty() && (line.front() == '-' || line.front() == '*')) {
      line = text::trim(line.substr(1));
    }
    const bool has_letter = std::any_of(line.begin(), line.end(), [](char c) {
      return std::isalpha(static_cast<unsigned char>(c)) != 0;
    });
    if (!has_letter) continue;
    out.emplace_back(line);
    if (out.size() >= limit) break;
  }
  return out;
}

}  // namespace detail

/// Build the query paths for a request. The direct path is always present;
/// the style/occasion path appears when either preference is set; with a
/// backend, each generated question becomes its own path. A failing backend
/// only drops the question paths and records a warning.
inline QueryPlan plan_queries(const QueryContext& ctx, const Catalog& catalog, ChatBackend* llm = nullptr,
                              std::size_t n_questions = 2, const PlannerTemplates& templates = {}) {
  validate(ctx);
  const auto items = detail::resolve_query_items(catalog, ctx.query_items);
  QueryPlan plan;

  std::vector<std::string> direct_parts;
  for (const Item* item : items) direct_parts.push_back(item_text(*item));
  if (ctx.free_text && !text::trim(*ctx.free_text).empty()) {
    direct_parts.push_back(text::normalize_whitespace(*ctx.free_text));
  }
  plan.paths.push_back({PathKind::direct, "direct", text::join(direct_parts, " "), {}});

  std::vector<std::string> titles;
  for (const Item* item : items) titles.push_back(detail::display_title(*item));
  const std::string pairing = !titles.empty() ? text::join(titles, ", ")
                                              : text::normalize_whitespace(ctx.free_text.value_or(""));

  if (ctx.style || ctx.occasion) {
    std::string q = ctx.style ? *ctx.style + " outfit" : std::string("outfit");
    if (ctx.occasion) q += " for " + *ctx.occasion;
    if (!pairing.empty()) q += " pairing with " + pairing;
    DocFilter filter;
    filter.kinds = {DocKind::knowledge, DocKind::qa};
    plan.paths.push_back({PathKind::style_occasion, "style_occasion", text::normalize_whitespace(q), filter});
  }

  if (llm != nullptr && n_questions > 0) {
    std::string preferences;
    if (ctx.style) preferences += " Preferred style: " + *ctx.style + ".";
    if (ctx.occasion) preferences += " Occasion: " + *ctx.occasion + ".";
    std::string prompt = templates.question_prompt;
    auto fill = [&](std::string_view key, const std::string& value) {
      for (auto pos = prompt.find(key); pos != std::string::npos; pos = prompt.find(key, pos + value.size())) {
        prompt.replace(pos, key.size(), value);
      }
    };
    fill("{n}", std::to_string(n_questions));
    fill("{items}", pairing);
    fill("{preferences}", preferences);

    ChatRequest request;
    request.temperature = 0.0;
    request.messages = {{Role::user, prompt}};
    try {
      const auto questions = detail::parse_question_lines(llm->chat(request).text, n_questions);
      if (questions.empty()) plan.warnings.push_back("question generation returned no usable lines");
      for (std::size_t i = 0; i < questions.size(); ++i) {
        plan.paths.push_back(
            {PathKind::auto_question, "auto_question#" + std::to_string(i + 1), questions[i], {}});
      }
    } catch (const std::exception& e) {
      plan.warnings.push_back(std::string("question generation failed: ") + e.what());
    }
  }
  return plan;
}

struct PathResults {
  std::vector<PathHits> per_path_hits;
  std::vector<std::string> warnings;
};

/// Embed and search every path independently. A path whose embedding or
/// search fails comes back empty with a warning; if every path fails the
/// whole call fails.
inline PathResults execute(const QueryPlan& plan, const VectorIndex& index, EmbeddingProvider& provider,
                           std::size_t k_per_path, std::size_t concurrency = 1) {
  if (plan.paths.empty()) throw Error(ErrorCode::invalid_argument, "query plan has no paths");
  PathResults out;
  out.per_path_hits.resize(plan.paths.size());
  std::vector<std::string> errors(plan.paths.size());
  parallel_for(plan.paths.size(), concurrency, [&](std::size_t i) {
    const QueryPath& path = plan.paths[i];
    PathHits& slot = out.per_path_hits[i];
    slot.kind = path.kind;
    slot.label = path.label;
    try {
      slot.hits = index.search_topk(provider.embed(path.query_text), k_per_path, path.filter);
    } catch (const std::exception& e) {
      errors[i] = path.label + ": " + e.what();
    }
  });
  std::size_t failed = 0;
  for (const auto& e : errors) {
    if (e.empty()) continue;
    ++failed;
    out.warnings.push_back(e);
  }
  if (failed == plan.paths.size()) {
    throw Error(ErrorCode::backend, "every retrieval path failed: " + text::join(out.warnings, "; "));
  }
  return out;
}

inline constexpr double kRrfConstant = 60.0;

/// Reciprocal rank fusion: score(d) = sum over paths containing d of
/// 1 / (60 + rank), ranks starting at 1. Contributions are summed in
/// ascending order so the result does not depend on path order.
inline std::vector<FusedDoc> fuse(std::span<const PathHits> per_path_hits, std::size_t k_final,
                                  double constant = kRrfConstant) {
  struct Acc {
    std::vector<double> parts;
    std::vector<std::string> paths;
  };
  std::map<std::string, Acc> acc;
  for (const auto& path : per_path_hits) {
    std::set<std::string> seen;
    for (std::size_t r = 0; r < path.hits.size(); ++r) {
      const std::string& id = path.hits[r].doc_id;
      if (!seen.insert(id).second) continue;
      auto& a = acc[id];
      a.parts.push_back(1.0 / (constant + static_cast<double>(r + 1)));
      a.paths.push_back(path.label);
    }
  }
  std::vector<FusedDoc> fused;
  fused.reserve(acc.size());
  for (auto& [id, a] : acc) {
    std::sort(a.parts.begin(), a.parts.end());
    double score = 0.0;
    for (double p : a.parts) score += p;
    std::sort(a.paths.begin(), a.paths.end());
    fused.push_back({id, score, std::move(a.paths)});
  }
  std::sort(fused.begin(), fused.end(), [](const FusedDoc& a, const FusedDoc& b) {
    if (a.fused_score != b.fused_score) return a.fused_score > b.fused_score;
    return a.doc_id < b.doc_id;
  });
  if (fused.size() > k_final) fused.resize(k_final);
  return fused;
}

/// plan -> execute -> fuse.
inline RetrievedContext retrieve(const QueryContext& ctx, const Catalog& catalog, const VectorIndex& index,
                                 EmbeddingProvider& provider, ChatBackend* llm = nullptr, std::size_t n_questions = 2,
                                 std::size_t concurrency = 1) {
  QueryPlan plan = plan_queries(ctx, catalog, llm, n_questions);
  PathResults results = execute(plan, index, provider, ctx.k_per_path, concurrency);
  RetrievedContext out;
  out.fused = fuse(results.per_path_hits, ctx.k_final);
  out.per_path_hits = std::move(results.per_path_hits);
  out.warnings = std::move(plan.warnings);
  out.warnings.insert(out.warnings.end(), results.warnings.begin(), results.warnings.end());
  return out;
}

struct ContextDoc {
  std::string doc_id;
  std::string text;
  DocKind kind = DocKind::item;
  double fused_score = 0.0;
  std::vector<std::string> paths;
};

/// Attach document text to fused hits, keeping fused order. Ids missing from
/// the index are skipped.
inline std::vector<ContextDoc> resolve_context(std::span<const FusedDoc> fused, const VectorIndex& index) {
  std::vector<ContextDoc> out;
  for (const auto& f : fused) {
    auto doc = index.get(f.doc_id);
    if (!doc) continue;
    out.push_back({f.doc_id, doc->text, doc->kind, f.fused_score, f.paths});
  }
  return out;
}

}  // namespace fllm
