#pragma once

// Prompt assembly from items + retrieved context, answer extraction, and the
// prompt-aware mock backends used for deterministic end-to-end runs.

#include <memory>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <vector>

#include "fllm/catalog.hpp"
#include "fllm/chat.hpp"
#include "fllm/embedding.hpp"
#include "fllm/error.hpp"
#include "fllm/prompts.hpp"
#include "fllm/retrieval.hpp"
#include "fllm/rng.hpp"
#include "fllm/text.hpp"

namespace fllm {

enum class Task { fitb, binary, recommend };

inline std::string to_string(Task task) {
  switch (task) {
    case Task::fitb: return "fitb";
    case Task::binary: return "binary";
    case Task::recommend: return "recommend";
  }
  return "fitb";
}

struct PromptInputs {
  std::vector<Item> items;
  /// Exactly four for fitb, ignored otherwise.
  std::vector<Item> candidates;
  std::optional<std::string> free_text;
  std::optional<std::string> style;
  std::optional<std::string> occasion;
};

struct PromptBundle {
  Task task = Task::fitb;
  std::string system_text;
  std::string user_text;
  /// Empty when no context document fits or none was supplied.
  std::string context_block;
  std::string candidate_labels;
  std::size_t context_docs = 0;
  bool truncated = false;

  [[nodiscard]] std::string user_message() const {
    return context_block.empty() ? user_text : context_block + "\n\n" + user_text;
  }

  [[nodiscard]] std::vector<ChatMessage> messages() const {
    return {{Role::system, system_text}, {Role::user, user_message()}};
  }

  /// Length in bytes of everything sent to the model, the unit of the budget.
  [[nodiscard]] std::size_t rendered_length() const { return system_text.size() + 2 + user_message().size(); }

  bool operator==(const PromptBundle&) const = default;
};

inline std::string render_context_line(std::size_t rank, const ContextDoc& doc) {
  return "[" + std::to_string(rank) + "] (" + text::join(doc.paths, ",") + ") " +
         text::normalize_whitespace(doc.text);
}

/// Render the prompt for a task. Context documents are added in fused order
/// while the budget allows; the tail is dropped first and `truncated` set.
inline PromptBundle assemble_prompt(Task task, const PromptInputs& inputs, std::span<const ContextDoc> context,
                                    const PromptTemplates& templates = {}) {
  PromptBundle bundle;
  bundle.task = task;
  bundle.system_text = templates.system;

  std::vector<std::string> item_texts;
  for (const auto& item : inputs.items) item_texts.push_back(item_text(item));

  switch (task) {
    case Task::fitb: {
      if (inputs.candidates.size() != 4) {
        throw Error(ErrorCode::invalid_argument, "fitb prompts need exactly 4 candidates, got " +
                                                     std::to_string(inputs.candidates.size()));
      }
      std::vector<std::string> candidate_texts;
      for (const auto& c : inputs.candidates) candidate_texts.push_back(item_text(c));
      bundle.user_text = render_fitb_user(templates, item_texts, candidate_texts);
      bundle.candidate_labels = std::string(kChoiceLabels);
      break;
    }
    case Task::binary:
      bundle.user_text = render_binary_user(templates, item_texts);
      break;
    case Task::recommend: {
      std::string user = render_bullets(templates.recommend_header, item_texts);
      if (inputs.free_text) user += "\nRequest: " + text::normalize_whitespace(*inputs.free_text);
      if (inputs.style) user += "\nStyle: " + *inputs.style;
      if (inputs.occasion) user += "\nOccasion: " + *inputs.occasion;
      user += "\n\n" + templates.recommend_instruction;
      bundle.user_text = std::move(user);
      break;
    }
  }

  if (bundle.rendered_length() > templates.char_budget) {
    throw Error(ErrorCode::budget, "prompt needs " + std::to_string(bundle.rendered_length()) +
                                       " characters before context, budget is " +
                                       std::to_string(templates.char_budget));
  }
  std::string block = templates.context_header;
  for (std::size_t i = 0; i < context.size(); ++i) {
    std::string candidate = block + "\n" + render_context_line(i + 1, context[i]);
    const std::size_t total = bundle.system_text.size() + 2 + candidate.size() + 2 + bundle.user_text.size();
    if (total > templates.char_budget) {
      bundle.truncated = true;
      break;
    }
    block = std::move(candidate);
    ++bundle.context_docs;
  }
  if (bundle.context_docs > 0) bundle.context_block = std::move(block);
  return bundle;
}

enum class ParseConfidence { exact, heuristic, failed };

inline std::string to_string(ParseConfidence c) {
  switch (c) {
    case ParseConfidence::exact: return "exact";
    case ParseConfidence::heuristic: return "heuristic";
    case ParseConfidence::failed: return "failed";
  }
  return "failed";
}

inline ParseConfidence parse_confidence(std::string_view name) {
  if (name == "exact") return ParseConfidence::exact;
  if (name == "heuristic") return ParseConfidence::heuristic;
  if (name == "failed") return ParseConfidence::failed;
  throw Error(ErrorCode::parse, "unknown parse confidence '" + std::string(name) + "'");
}

struct ParsedAnswer {
  Task task = Task::fitb;
  std::optional<int> choice_index;
  std::optional<bool> binary;
  std::optional<std::string> free_text;
  ParseConfidence confidence = ParseConfidence::failed;
};

/// Extract an answer without ever guessing.
///
/// fitb: a letter after an "answer"/"option"/"choice" cue, else the first
/// standalone A-D (both exact); else a standalone digit 1-4 (heuristic).
/// binary: the first of yes/compatible (true) or no/incompatible/not
/// compatible (false). recommend: the trimmed text.
inline ParsedAnswer parse_answer(Task task, std::string_view reply) {
  ParsedAnswer out;
  out.task = task;
  const std::string text(reply);
  std::smatch m;
  switch (task) {
    case Task::fitb: {
      static const std::regex cue(R"((?:[Aa]nswer|ANSWER|[Oo]ption|[Cc]hoice)(?:\s+is)?\s*[:\-]?\s*\(?([ABCD])\b)");
      static const std::regex letter(R"(\b([ABCD])\b)");
      static const std::regex digit(R"(\b([1-4])\b)");
      if (std::regex_search(text, m, cue) || std::regex_search(text, m, letter)) {
        out.choice_index = m[1].str()[0] - 'A';
        out.confidence = ParseConfidence::exact;
      } else if (std::regex_search(text, m, digit)) {
        out.choice_index = m[1].str()[0] - '1';
        out.confidence = ParseConfidence::heuristic;
      }
      break;
    }
    case Task::binary: {
      static const std::regex verdict(R"(\b(not compatible|incompatible|compatible|yes|no)\b)",
                                      std::regex::icase);
      if (std::regex_search(text, m, verdict)) {
        const std::string word = text::to_lower(m[1].str());
        out.binary = word == "yes" || word == "compatible";
        out.confidence = ParseConfidence::exact;
      }
      break;
    }
    case Task::recommend: {
      const std::string trimmed(text::trim(reply));
      if (!trimmed.empty()) {
        out.free_text = trimmed;
        out.confidence = ParseConfidence::exact;
      }
      break;
    }
  }
  return out;
}

/// The parts of a rendered FITB prompt the mock backends read back.
struct FitbPromptView {
  std::vector<std::string> context;
  std::vector<std::string> candidates;
};

inline std::optional<FitbPromptView> read_fitb_prompt(std::string_view user_message, const PromptTemplates& t = {}) {
  FitbPromptView view;
  bool in_items = false;
  for (const auto& raw : text::split_lines(user_message)) {
    std::string_view line = raw;
    if (line == t.outfit_header) {
      in_items = true;
      view.context.clear();
      continue;
    }
    if (in_items) {
      if (line.rfind("- ", 0) == 0) {
        view.context.emplace_back(line.substr(2));
        continue;
      }
      in_items = false;
    }
    if (line.size() >= 3 && line[1] == ')' && line[2] == ' ' && line[0] >= 'A' && line[0] <= 'D' &&
        static_cast<std::size_t>(line[0] - 'A') == view.candidates.size()) {
      view.candidates.emplace_back(line.substr(3));
    }
  }
  if (view.context.empty() || view.candidates.size() != 4) return std::nullopt;
  return view;
}

inline std::string last_user_message(const ChatRequest& request) {
  for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
    if (it->role == Role::user) return it->content;
  }
  return {};
}

/// Answers FITB prompts with the candidate whose embedding is most similar to
/// the mean of the context-item embeddings (ties go to the earlier label).
/// Binary prompts get "Yes"; anything else gets a fixed rationale.
class SimilarityOracleBackend final : public ChatBackend {
 public:
  explicit SimilarityOracleBackend(std::shared_ptr<EmbeddingProvider> provider, PromptTemplates templates = {})
      : provider_(std::move(provider)), templates_(std::move(templates)) {}

  ChatResponse chat(const ChatRequest& request) override {
    const std::string user = last_user_message(request);
    ChatResponse response;
    if (auto view = read_fitb_prompt(user, templates_)) {
      const auto ctx = provider_->embed_batch(view->context);
      std::vector<double> centroid(provider_->dims(), 0.0);
      for (const auto& v : ctx) {
        for (std::size_t d = 0; d < centroid.size(); ++d) centroid[d] += v.values[d];
      }
      std::vector<float> mean(centroid.size());
      for (std::size_t d = 0; d < centroid.size(); ++d) {
        mean[d] = static_cast<float>(centroid[d] / static_cast<double>(ctx.size()));
      }
      const auto cands = provider_->embed_batch(view->candidates);
      std::size_t best = 0;
      double best_score = -2.0;
      for (std::size_t c = 0; c < cands.size(); ++c) {
        const double s = cosine(mean, cands[c].values);
        if (s > best_score) {
          best_score = s;
          best = c;
        }
      }
      response.text = std::string("Answer: ") + kChoiceLabels[best];
    } else if (user.find(templates_.binary_question) != std::string::npos) {
      response.text = "Yes";
    } else {
      response.text = "These items share colours, materials and silhouette with the query.";
    }
    return response;
  }

  [[nodiscard]] std::string kind() const override { return "oracle"; }

 private:
  std::shared_ptr<EmbeddingProvider> provider_;
  PromptTemplates templates_;
};

/// Uniform random answers keyed by (seed, prompt text), so the answer to a
/// prompt does not depend on call order or concurrency.
class SeededRandomBackend final : public ChatBackend {
 public:
  explicit SeededRandomBackend(std::uint64_t seed, PromptTemplates templates = {})
      : seed_(seed), templates_(std::move(templates)) {}

  ChatResponse chat(const ChatRequest& request) override {
    const std::string user = last_user_message(request);
    const std::uint64_t draw = derive_seed(seed_, user);
    ChatResponse response;
    if (read_fitb_prompt(user, templates_)) {
      response.text = std::string("Answer: ") + kChoiceLabels[draw % 4];
    } else if (user.find(templates_.binary_question) != std::string::npos) {
      response.text = (draw & 1U) != 0 ? "Yes" : "No";
    } else {
      response.text = "No particular preference.";
    }
    return response;
  }

  [[nodiscard]] std::string kind() const override { return "random"; }

 private:
  std::uint64_t seed_;
  PromptTemplates templates_;
};

}  // namespace fllm
