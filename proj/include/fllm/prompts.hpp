#pragma once

// Prompt wording shared by training-data generation and inference, so the
// model sees the same layout at train and answer time.

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fllm {

inline constexpr std::string_view kChoiceLabels = "ABCD";

struct PromptTemplates {
  std::string system =
      "You are a fashion stylist. You judge whether garments form a compatible outfit "
      "and recommend items that complete a look for a given style and occasion.";
  std::string outfit_header = "Outfit items:";
  std::string fitb_question = "Which completes the outfit?";
  std::string fitb_instruction = "Answer with the letter of one option.";
  std::string binary_question = "Do these items form a compatible outfit? Answer yes or no.";
  std::string recommend_header = "Query items:";
  std::string recommend_instruction =
      "Recommend items from the context that complete this look and explain why.";
  std::string context_header = "Context:";
  /// Character budget for system + user text. Roughly 4 characters per token.
  std::size_t char_budget = 8000;
};

inline std::string render_bullets(std::string_view header, std::span<const std::string> lines) {
  std::string out(header);
  for (const auto& line : lines) {
    out += "\n- ";
    out += line;
  }
  return out;
}

inline std::string render_fitb_user(const PromptTemplates& t, std::span<const std::string> context,
                                    std::span<const std::string> candidates) {
  std::string out = render_bullets(t.outfit_header, context);
  out += "\n\n";
  out += t.fitb_question;
  for (std::size_t i = 0; i < candidates.size() && i < kChoiceLabels.size(); ++i) {
    out += '\n';
    out += kChoiceLabels[i];
    out += ") ";
    out += candidates[i];
  }
  out += "\n";
  out += t.fitb_instruction;
  return out;
}

inline std::string render_binary_user(const PromptTemplates& t, std::span<const std::string> items) {
  return render_bullets(t.outfit_header, items) + "\n\n" + t.binary_question;
}

}  // namespace fllm
