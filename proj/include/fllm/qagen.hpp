#pragma once

// Training and evaluation data generation: template binary compatibility QA,
// fill-in-the-blank questions, and model-written style QA that doubles as
// retrieval knowledge.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "fllm/catalog.hpp"
#include "fllm/chat.hpp"
#include "fllm/error.hpp"
#include "fllm/parallel.hpp"
#include "fllm/prompts.hpp"
#include "fllm/rng.hpp"
#include "fllm/text.hpp"

namespace fllm {

enum class CompatLabel { compatible, incompatible };

struct BinaryQA {
  std::string qa_id;
  std::vector<std::string> item_ids;
  std::string question_text;
  CompatLabel label = CompatLabel::compatible;
  struct Provenance {
    std::string source_outfit_id;
    /// "positive", or a description of the swap that built the negative.
    std::string corruption = "positive";
    /// The replacement came from outside the swapped item's category.
    bool any_category_fallback = false;
    bool operator==(const Provenance&) const = default;
  } provenance;

  bool operator==(const BinaryQA&) const = default;
};

struct FITBQuestion {
  std::string qid;
  std::vector<std::string> context_item_ids;
  /// Generated: 0-based index into the source outfit. Official: as in the file.
  int blank_position = 0;
  std::vector<std::string> candidates;
  int answer_index = 0;
  Split split = Split::test;
  std::string source_outfit_id;
  /// "generated" or "official".
  std::string provenance = "generated";
  /// Distractors had to be drawn from other categories.
  bool widened = false;

  [[nodiscard]] const std::string& truth() const { return candidates.at(answer_index); }

  bool operator==(const FITBQuestion&) const = default;
};

enum class RecordFamily { binary, fitb, auto_qa };

inline std::string to_string(RecordFamily family) {
  switch (family) {
    case RecordFamily::binary: return "binary";
    case RecordFamily::fitb: return "fitb";
    case RecordFamily::auto_qa: return "auto_qa";
  }
  return "binary";
}

struct TrainingRecord {
  std::vector<ChatMessage> messages;
  RecordFamily family = RecordFamily::binary;
  std::optional<Split> split;

  bool operator==(const TrainingRecord&) const = default;
};

struct KnowledgeDoc {
  std::string doc_id;
  std::string text;
  std::optional<std::string> style;
  std::optional<std::string> occasion;
  std::vector<std::string> item_ids;

  bool operator==(const KnowledgeDoc&) const = default;
};

namespace detail {

inline std::vector<std::string> item_texts(const Catalog& catalog, const std::vector<std::string>& ids) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const Item* item = catalog.find_item(id);
    out.push_back(item ? item_text(*item) : id);
  }
  return out;
}

inline std::vector<std::string> sorted_copy(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  return v;
}

/// Items available as replacements or distractors for one outfit: drawn from
/// the other outfits of the same split, never from the outfit itself.
struct SplitPool {
  std::vector<std::string> all;                               // sorted, unique
  std::map<std::string, std::vector<std::string>> by_category;  // sorted, unique

  SplitPool(const Catalog& catalog, const std::vector<const Outfit*>& outfits) {
    std::set<std::string> ids;
    for (const Outfit* o : outfits) ids.insert(o->item_ids.begin(), o->item_ids.end());
    all.assign(ids.begin(), ids.end());
    for (const auto& id : all) {
      if (const Item* item = catalog.find_item(id)) by_category[item->semantic_category].push_back(id);
    }
  }

  static std::vector<std::string> excluding(const std::vector<std::string>& pool,
                                            const std::vector<std::string>& outfit_items) {
    std::vector<std::string> out;
    for (const auto& id : pool) {
      if (std::find(outfit_items.begin(), outfit_items.end(), id) == outfit_items.end()) {
        out.push_back(id);
      }
    }
    return out;
  }

  /// Up to `count` distinct members of the sorted `pool`, uniformly without
  /// replacement, skipping `outfit_items` and `taken`.
  static std::vector<std::string> sample(const std::vector<std::string>& pool, std::size_t count,
                                         const std::vector<std::string>& outfit_items,
                                         const std::vector<std::string>& taken, Rng& rng) {
    auto blocked = [&](const std::string& id) {
      return std::find(outfit_items.begin(), outfit_items.end(), id) != outfit_items.end() ||
             std::find(taken.begin(), taken.end(), id) != taken.end();
    };
    std::set<std::string> blocked_in_pool;
    for (const auto* group : {&outfit_items, &taken}) {
      for (const auto& id : *group) {
        if (std::binary_search(pool.begin(), pool.end(), id)) blocked_in_pool.insert(id);
      }
    }
    const std::size_t eligible = pool.size() - blocked_in_pool.size();
    std::vector<std::string> out;
    if (eligible <= 4 * count) {
      for (const auto& id : pool) {
        if (!blocked(id)) out.push_back(id);
      }
      rng.shuffle(out);
      if (out.size() > count) out.resize(count);
      return out;
    }
    while (out.size() < count) {
      const std::string& id = pool[rng.below(pool.size())];
      if (blocked(id) || std::find(out.begin(), out.end(), id) != out.end()) continue;
      out.push_back(id);
    }
    return out;
  }

  [[nodiscard]] std::vector<std::string> same_category(const std::string& category,
                                                       const std::vector<std::string>& outfit_items) const {
    auto it = by_category.find(category);
    if (it == by_category.end()) return {};
    return excluding(it->second, outfit_items);
  }
};

}  // namespace detail

/// One positive per outfit in the split, plus `negatives_per_positive`
/// single-item swaps per outfit. A swap replaces a uniformly chosen item with
/// a different same-category item from another outfit of the split; when the
/// category offers nothing, any item of the split is used and flagged.
/// Swaps that happen to reproduce a real outfit are redrawn.
inline std::vector<BinaryQA> gen_binary_qa(const Catalog& catalog, Split split, int negatives_per_positive,
                                           std::uint64_t seed,
                                           const PromptTemplates& templates = {}) {
  if (negatives_per_positive < 1) {
    throw Error(ErrorCode::invalid_argument, "negatives_per_positive must be at least 1");
  }
  const auto outfits = catalog.outfits_in(split);
  if (outfits.empty()) {
    throw Error(ErrorCode::invalid_argument, "split " + to_string(split) + " has no outfits");
  }
  const detail::SplitPool pool(catalog, outfits);
  std::set<std::vector<std::string>> real_outfits;
  for (const auto& o : catalog.outfits) real_outfits.insert(detail::sorted_copy(o.item_ids));

  auto question_for = [&](const std::vector<std::string>& ids) {
    return render_binary_user(templates, detail::item_texts(catalog, ids));
  };

  std::vector<BinaryQA> out;
  out.reserve(outfits.size() * static_cast<std::size_t>(1 + negatives_per_positive));
  for (const Outfit* outfit : outfits) {
    BinaryQA positive;
    positive.qa_id = outfit->outfit_id + "-pos";
    positive.item_ids = outfit->item_ids;
    positive.question_text = question_for(outfit->item_ids);
    positive.label = CompatLabel::compatible;
    positive.provenance.source_outfit_id = outfit->outfit_id;
    out.push_back(std::move(positive));

    Rng rng(derive_seed(seed, "binary:" + outfit->outfit_id));
    for (int n = 0; n < negatives_per_positive; ++n) {
      const std::size_t position = rng.below(outfit->item_ids.size());
      const std::string& original = outfit->item_ids[position];
      const Item* original_item = catalog.find_item(original);
      std::vector<std::string> candidates =
          original_item ? pool.same_category(original_item->semantic_category, outfit->item_ids)
                        : std::vector<std::string>{};
      bool fallback = false;
      if (candidates.empty()) {
        candidates = detail::SplitPool::excluding(pool.all, outfit->item_ids);
        fallback = true;
      }
      if (candidates.empty()) {
        throw Error(ErrorCode::validation,
                    "no replacement candidates for outfit " + outfit->outfit_id + " in split " +
                        to_string(split));
      }
      // Draw order is a seeded permutation; the first swap that does not
      // reproduce a real outfit wins.
      rng.shuffle(candidates);
      std::optional<std::vector<std::string>> negative_items;
      std::string replacement;
      for (const auto& candidate : candidates) {
        auto items = outfit->item_ids;
        items[position] = candidate;
        if (!real_outfits.contains(detail::sorted_copy(items))) {
          negative_items = std::move(items);
          replacement = candidate;
          break;
        }
      }
      if (!negative_items) continue;

      BinaryQA negative;
      negative.qa_id = outfit->outfit_id + "-neg" + std::to_string(n + 1);
      negative.item_ids = std::move(*negative_items);
      negative.question_text = question_for(negative.item_ids);
      negative.label = CompatLabel::incompatible;
      negative.provenance.source_outfit_id = outfit->outfit_id;
      negative.provenance.corruption = "replaced " + original + " with " + replacement +
                                       " at position " + std::to_string(position);
      negative.provenance.any_category_fallback = fallback;
      out.push_back(std::move(negative));
    }
  }
  return out;
}

namespace detail {

/// Resolve an official FITB reference: a raw item id, or Polyvore's
/// "<set_id>_<index>" with a 1-based index into the outfit.
struct ResolvedRef {
  std::string item_id;
  std::optional<std::string> set_id;
};

inline ResolvedRef resolve_official_ref(const Catalog& catalog,
                                        const std::unordered_map<std::string, const Outfit*>& outfits,
                                        const std::string& ref) {
  if (catalog.items.contains(ref)) return {ref, std::nullopt};
  const auto underscore = ref.rfind('_');
  if (underscore != std::string::npos) {
    const std::string set_id = ref.substr(0, underscore);
    const std::string index_text = ref.substr(underscore + 1);
    auto it = outfits.find(set_id);
    if (it != outfits.end() && !index_text.empty() &&
        std::all_of(index_text.begin(), index_text.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      const std::size_t index = std::stoul(index_text);
      if (index >= 1 && index <= it->second->item_ids.size()) {
        return {it->second->item_ids[index - 1], set_id};
      }
    }
  }
  throw Error(ErrorCode::validation, "unresolvable FITB reference '" + ref + "'");
}

inline std::vector<FITBQuestion> official_questions(const Catalog& catalog, Split split,
                                                    const std::vector<OfficialFitbEntry>& entries) {
  std::unordered_map<std::string, const Outfit*> outfits;
  for (const auto& o : catalog.outfits) outfits.emplace(o.outfit_id, &o);

  std::vector<FITBQuestion> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& entry = entries[i];
    if (entry.answers.size() != 4) {
      throw Error(ErrorCode::validation,
                  "official FITB question " + std::to_string(i) + " has " +
                      std::to_string(entry.answers.size()) + " answers, expected 4");
    }
    FITBQuestion q;
    q.split = split;
    q.provenance = "official";
    q.blank_position = entry.blank_position;
    std::optional<std::string> source;
    for (const auto& ref : entry.question) {
      auto r = resolve_official_ref(catalog, outfits, ref);
      if (!source && r.set_id) source = r.set_id;
      q.context_item_ids.push_back(std::move(r.item_id));
    }
    std::vector<ResolvedRef> answers;
    for (const auto& ref : entry.answers) answers.push_back(resolve_official_ref(catalog, outfits, ref));
    for (const auto& a : answers) q.candidates.push_back(a.item_id);

    if (!source) {
      // Raw item ids: the source outfit is the one containing every context item.
      for (const auto& o : catalog.outfits) {
        const bool covers = std::all_of(q.context_item_ids.begin(), q.context_item_ids.end(), [&](const auto& id) {
          return std::find(o.item_ids.begin(), o.item_ids.end(), id) != o.item_ids.end();
        });
        if (covers) {
          source = o.outfit_id;
          break;
        }
      }
    }
    if (!source) {
      throw Error(ErrorCode::validation, "official FITB question " + std::to_string(i) + " has no source outfit");
    }
    q.source_outfit_id = *source;
    const Outfit* outfit = outfits.at(*source);
    q.answer_index = -1;
    for (std::size_t c = 0; c < answers.size(); ++c) {
      const bool from_source = answers[c].set_id
                                   ? *answers[c].set_id == *source
                                   : std::find(outfit->item_ids.begin(), outfit->item_ids.end(),
                                               answers[c].item_id) != outfit->item_ids.end();
      if (from_source) {
        q.answer_index = static_cast<int>(c);
        break;
      }
    }
    if (q.answer_index < 0) {
      throw Error(ErrorCode::validation, "official FITB question " + std::to_string(i) + " has no correct answer");
    }
    q.qid = to_string(split) + "-official-" + std::to_string(i);
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace detail

/// One four-candidate question per outfit of the split. If the catalog holds
/// an official FITB file for the split, its questions are returned instead.
inline std::vector<FITBQuestion> gen_fitb_questions(const Catalog& catalog, Split split, std::uint64_t seed,
                                                    bool use_official = true) {
  if (use_official) {
    if (auto it = catalog.official_fitb.find(split); it != catalog.official_fitb.end()) {
      return detail::official_questions(catalog, split, it->second);
    }
  }
  const auto outfits = catalog.outfits_in(split);
  const detail::SplitPool pool(catalog, outfits);
  std::vector<FITBQuestion> out;
  out.reserve(outfits.size());
  for (const Outfit* outfit : outfits) {
    if (outfit->item_ids.size() < 2) {
      throw Error(ErrorCode::validation, "outfit " + outfit->outfit_id + " has fewer than 2 items");
    }
    Rng rng(derive_seed(seed, "fitb:" + outfit->outfit_id));
    FITBQuestion q;
    q.qid = to_string(split) + "-" + outfit->outfit_id;
    q.split = split;
    q.source_outfit_id = outfit->outfit_id;
    const std::size_t blank = rng.below(outfit->item_ids.size());
    q.blank_position = static_cast<int>(blank);
    const std::string& truth = outfit->item_ids[blank];
    for (std::size_t i = 0; i < outfit->item_ids.size(); ++i) {
      if (i != blank) q.context_item_ids.push_back(outfit->item_ids[i]);
    }

    const Item* truth_item = catalog.find_item(truth);
    std::vector<std::string> distractors;
    if (truth_item) {
      if (auto it = pool.by_category.find(truth_item->semantic_category); it != pool.by_category.end()) {
        distractors = detail::SplitPool::sample(it->second, 3, outfit->item_ids, {}, rng);
      }
    }
    if (distractors.size() < 3) {
      q.widened = true;
      for (auto& id : detail::SplitPool::sample(pool.all, 3 - distractors.size(), outfit->item_ids, distractors, rng)) {
        distractors.push_back(std::move(id));
      }
    }
    if (distractors.size() < 3) {
      throw Error(ErrorCode::validation,
                  "split " + to_string(split) + " has too few items for FITB distractors");
    }
    q.answer_index = static_cast<int>(rng.below(4));
    std::size_t next = 0;
    for (int c = 0; c < 4; ++c) q.candidates.push_back(c == q.answer_index ? truth : distractors[next++]);
    out.push_back(std::move(q));
  }
  return out;
}

inline TrainingRecord binary_training_record(const BinaryQA& qa, const PromptTemplates& templates = {},
                                             std::optional<Split> split = std::nullopt) {
  TrainingRecord record;
  record.family = RecordFamily::binary;
  record.split = split;
  record.messages = {{Role::system, templates.system},
                     {Role::user, qa.question_text},
                     {Role::assistant, qa.label == CompatLabel::compatible ? "Yes" : "No"}};
  return record;
}

inline TrainingRecord fitb_training_record(const Catalog& catalog, const FITBQuestion& q,
                                           const PromptTemplates& templates = {}) {
  TrainingRecord record;
  record.family = RecordFamily::fitb;
  record.split = q.split;
  const auto context = detail::item_texts(catalog, q.context_item_ids);
  const auto candidates = detail::item_texts(catalog, q.candidates);
  record.messages = {{Role::system, templates.system},
                     {Role::user, render_fitb_user(templates, context, candidates)},
                     {Role::assistant, std::string("Answer: ") + kChoiceLabels[q.answer_index]}};
  return record;
}

// ---------------------------------------------------------------------------
// Model-written QA

struct AutoQaTemplate {
  enum class Kind { description, qa };
  Kind kind = Kind::qa;
  /// Placeholders: {items} (item texts joined by "; ") and {n}.
  std::string text;
  std::optional<std::string> style;
  std::optional<std::string> occasion;
};

inline std::vector<AutoQaTemplate> default_auto_qa_templates() {
  return {
      {AutoQaTemplate::Kind::description, "Describe the style and fit of an outfit containing: {items}.",
       std::nullopt, std::nullopt},
      {AutoQaTemplate::Kind::qa,
       "Write {n} question-answer pairs about the style of this outfit. Start each question line "
       "with \"Q:\" and each answer line with \"A:\". Outfit: {items}.",
       std::nullopt, std::nullopt},
  };
}

struct QaPair {
  std::string question;
  std::string answer;
  bool operator==(const QaPair&) const = default;
};

struct ParsedQaReply {
  std::vector<QaPair> pairs;
  /// Lines that were neither questions nor answers, joined by spaces.
  std::string prose;
  std::size_t malformed = 0;
};

namespace detail {

inline std::string_view strip_list_marker(std::string_view line) {
  line = text::trim(line);
  std::size_t i = 0;
  while (i < line.size() && line[i] >= '0' && line[i] <= '9') ++i;
  if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) return text::trim(line.substr(i + 1));
  if (!line.empty() && (line[0] == '-' || line[0] == '*')) return text::trim(line.substr(1));
  return line;
}

}  // namespace detail

/// Lines starting "Q:" pair with the following "A:" line. A question line may
/// carry its answer inline ("Q: ... A: ..."). Everything else is prose.
inline ParsedQaReply parse_qa_reply(std::string_view reply) {
  ParsedQaReply parsed;
  std::optional<std::string> pending;
  std::vector<std::string> prose;
  auto close = [&](std::string question, std::string answer) {
    question = text::normalize_whitespace(question);
    answer = text::normalize_whitespace(answer);
    if (question.empty() || answer.empty()) {
      ++parsed.malformed;
    } else {
      parsed.pairs.push_back({std::move(question), std::move(answer)});
    }
  };
  for (const auto& raw : text::split_lines(reply)) {
    const std::string_view line = detail::strip_list_marker(raw);
    if (line.empty()) continue;
    if (text::starts_with_ci(line, "Q:")) {
      if (pending) ++parsed.malformed;
      pending.reset();
      std::string rest(text::trim(line.substr(2)));
      if (auto inline_answer = rest.find(" A:"); inline_answer != std::string::npos) {
        close(rest.substr(0, inline_answer), rest.substr(inline_answer + 3));
      } else {
        pending = std::move(rest);
      }
    } else if (text::starts_with_ci(line, "A:")) {
      if (!pending) {
        ++parsed.malformed;
        continue;
      }
      close(std::move(*pending), std::string(line.substr(2)));
      pending.reset();
    } else {
      prose.emplace_back(line);
    }
  }
  if (pending) ++parsed.malformed;
  parsed.prose = text::normalize_whitespace(text::join(prose, " "));
  return parsed;
}

struct AutoQaOptions {
  int per_outfit = 3;
  std::uint64_t seed = 0;
  /// 0 = every outfit of the split; otherwise a seeded sample of this size.
  std::size_t max_outfits = 0;
  std::size_t concurrency = 1;
  std::string model = "fllm";
  double temperature = 0.7;
  int max_tokens = 512;
};

struct AutoQaResult {
  std::vector<TrainingRecord> records;
  std::vector<KnowledgeDoc> docs;
  std::size_t prompts_issued = 0;
  std::size_t pairs = 0;
  /// Unpaired Q/A lines plus replies with nothing usable.
  std::size_t malformed = 0;
  std::size_t duplicate_docs = 0;
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
};

inline AutoQaResult gen_auto_qa(ChatBackend& llm, const Catalog& catalog, Split split,
                                const std::vector<AutoQaTemplate>& templates, const AutoQaOptions& options,
                                const PromptTemplates& prompts = {}) {
  if (templates.empty()) throw Error(ErrorCode::invalid_argument, "no auto-QA templates");
  if (options.per_outfit < 0) throw Error(ErrorCode::invalid_argument, "per_outfit must be non-negative");

  auto outfits = catalog.outfits_in(split);
  if (options.max_outfits > 0 && options.max_outfits < outfits.size()) {
    std::vector<std::size_t> picks(outfits.size());
    for (std::size_t i = 0; i < picks.size(); ++i) picks[i] = i;
    Rng rng(derive_seed(options.seed, "auto-qa-sample"));
    rng.shuffle(picks);
    picks.resize(options.max_outfits);
    std::sort(picks.begin(), picks.end());
    std::vector<const Outfit*> sampled;
    for (std::size_t i : picks) sampled.push_back(outfits[i]);
    outfits = std::move(sampled);
  }

  struct Task {
    const Outfit* outfit;
    std::size_t template_index;
    std::string prompt;
    std::string items;
  };
  std::vector<Task> tasks;
  for (const Outfit* outfit : outfits) {
    const std::string items = text::join(detail::item_texts(catalog, outfit->item_ids), "; ");
    for (std::size_t t = 0; t < templates.size(); ++t) {
      if (options.per_outfit == 0 && templates[t].kind == AutoQaTemplate::Kind::qa) continue;
      std::string prompt = templates[t].text;
      for (auto pos = prompt.find("{items}"); pos != std::string::npos; pos = prompt.find("{items}")) {
        prompt.replace(pos, 7, items);
      }
      for (auto pos = prompt.find("{n}"); pos != std::string::npos; pos = prompt.find("{n}")) {
        prompt.replace(pos, 3, std::to_string(options.per_outfit));
      }
      tasks.push_back({outfit, t, std::move(prompt), items});
    }
  }

  std::vector<std::optional<std::string>> replies(tasks.size());
  std::vector<std::string> failures(tasks.size());
  parallel_for(tasks.size(), options.concurrency, [&](std::size_t i) {
    ChatRequest request;
    request.model = options.model;
    request.temperature = options.temperature;
    request.max_tokens = options.max_tokens;
    request.messages = {{Role::system, prompts.system}, {Role::user, tasks[i].prompt}};
    try {
      replies[i] = llm.chat(request).text;
    } catch (const std::exception& e) {
      failures[i] = tasks[i].outfit->outfit_id + ": " + e.what();
    }
  });

  AutoQaResult result;
  result.prompts_issued = tasks.size();
  std::unordered_set<std::string> seen_text;
  auto add_doc = [&](KnowledgeDoc doc) {
    if (!seen_text.insert(doc.text).second) {
      ++result.duplicate_docs;
      return;
    }
    result.docs.push_back(std::move(doc));
  };

  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Task& task = tasks[i];
    if (!replies[i]) {
      result.errors.push_back(failures[i]);
      continue;
    }
    const AutoQaTemplate& tmpl = templates[task.template_index];
    const ParsedQaReply parsed = parse_qa_reply(*replies[i]);
    result.malformed += parsed.malformed;
    if (parsed.pairs.empty() && parsed.prose.empty()) ++result.malformed;
    const std::string id_prefix = "auto-" + task.outfit->outfit_id + "-t" + std::to_string(task.template_index);

    auto make_doc = [&](std::string doc_id, std::string body) {
      KnowledgeDoc doc;
      doc.doc_id = std::move(doc_id);
      doc.text = std::move(body);
      doc.style = tmpl.style;
      doc.occasion = tmpl.occasion;
      doc.item_ids = task.outfit->item_ids;
      return doc;
    };
    if (!parsed.prose.empty()) add_doc(make_doc(id_prefix + "-desc", parsed.prose));
    for (std::size_t p = 0; p < parsed.pairs.size(); ++p) {
      const QaPair& pair = parsed.pairs[p];
      TrainingRecord record;
      record.family = RecordFamily::auto_qa;
      record.split = split;
      record.messages = {{Role::system, prompts.system},
                         {Role::user, "Outfit: " + task.items + "\n" + pair.question},
                         {Role::assistant, pair.answer}};
      result.records.push_back(std::move(record));
      add_doc(make_doc(id_prefix + "-qa" + std::to_string(p + 1), "Q: " + pair.question + " A: " + pair.answer));
      ++result.pairs;
    }
  }
  if (result.pairs == 0) result.warnings.push_back("no parsable question-answer pairs");
  return result;
}

// ---------------------------------------------------------------------------
// JSONL export / import

namespace detail {

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  return out;
}

template <class Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      fn(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::parse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace detail

/// {"messages":[{"role":...,"content":...}]} per line, in input order.
inline void export_finetune_jsonl(const std::vector<TrainingRecord>& records, const std::filesystem::path& path) {
  auto out = detail::open_for_write(path);
  for (const auto& record : records) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : record.messages) messages.push_back(to_json(m));
    out << nlohmann::json{{"messages", std::move(messages)}}.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

/// Reads back messages only; family and split are not part of the format.
inline std::vector<TrainingRecord> load_finetune_jsonl(const std::filesystem::path& path) {
  std::vector<TrainingRecord> records;
  detail::for_each_jsonl(path, [&](const nlohmann::json& line) {
    TrainingRecord record;
    for (const auto& m : line.at("messages")) {
      record.messages.push_back({parse_role(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
    }
    records.push_back(std::move(record));
  });
  return records;
}

inline nlohmann::json to_json(const KnowledgeDoc& doc) {
  nlohmann::json tags = {{"item_ids", doc.item_ids}};
  if (doc.style) tags["style"] = *doc.style;
  if (doc.occasion) tags["occasion"] = *doc.occasion;
  return {{"doc_id", doc.doc_id}, {"text", doc.text}, {"tags", std::move(tags)}};
}

inline void export_knowledge_jsonl(const std::vector<KnowledgeDoc>& docs, const std::filesystem::path& path) {
  auto out = detail::open_for_write(path);
  for (const auto& doc : docs) out << to_json(doc).dump() << '\n';
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

inline std::vector<KnowledgeDoc> load_knowledge_jsonl(const std::filesystem::path& path) {
  std::vector<KnowledgeDoc> docs;
  detail::for_each_jsonl(path, [&](const nlohmann::json& line) {
    KnowledgeDoc doc;
    doc.doc_id = line.at("doc_id").get<std::string>();
    doc.text = line.at("text").get<std::string>();
    if (line.contains("tags")) {
      const auto& tags = line["tags"];
      if (tags.contains("style")) doc.style = tags["style"].get<std::string>();
      if (tags.contains("occasion")) doc.occasion = tags["occasion"].get<std::string>();
      if (tags.contains("item_ids")) doc.item_ids = tags["item_ids"].get<std::vector<std::string>>();
    }
    docs.push_back(std::move(doc));
  });
  return docs;
}

inline nlohmann::json to_json(const FITBQuestion& q) {
  return {{"qid", q.qid},
          {"context_item_ids", q.context_item_ids},
          {"blank_position", q.blank_position},
          {"candidates", q.candidates},
          {"answer_index", q.answer_index},
          {"split", to_string(q.split)},
          {"source_outfit_id", q.source_outfit_id},
          {"provenance", q.provenance},
          {"widened", q.widened}};
}

inline FITBQuestion fitb_from_json(const nlohmann::json& j) {
  FITBQuestion q;
  q.qid = j.at("qid").get<std::string>();
  q.context_item_ids = j.at("context_item_ids").get<std::vector<std::string>>();
  q.blank_position = j.at("blank_position").get<int>();
  q.candidates = j.at("candidates").get<std::vector<std::string>>();
  q.answer_index = j.at("answer_index").get<int>();
  q.split = parse_split(j.at("split").get<std::string>());
  q.source_outfit_id = j.value("source_outfit_id", "");
  q.provenance = j.value("provenance", "generated");
  q.widened = j.value("widened", false);
  return q;
}

inline void export_fitb_jsonl(const std::vector<FITBQuestion>& questions, const std::filesystem::path& path) {
  auto out = detail::open_for_write(path);
  for (const auto& q : questions) out << to_json(q).dump() << '\n';
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

inline std::vector<FITBQuestion> load_fitb_jsonl(const std::filesystem::path& path) {
  std::vector<FITBQuestion> questions;
  detail::for_each_jsonl(path, [&](const nlohmann::json& line) { questions.push_back(fitb_from_json(line)); });
  return questions;
}

}  // namespace fllm
