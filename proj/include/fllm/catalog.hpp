#pragma once

// Outfit catalog: Polyvore-style ingestion, validation, and train/valid/test
// split construction with item-level disjointness.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "fllm/error.hpp"
#include "fllm/rng.hpp"
#include "fllm/text.hpp"

namespace fllm {

enum class Split { train, valid, test };
enum class SplitMode { joint, disjoint };

inline constexpr std::array<Split, 3> kAllSplits = {Split::train, Split::valid, Split::test};

inline std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "train";
}

inline std::string to_string(SplitMode mode) {
  return mode == SplitMode::joint ? "joint" : "disjoint";
}

inline Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "valid" || name == "validation") return Split::valid;
  if (name == "test") return Split::test;
  throw Error(ErrorCode::invalid_argument, "unknown split '" + std::string(name) + "'");
}

inline SplitMode parse_split_mode(std::string_view name) {
  if (name == "joint" || name == "nondisjoint") return SplitMode::joint;
  if (name == "disjoint") return SplitMode::disjoint;
  throw Error(ErrorCode::invalid_argument, "unknown split mode '" + std::string(name) + "'");
}

struct Item {
  std::string item_id;
  std::string title;
  std::string description;
  std::string semantic_category;
  std::optional<std::string> fine_category_id;
  std::optional<std::string> image_ref;

  bool operator==(const Item&) const = default;
};

struct Outfit {
  std::string outfit_id;
  std::vector<std::string> item_ids;
  std::optional<Split> source_split;

  bool operator==(const Outfit&) const = default;
};

struct SplitAssignment {
  SplitMode mode = SplitMode::joint;
  std::set<std::string> train;
  std::set<std::string> valid;
  std::set<std::string> test;
  /// Outfits left out of every split to preserve disjointness.
  std::vector<std::string> dropped;

  [[nodiscard]] const std::set<std::string>& of(Split split) const {
    switch (split) {
      case Split::train: return train;
      case Split::valid: return valid;
      case Split::test: return test;
    }
    return train;
  }
  std::set<std::string>& of(Split split) {
    return const_cast<std::set<std::string>&>(std::as_const(*this).of(split));
  }

  [[nodiscard]] std::optional<Split> split_of(const std::string& outfit_id) const {
    for (Split s : kAllSplits) {
      if (of(s).contains(outfit_id)) return s;
    }
    return std::nullopt;
  }

  [[nodiscard]] std::size_t assigned() const { return train.size() + valid.size() + test.size(); }

  bool operator==(const SplitAssignment&) const = default;
};

/// One entry of an official fill-in-the-blank file, kept as raw references.
struct OfficialFitbEntry {
  std::vector<std::string> question;
  std::vector<std::string> answers;
  int blank_position = 0;

  bool operator==(const OfficialFitbEntry&) const = default;
};

struct Catalog {
  std::map<std::string, Item> items;
  std::vector<Outfit> outfits;
  SplitAssignment splits;
  std::map<Split, std::vector<OfficialFitbEntry>> official_fitb;

  [[nodiscard]] const Item* find_item(const std::string& id) const {
    auto it = items.find(id);
    return it == items.end() ? nullptr : &it->second;
  }

  [[nodiscard]] const Outfit* find_outfit(const std::string& id) const {
    auto it = std::find_if(outfits.begin(), outfits.end(),
                           [&](const Outfit& o) { return o.outfit_id == id; });
    return it == outfits.end() ? nullptr : &*it;
  }

  /// Outfits of a split, in catalog order.
  [[nodiscard]] std::vector<const Outfit*> outfits_in(Split split) const {
    const auto& members = splits.of(split);
    std::vector<const Outfit*> out;
    for (const auto& o : outfits) {
      if (members.contains(o.outfit_id)) out.push_back(&o);
    }
    return out;
  }

  bool operator==(const Catalog&) const = default;
};

/// Where the pieces of a Polyvore-style distribution live under a root.
struct CatalogLayout {
  std::string metadata_file = "polyvore_item_metadata.json";
  /// Subdirectory holding split and FITB files ("" for a flat layout).
  std::string split_dir;
  std::map<Split, std::string> split_files = {
      {Split::train, "train.json"}, {Split::valid, "valid.json"}, {Split::test, "test.json"}};
  /// "{split}" is replaced by the split name.
  std::string fitb_pattern = "fill_in_blank_{split}.json";
  SplitMode mode = SplitMode::joint;

  /// The published Polyvore Outfits layout: metadata at the root, splits in
  /// `nondisjoint/` or `disjoint/`.
  static CatalogLayout polyvore(SplitMode mode) {
    CatalogLayout layout;
    layout.mode = mode;
    layout.split_dir = mode == SplitMode::joint ? "nondisjoint" : "disjoint";
    return layout;
  }

  static CatalogLayout flat(SplitMode mode = SplitMode::joint) {
    CatalogLayout layout;
    layout.mode = mode;
    return layout;
  }

  [[nodiscard]] std::filesystem::path split_path(const std::filesystem::path& root, Split split) const {
    return root / split_dir / split_files.at(split);
  }

  [[nodiscard]] std::filesystem::path fitb_path(const std::filesystem::path& root, Split split) const {
    std::string name = fitb_pattern;
    if (auto pos = name.find("{split}"); pos != std::string::npos) {
      name.replace(pos, 7, to_string(split));
    }
    return root / split_dir / name;
  }
};

struct CatalogCounts {
  std::size_t items = 0;
  std::size_t outfits = 0;
  std::map<Split, std::size_t> per_split;
};

inline CatalogCounts count(const Catalog& catalog) {
  CatalogCounts c;
  c.items = catalog.items.size();
  c.outfits = catalog.outfits.size();
  for (Split s : kAllSplits) c.per_split[s] = catalog.splits.of(s).size();
  return c;
}

/// Canonical text for an item: "title. description. category: cat." with
/// whitespace normalized, empty fields skipped and trailing periods of each
/// field folded into the separator. Returns "" when every field is empty.
inline std::string item_text(const Item& item) {
  std::vector<std::string> parts;
  auto add = [&](std::string field) {
    field = text::normalize_whitespace(field);
    while (!field.empty() && field.back() == '.') field.pop_back();
    field = std::string(text::trim(field));
    if (!field.empty()) parts.push_back(std::move(field) + ".");
  };
  add(item.title);
  add(item.description);
  const std::string category = text::normalize_whitespace(item.semantic_category);
  if (!category.empty()) add("category: " + category);
  return text::join(parts, " ");
}

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline nlohmann::json parse_json_file(const std::filesystem::path& path) {
  const std::string body = read_file(path);
  try {
    return nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::parse, path.string() + ": malformed JSON at byte " +
                                      std::to_string(e.byte) + ": " + e.what());
  }
}

inline void write_file(const std::filesystem::path& path, const std::string& body) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << body;
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

inline std::string string_field(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  return it->dump();
}

inline std::string id_string(const nlohmann::json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_integer()) return std::to_string(value.get<long long>());
  return {};
}

}  // namespace detail

/// Check outfit shape and referential integrity. Dangling references are
/// reported with the first 10 offenders.
inline void validate_catalog(const Catalog& catalog) {
  if (catalog.items.empty()) throw Error(ErrorCode::validation, "no items");
  for (const auto& [id, item] : catalog.items) {
    if (id.empty() || item.item_id != id) {
      throw Error(ErrorCode::validation, "item key/id mismatch for '" + id + "'");
    }
    if (text::trim(item.semantic_category).empty()) {
      throw Error(ErrorCode::validation, "item " + id + ": empty semantic_category");
    }
  }
  std::unordered_set<std::string> outfit_ids;
  std::vector<std::string> dangling;
  std::size_t dangling_total = 0;
  for (const auto& outfit : catalog.outfits) {
    if (!outfit_ids.insert(outfit.outfit_id).second) {
      throw Error(ErrorCode::validation, "duplicate outfit id " + outfit.outfit_id);
    }
    if (outfit.item_ids.size() < 2) {
      throw Error(ErrorCode::validation,
                  "outfit " + outfit.outfit_id + " has fewer than 2 items");
    }
    std::unordered_set<std::string> seen;
    for (const auto& item_id : outfit.item_ids) {
      if (!seen.insert(item_id).second) {
        throw Error(ErrorCode::validation,
                    "outfit " + outfit.outfit_id + " repeats item " + item_id);
      }
      if (!catalog.items.contains(item_id)) {
        ++dangling_total;
        if (dangling.size() < 10) dangling.push_back(item_id);
      }
    }
  }
  if (dangling_total > 0) {
    throw Error(ErrorCode::validation,
                std::to_string(dangling_total) + " dangling item reference(s): " +
                    text::join(dangling, ", "));
  }
}

inline Catalog load_catalog(const std::filesystem::path& root, const CatalogLayout& layout) {
  namespace fs = std::filesystem;
  Catalog catalog;
  catalog.splits.mode = layout.mode;

  const fs::path metadata_path = root / layout.metadata_file;
  if (!fs::exists(metadata_path)) {
    throw Error(ErrorCode::io, "missing item metadata " + metadata_path.string());
  }
  if (text::trim(detail::read_file(metadata_path)).empty()) {
    throw Error(ErrorCode::validation, "no items");
  }
  const nlohmann::json meta = detail::parse_json_file(metadata_path);
  if (!meta.is_object()) {
    throw Error(ErrorCode::parse, metadata_path.string() + ": expected an object of items");
  }
  for (const auto& [id, record] : meta.items()) {
    if (!record.is_object()) {
      throw Error(ErrorCode::parse, metadata_path.string() + ": item " + id + " is not an object");
    }
    Item item;
    item.item_id = id;
    item.title = detail::string_field(record, "title");
    if (text::trim(item.title).empty()) {
      // Polyvore leaves many titles blank; url_name is a readable slug.
      item.title = detail::string_field(record, "url_name");
    }
    item.description = detail::string_field(record, "description");
    item.semantic_category = detail::string_field(record, "semantic_category");
    if (auto v = detail::string_field(record, "category_id"); !v.empty()) item.fine_category_id = v;
    if (auto v = detail::string_field(record, "image_ref"); !v.empty()) item.image_ref = v;
    catalog.items.emplace(id, std::move(item));
  }
  if (catalog.items.empty()) throw Error(ErrorCode::validation, "no items");

  std::size_t split_files_found = 0;
  for (Split split : kAllSplits) {
    const fs::path path = layout.split_path(root, split);
    if (!fs::exists(path)) continue;
    ++split_files_found;
    const nlohmann::json sets = detail::parse_json_file(path);
    if (!sets.is_array()) throw Error(ErrorCode::parse, path.string() + ": expected a list of outfits");
    for (std::size_t i = 0; i < sets.size(); ++i) {
      const auto& record = sets[i];
      const std::string where = path.string() + ": record " + std::to_string(i);
      if (!record.is_object() || !record.contains("set_id") || !record.contains("items") ||
          !record["items"].is_array()) {
        throw Error(ErrorCode::parse, where + ": expected {set_id, items: [...]}");
      }
      Outfit outfit;
      outfit.outfit_id = detail::id_string(record["set_id"]);
      if (outfit.outfit_id.empty()) throw Error(ErrorCode::parse, where + ": empty set_id");
      outfit.source_split = split;
      std::vector<std::pair<long long, std::string>> ordered;
      for (const auto& entry : record["items"]) {
        if (!entry.is_object() || !entry.contains("item_id")) {
          throw Error(ErrorCode::parse, where + ": item entry without item_id");
        }
        const long long index = entry.value("index", static_cast<long long>(ordered.size() + 1));
        ordered.emplace_back(index, detail::id_string(entry["item_id"]));
      }
      std::stable_sort(ordered.begin(), ordered.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      for (auto& [index, id] : ordered) outfit.item_ids.push_back(std::move(id));
      catalog.splits.of(split).insert(outfit.outfit_id);
      catalog.outfits.push_back(std::move(outfit));
    }

    const fs::path fitb = layout.fitb_path(root, split);
    if (fs::exists(fitb)) {
      const nlohmann::json questions = detail::parse_json_file(fitb);
      if (!questions.is_array()) throw Error(ErrorCode::parse, fitb.string() + ": expected a list");
      auto& entries = catalog.official_fitb[split];
      for (std::size_t i = 0; i < questions.size(); ++i) {
        const auto& q = questions[i];
        if (!q.is_object() || !q.contains("question") || !q.contains("answers")) {
          throw Error(ErrorCode::parse,
                      fitb.string() + ": record " + std::to_string(i) + ": expected {question, answers}");
        }
        OfficialFitbEntry entry;
        for (const auto& r : q["question"]) entry.question.push_back(detail::id_string(r));
        for (const auto& r : q["answers"]) entry.answers.push_back(detail::id_string(r));
        entry.blank_position = q.value("blank_position", 0);
        entries.push_back(std::move(entry));
      }
    }
  }
  if (split_files_found == 0) {
    throw Error(ErrorCode::io, "no split files found under " + (root / layout.split_dir).string());
  }
  validate_catalog(catalog);
  return catalog;
}

/// Write the catalog back in the native layout. Outfits are grouped by their
/// current split assignment; unassigned outfits are not written.
inline void save_catalog(const Catalog& catalog, const std::filesystem::path& root,
                         const CatalogLayout& layout) {
  nlohmann::json meta = nlohmann::json::object();
  for (const auto& [id, item] : catalog.items) {
    nlohmann::json record = {{"title", item.title},
                             {"description", item.description},
                             {"semantic_category", item.semantic_category}};
    if (item.fine_category_id) record["category_id"] = *item.fine_category_id;
    if (item.image_ref) record["image_ref"] = *item.image_ref;
    meta[id] = std::move(record);
  }
  detail::write_file(root / layout.metadata_file, meta.dump(1));

  for (Split split : kAllSplits) {
    nlohmann::json sets = nlohmann::json::array();
    for (const Outfit* outfit : catalog.outfits_in(split)) {
      nlohmann::json items = nlohmann::json::array();
      for (std::size_t i = 0; i < outfit->item_ids.size(); ++i) {
        items.push_back({{"item_id", outfit->item_ids[i]}, {"index", i + 1}});
      }
      sets.push_back({{"set_id", outfit->outfit_id}, {"items", std::move(items)}});
    }
    detail::write_file(layout.split_path(root, split), sets.dump(1));
    if (auto it = catalog.official_fitb.find(split); it != catalog.official_fitb.end()) {
      nlohmann::json questions = nlohmann::json::array();
      for (const auto& e : it->second) {
        questions.push_back(
            {{"question", e.question}, {"answers", e.answers}, {"blank_position", e.blank_position}});
      }
      detail::write_file(layout.fitb_path(root, split), questions.dump(1));
    }
  }
}

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;

  [[nodiscard]] double of(Split split) const {
    switch (split) {
      case Split::train: return train;
      case Split::valid: return valid;
      case Split::test: return test;
    }
    return 0.0;
  }
};

/// Greedy item-disjoint split construction.
///
/// Outfits are visited in seeded-shuffled order. Each joins the first split,
/// in order of largest remaining deficit against its target share, whose
/// item set would not then intersect another split's accumulated items.
/// Outfits that fit nowhere are dropped.
inline SplitAssignment build_disjoint_splits(const Catalog& catalog, const SplitRatios& ratios,
                                             std::uint64_t seed) {
  for (Split s : kAllSplits) {
    const double r = ratios.of(s);
    if (!(r > 0.0) || !std::isfinite(r)) {
      throw Error(ErrorCode::invalid_argument, "split ratios must be positive");
    }
  }
  if (std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9) {
    throw Error(ErrorCode::invalid_argument, "split ratios must sum to 1");
  }
  if (catalog.outfits.empty()) throw Error(ErrorCode::invalid_argument, "catalog is empty");

  std::vector<std::size_t> order(catalog.outfits.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  const auto total = static_cast<double>(catalog.outfits.size());
  std::array<std::size_t, 3> assigned{};
  std::array<std::unordered_set<std::string>, 3> used;
  SplitAssignment result;
  result.mode = SplitMode::disjoint;

  for (std::size_t idx : order) {
    const Outfit& outfit = catalog.outfits[idx];
    std::array<std::size_t, 3> candidates = {0, 1, 2};
    std::array<double, 3> deficit{};
    for (std::size_t s = 0; s < 3; ++s) {
      deficit[s] = ratios.of(kAllSplits[s]) * total - static_cast<double>(assigned[s]);
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) { return deficit[a] > deficit[b]; });
    bool placed = false;
    for (std::size_t s : candidates) {
      const bool conflict = std::any_of(outfit.item_ids.begin(), outfit.item_ids.end(),
                                        [&](const std::string& item) {
                                          for (std::size_t t = 0; t < 3; ++t) {
                                            if (t != s && used[t].contains(item)) return true;
                                          }
                                          return false;
                                        });
      if (conflict) continue;
      used[s].insert(outfit.item_ids.begin(), outfit.item_ids.end());
      result.of(kAllSplits[s]).insert(outfit.outfit_id);
      ++assigned[s];
      placed = true;
      break;
    }
    if (!placed) result.dropped.push_back(outfit.outfit_id);
  }
  return result;
}

struct DisjointnessReport {
  SplitMode mode = SplitMode::joint;
  /// Item ids appearing in outfits of two or more splits, sorted.
  std::vector<std::string> violations;
  /// Outfit ids named by the splits but absent from the catalog.
  std::vector<std::string> unknown_outfits;
  /// True when the splits never claimed disjointness (joint mode).
  bool informational = false;

  [[nodiscard]] bool disjoint() const { return violations.empty(); }
};

inline DisjointnessReport verify_disjoint(const Catalog& catalog, const SplitAssignment& splits) {
  DisjointnessReport report;
  report.mode = splits.mode;
  report.informational = splits.mode == SplitMode::joint;
  std::unordered_map<std::string, const Outfit*> by_id;
  for (const auto& o : catalog.outfits) by_id.emplace(o.outfit_id, &o);

  std::map<std::string, unsigned> membership;  // item -> bitmask of splits
  for (std::size_t s = 0; s < 3; ++s) {
    for (const auto& outfit_id : splits.of(kAllSplits[s])) {
      auto it = by_id.find(outfit_id);
      if (it == by_id.end()) {
        report.unknown_outfits.push_back(outfit_id);
        continue;
      }
      for (const auto& item : it->second->item_ids) membership[item] |= 1U << s;
    }
  }
  for (const auto& [item, mask] : membership) {
    if ((mask & (mask - 1)) != 0) report.violations.push_back(item);
  }
  return report;
}

}  // namespace fllm
