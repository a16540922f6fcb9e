#pragma once

// Test-side reference implementations. Nothing here calls the library code
// it is used to check; shared types are used only as containers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "fllm/fllm.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// Hashing embedder, re-derived from its documented formula:
//   tokens = maximal runs of [a-z0-9] or bytes >= 0x80 after ASCII lowering
//   h      = splitmix64(fnv1a64(token) ^ splitmix64(seed))
//   slot   = h mod dims, weight = 0.5 + ((h >> 40) & 0xFFFFFF) / 2^24
//   vector = sum of weights per slot, L2-normalised

inline std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::vector<std::string> tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    const bool keep = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || (c >= 'A' && c <= 'Z') || c >= 0x80;
    if (keep) {
      cur += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::vector<double> hashing_embed(const std::string& text, std::size_t dims = 256, std::uint64_t seed = 0) {
  std::vector<double> v(dims, 0.0);
  for (const auto& t : tokens(text)) {
    const std::uint64_t h = mix(fnv(t) ^ mix(seed));
    v[h % dims] += 0.5 + static_cast<double>((h >> 40) & 0xFFFFFFULL) / 16777216.0;
  }
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

inline double cos(const std::vector<double>& a, const std::vector<double>& b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  return static_cast<double>(dot / std::sqrt(na * nb));
}

/// Index of the candidate nearest (cosine) to the mean context embedding;
/// the first wins ties. Also reports the margin over the runner-up.
struct CentroidVerdict {
  int index = -1;
  double margin = 0;
};

inline CentroidVerdict centroid_choice(const std::vector<std::string>& context_texts,
                                       const std::vector<std::string>& candidate_texts, std::size_t dims = 256,
                                       std::uint64_t seed = 0) {
  std::vector<double> mean(dims, 0.0);
  for (const auto& t : context_texts) {
    const auto v = hashing_embed(t, dims, seed);
    for (std::size_t d = 0; d < dims; ++d) mean[d] += v[d];
  }
  for (double& x : mean) x /= static_cast<double>(context_texts.size());
  std::vector<double> scores;
  for (const auto& c : candidate_texts) scores.push_back(cos(mean, hashing_embed(c, dims, seed)));
  CentroidVerdict v;
  double best = -10;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > best) {
      best = scores[i];
      v.index = static_cast<int>(i);
    }
  }
  double second = -10;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (static_cast<int>(i) != v.index) second = std::max(second, scores[i]);
  }
  v.margin = best - second;
  return v;
}

// ---------------------------------------------------------------------------
// Exact search: score every document, sort everything, cut at k.

struct RefDoc {
  std::string id;
  std::vector<float> v;
  fllm::DocKind kind = fllm::DocKind::item;
  std::map<std::string, std::string> tags;
};

struct RefHit {
  std::string id;
  double score;
};

inline double ref_cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    na += static_cast<double>(a[i]) * static_cast<double>(a[i]);
    nb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
  }
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return c > 1.0 ? 1.0 : (c < -1.0 ? -1.0 : c);
}

inline std::vector<RefHit> full_scan(const std::vector<RefDoc>& docs, const std::vector<float>& query, std::size_t k,
                                     const std::set<fllm::DocKind>& kinds = {}) {
  std::vector<RefHit> all;
  for (const auto& d : docs) {
    if (!kinds.empty() && !kinds.count(d.kind)) continue;
    all.push_back({d.id, ref_cosine(d.v, query)});
  }
  std::sort(all.begin(), all.end(), [](const RefHit& a, const RefHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

// ---------------------------------------------------------------------------
// Reciprocal rank fusion by brute force: for every document seen anywhere,
// walk every path list to find its first rank.

struct RefFused {
  std::string id;
  double score;
  long double exact;
};

inline std::vector<RefFused> rrf(const std::vector<std::vector<std::string>>& paths, std::size_t k,
                                 double c = 60.0) {
  std::set<std::string> universe;
  for (const auto& p : paths) universe.insert(p.begin(), p.end());
  std::vector<RefFused> out;
  for (const auto& id : universe) {
    std::vector<double> parts;
    long double exact = 0;
    for (const auto& p : paths) {
      for (std::size_t r = 0; r < p.size(); ++r) {
        if (p[r] == id) {
          parts.push_back(1.0 / (c + static_cast<double>(r + 1)));
          exact += 1.0L / (static_cast<long double>(c) + static_cast<long double>(r + 1));
          break;
        }
      }
    }
    std::sort(parts.begin(), parts.end());
    double s = 0;
    for (double x : parts) s += x;
    out.push_back({id, s, exact});
  }
  std::sort(out.begin(), out.end(), [](const RefFused& a, const RefFused& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

// ---------------------------------------------------------------------------
// FITB invariants, checked against the catalog by brute force.

inline std::vector<std::string> fitb_violations(const fllm::Catalog& catalog, const fllm::FITBQuestion& q) {
  std::vector<std::string> bad;
  auto fail = [&](const std::string& what) { bad.push_back(q.qid + ": " + what); };
  if (q.candidates.size() != 4) {
    fail("candidate count " + std::to_string(q.candidates.size()));
    return bad;
  }
  if (q.answer_index < 0 || q.answer_index > 3) {
    fail("answer_index out of range");
    return bad;
  }
  const fllm::Outfit* source = nullptr;
  for (const auto& o : catalog.outfits) {
    if (o.outfit_id == q.source_outfit_id) source = &o;
  }
  if (!source) {
    fail("unknown source outfit");
    return bad;
  }
  if (q.blank_position < 0 || static_cast<std::size_t>(q.blank_position) >= source->item_ids.size()) {
    fail("blank_position out of range");
    return bad;
  }
  const std::string& truth = source->item_ids[static_cast<std::size_t>(q.blank_position)];
  std::vector<std::string> expected_context;
  for (std::size_t i = 0; i < source->item_ids.size(); ++i) {
    if (static_cast<int>(i) != q.blank_position) expected_context.push_back(source->item_ids[i]);
  }
  if (q.context_item_ids != expected_context) fail("context is not the outfit minus the blank");
  int truth_hits = 0;
  for (int i = 0; i < 4; ++i) {
    if (q.candidates[static_cast<std::size_t>(i)] == truth) {
      ++truth_hits;
      if (i != q.answer_index) fail("truth not at answer_index");
    }
  }
  if (truth_hits != 1) fail("truth appears " + std::to_string(truth_hits) + " times");
  const std::set<std::string> unique(q.candidates.begin(), q.candidates.end());
  if (unique.size() != 4) fail("duplicate candidates");
  const auto& split_members = catalog.splits.of(q.split);
  for (int i = 0; i < 4; ++i) {
    if (i == q.answer_index) continue;
    const std::string& d = q.candidates[static_cast<std::size_t>(i)];
    if (std::find(source->item_ids.begin(), source->item_ids.end(), d) != source->item_ids.end()) {
      fail("distractor " + d + " is in the source outfit");
    }
    if (std::find(q.context_item_ids.begin(), q.context_item_ids.end(), d) != q.context_item_ids.end()) {
      fail("distractor " + d + " is in the context");
    }
    bool in_other_same_split = false;
    for (const auto& o : catalog.outfits) {
      if (o.outfit_id == source->outfit_id || !split_members.count(o.outfit_id)) continue;
      if (std::find(o.item_ids.begin(), o.item_ids.end(), d) != o.item_ids.end()) in_other_same_split = true;
    }
    if (!in_other_same_split) fail("distractor " + d + " not from another outfit of the split");
    if (!q.widened) {
      const auto di = catalog.items.find(d);
      const auto ti = catalog.items.find(truth);
      if (di == catalog.items.end() || ti == catalog.items.end() ||
          di->second.semantic_category != ti->second.semantic_category) {
        fail("distractor " + d + " has a different category without the widened flag");
      }
    }
  }
  return bad;
}

/// Pairwise item intersection across the three splits.
inline std::set<std::string> split_item_overlap(const fllm::Catalog& catalog, const fllm::SplitAssignment& s) {
  std::map<std::string, std::set<int>> where;
  for (const auto& o : catalog.outfits) {
    int idx = -1;
    if (s.train.count(o.outfit_id)) idx = 0;
    if (s.valid.count(o.outfit_id)) idx = 1;
    if (s.test.count(o.outfit_id)) idx = 2;
    if (idx < 0) continue;
    for (const auto& it : o.item_ids) where[it].insert(idx);
  }
  std::set<std::string> out;
  for (const auto& [id, sp] : where) {
    if (sp.size() > 1) out.insert(id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data.

inline const std::vector<std::string>& categories() {
  static const std::vector<std::string> c = {"tops", "bottoms", "shoes", "bags", "jewellery", "outerwear"};
  return c;
}

inline std::string word(std::mt19937_64& rng) {
  static const char* syll[] = {"ka", "lo", "mi", "ru", "te", "zo", "pa", "ni", "se", "vu", "do", "fe", "gi", "ho"};
  std::string w;
  const int n = 3 + static_cast<int>(rng() % 3);
  for (int i = 0; i < n; ++i) w += syll[rng() % 14];
  return w;
}

/// Random catalog whose outfits reuse items from a shared pool, so item
/// conflicts between outfits are common. All outfits start in train.
inline fllm::Catalog random_catalog(std::mt19937_64& rng, std::size_t n_outfits, std::size_t n_items,
                                    std::size_t min_len = 2, std::size_t max_len = 5) {
  fllm::Catalog c;
  c.splits.mode = fllm::SplitMode::joint;
  for (std::size_t i = 0; i < n_items; ++i) {
    fllm::Item it;
    it.item_id = "i" + std::to_string(i);
    it.title = word(rng);
    it.semantic_category = categories()[rng() % categories().size()];
    c.items.emplace(it.item_id, it);
  }
  for (std::size_t o = 0; o < n_outfits; ++o) {
    fllm::Outfit out;
    out.outfit_id = "o" + std::to_string(o);
    const std::size_t len = min_len + rng() % (max_len - min_len + 1);
    std::set<std::string> chosen;
    while (chosen.size() < std::min(len, n_items)) chosen.insert("i" + std::to_string(rng() % n_items));
    out.item_ids.assign(chosen.begin(), chosen.end());
    std::shuffle(out.item_ids.begin(), out.item_ids.end(), rng);
    c.splits.train.insert(out.outfit_id);
    c.outfits.push_back(std::move(out));
  }
  return c;
}

/// Outfits of one item per category in `cats`, each outfit with a private
/// three-word theme repeated in every title and description. All outfits go
/// to `split`. Items are never shared, so the same-category pool of every
/// blank holds n_outfits - 1 distractors.
inline fllm::Catalog themed_catalog(std::uint64_t seed, std::size_t n_outfits, std::size_t n_cats = 4,
                                    fllm::Split split = fllm::Split::test) {
  std::mt19937_64 rng(seed);
  fllm::Catalog c;
  c.splits.mode = fllm::SplitMode::disjoint;
  for (std::size_t o = 0; o < n_outfits; ++o) {
    const std::string theme = word(rng) + " " + word(rng) + " " + word(rng);
    fllm::Outfit out;
    out.outfit_id = "set" + std::to_string(o);
    for (std::size_t k = 0; k < n_cats; ++k) {
      fllm::Item it;
      it.item_id = out.outfit_id + "-" + std::to_string(k);
      it.title = theme + " " + word(rng);
      it.description = theme;
      it.semantic_category = categories()[k];
      out.item_ids.push_back(it.item_id);
      c.items.emplace(it.item_id, it);
    }
    c.splits.of(split).insert(out.outfit_id);
    c.outfits.push_back(std::move(out));
  }
  return c;
}

inline std::vector<float> random_unit(std::mt19937_64& rng, std::size_t dims) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> v(dims);
  double s = 0;
  do {
    s = 0;
    for (auto& x : v) {
      x = n(rng);
      s += static_cast<double>(x) * x;
    }
  } while (s == 0);
  return v;
}

}  // namespace oracle
