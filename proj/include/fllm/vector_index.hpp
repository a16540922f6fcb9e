#pragma once

// Exact top-k cosine index over document embeddings, with a portable binary
// file format.
//
// File layout (all integers little-endian):
//   magic      8 bytes  "FLLMIDX\0"
//   version    u32
//   dims       u32
//   count      u64
//   fingerprint: u32 length + bytes
//   count records:
//     doc_id   u32 length + bytes
//     kind     u8   (0 item, 1 knowledge, 2 qa)
//     text     u32 length + bytes
//     tags     u32 n, then n x (u32 length + key, u32 length + value)
//     flags    u8   (bit 0: normalized)
//     values   dims x f32 (IEEE-754 binary32)

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fllm/embedding.hpp"
#include "fllm/error.hpp"

namespace fllm {

enum class DocKind : std::uint8_t { item = 0, knowledge = 1, qa = 2 };

inline std::string to_string(DocKind kind) {
  switch (kind) {
    case DocKind::item: return "item";
    case DocKind::knowledge: return "knowledge";
    case DocKind::qa: return "qa";
  }
  return "item";
}

inline DocKind parse_doc_kind(std::string_view name) {
  if (name == "item") return DocKind::item;
  if (name == "knowledge") return DocKind::knowledge;
  if (name == "qa") return DocKind::qa;
  throw Error(ErrorCode::parse, "unknown document kind '" + std::string(name) + "'");
}

struct DocumentRecord {
  std::string doc_id;
  std::string text;
  EmbeddingVector vector;
  DocKind kind = DocKind::item;
  /// style, occasion, semantic_category, item_id.
  std::map<std::string, std::string> tags;

  bool operator==(const DocumentRecord&) const = default;
};

struct SearchHit {
  std::string doc_id;
  double score = 0.0;

  bool operator==(const SearchHit&) const = default;
};

/// Score descending, then doc_id ascending.
inline bool hit_before(const SearchHit& a, const SearchHit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.doc_id < b.doc_id;
}

/// Restricts a search to some document kinds and/or exact tag values.
/// Empty members match everything.
struct DocFilter {
  std::set<DocKind> kinds;
  std::map<std::string, std::string> tags;

  [[nodiscard]] bool matches(const DocumentRecord& doc) const {
    if (!kinds.empty() && !kinds.contains(doc.kind)) return false;
    for (const auto& [key, value] : tags) {
      auto it = doc.tags.find(key);
      if (it == doc.tags.end() || it->second != value) return false;
    }
    return true;
  }

  [[nodiscard]] bool empty() const { return kinds.empty() && tags.empty(); }

  bool operator==(const DocFilter&) const = default;
};

/// Many concurrent searches or one upsert at a time.
class VectorIndex {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;
  static constexpr char kMagic[8] = {'F', 'L', 'L', 'M', 'I', 'D', 'X', '\0'};

  VectorIndex(std::size_t dims, std::string fingerprint)
      : dims_(dims), fingerprint_(std::move(fingerprint)), mutex_(std::make_unique<std::shared_mutex>()) {
    if (dims_ == 0) throw Error(ErrorCode::invalid_argument, "index dims must be positive");
  }

  [[nodiscard]] std::size_t dims() const { return dims_; }
  [[nodiscard]] const std::string& fingerprint() const { return fingerprint_; }

  [[nodiscard]] std::size_t size() const {
    std::shared_lock lock(*mutex_);
    return docs_.size();
  }

  /// Insert or replace by doc_id. All records are validated before any is
  /// applied, so a bad batch leaves the index unchanged. Returns the batch size.
  std::size_t upsert(std::vector<DocumentRecord> docs) {
    for (const auto& doc : docs) {
      if (doc.doc_id.empty()) throw Error(ErrorCode::validation, "document with empty doc_id");
      if (doc.vector.dims() != dims_) {
        throw Error(ErrorCode::invalid_argument, "document " + doc.doc_id + " has " +
                                                     std::to_string(doc.vector.dims()) + " dims, index has " +
                                                     std::to_string(dims_));
      }
      validate(doc.vector);
      if (l2_norm(doc.vector.values) == 0.0) {
        throw Error(ErrorCode::validation, "document " + doc.doc_id + " has a zero vector");
      }
    }
    std::unique_lock lock(*mutex_);
    const std::size_t n = docs.size();
    for (auto& doc : docs) {
      const double norm = l2_norm(doc.vector.values);
      if (auto it = slot_.find(doc.doc_id); it != slot_.end()) {
        docs_[it->second] = std::move(doc);
        norms_[it->second] = norm;
      } else {
        slot_.emplace(doc.doc_id, docs_.size());
        docs_.push_back(std::move(doc));
        norms_.push_back(norm);
      }
    }
    return n;
  }

  [[nodiscard]] std::optional<DocumentRecord> get(const std::string& doc_id) const {
    std::shared_lock lock(*mutex_);
    auto it = slot_.find(doc_id);
    if (it == slot_.end()) return std::nullopt;
    return docs_[it->second];
  }

  /// Exact top-k by cosine similarity among documents passing the filter.
  [[nodiscard]] std::vector<SearchHit> search_topk(const EmbeddingVector& query, std::size_t k,
                                                   const DocFilter& filter = {}) const {
    if (k == 0) throw Error(ErrorCode::invalid_argument, "k must be at least 1");
    if (query.dims() != dims_) {
      throw Error(ErrorCode::invalid_argument, "query has " + std::to_string(query.dims()) +
                                                   " dims, index has " + std::to_string(dims_));
    }
    double query_sq = 0.0;
    for (float x : query.values) query_sq += static_cast<double>(x) * static_cast<double>(x);
    if (query_sq == 0.0) throw Error(ErrorCode::invalid_argument, "query is a zero vector");
    const double query_norm = std::sqrt(query_sq);

    std::shared_lock lock(*mutex_);
    std::vector<SearchHit> hits;
    for (std::size_t i = 0; i < docs_.size(); ++i) {
      const DocumentRecord& doc = docs_[i];
      if (!filter.matches(doc)) continue;
      double dot = 0.0;
      for (std::size_t d = 0; d < dims_; ++d) {
        dot += static_cast<double>(query.values[d]) * static_cast<double>(doc.vector.values[d]);
      }
      hits.push_back({doc.doc_id, std::clamp(dot / (query_norm * norms_[i]), -1.0, 1.0)});
    }
    const std::size_t keep = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), hit_before);
    hits.resize(keep);
    return hits;
  }

  /// Calls fn for every document in insertion order.
  void for_each(const std::function<void(const DocumentRecord&)>& fn) const {
    std::shared_lock lock(*mutex_);
    for (const auto& doc : docs_) fn(doc);
  }

  void persist(const std::filesystem::path& path) const {
    std::string out;
    out.append(kMagic, sizeof kMagic);
    {
      std::shared_lock lock(*mutex_);
      put_u32(out, kFormatVersion);
      put_u32(out, static_cast<std::uint32_t>(dims_));
      put_u64(out, docs_.size());
      put_str(out, fingerprint_);
      for (const auto& doc : docs_) {
        put_str(out, doc.doc_id);
        out.push_back(static_cast<char>(doc.kind));
        put_str(out, doc.text);
        put_u32(out, static_cast<std::uint32_t>(doc.tags.size()));
        for (const auto& [key, value] : doc.tags) {
          put_str(out, key);
          put_str(out, value);
        }
        out.push_back(static_cast<char>(doc.vector.normalized ? 1 : 0));
        for (float x : doc.vector.values) put_u32(out, std::bit_cast<std::uint32_t>(x));
      }
    }
    if (path.has_parent_path()) {
      std::error_code ec;
      std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw Error(ErrorCode::io, "cannot write " + path.string());
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw Error(ErrorCode::io, "write failed for " + path.string());
  }

  static VectorIndex load(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw Error(ErrorCode::io, "cannot open " + path.string());
    const std::string data((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    Reader in{data, 0, path.string()};

    if (data.size() < sizeof kMagic || std::memcmp(data.data(), kMagic, sizeof kMagic) != 0) {
      throw Error(ErrorCode::parse, path.string() + ": not an index file");
    }
    in.pos = sizeof kMagic;
    const std::uint32_t version = in.u32("header");
    if (version != kFormatVersion) {
      throw Error(ErrorCode::version, path.string() + ": index format version " + std::to_string(version) +
                                          " is not supported (expected " + std::to_string(kFormatVersion) + ")");
    }
    const std::uint32_t dims = in.u32("header");
    const std::uint64_t count = in.u64("header");
    VectorIndex index(dims, in.str("header"));

    std::vector<DocumentRecord> docs;
    for (std::uint64_t r = 0; r < count; ++r) {
      if (in.pos >= data.size()) {
        throw Error(ErrorCode::parse, path.string() + ": truncated, expected " + std::to_string(count) +
                                          " records, read " + std::to_string(r));
      }
      const std::string where = "record " + std::to_string(r);
      DocumentRecord doc;
      doc.doc_id = in.str(where);
      const std::uint8_t kind = in.u8(where);
      if (kind > 2) throw Error(ErrorCode::parse, path.string() + ": " + where + " has unknown kind");
      doc.kind = static_cast<DocKind>(kind);
      doc.text = in.str(where);
      const std::uint32_t n_tags = in.u32(where);
      for (std::uint32_t t = 0; t < n_tags; ++t) {
        std::string key = in.str(where);
        doc.tags[std::move(key)] = in.str(where);
      }
      doc.vector.normalized = (in.u8(where) & 1U) != 0;
      doc.vector.values.resize(dims);
      for (auto& x : doc.vector.values) x = std::bit_cast<float>(in.u32(where));
      docs.push_back(std::move(doc));
    }
    if (in.pos != data.size()) throw Error(ErrorCode::parse, path.string() + ": trailing bytes after records");
    index.upsert(std::move(docs));
    return index;
  }

 private:
  struct Reader {
    const std::string& data;
    std::size_t pos;
    std::string path;

    void need(std::size_t n, const std::string& where) const {
      if (pos + n > data.size()) throw Error(ErrorCode::parse, path + ": truncated in " + where);
    }
    std::uint8_t u8(const std::string& where) {
      need(1, where);
      return static_cast<std::uint8_t>(data[pos++]);
    }
    std::uint32_t u32(const std::string& where) {
      need(4, where);
      std::uint32_t v = 0;
      for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data[pos++])) << (8 * i);
      return v;
    }
    std::uint64_t u64(const std::string& where) {
      need(8, where);
      std::uint64_t v = 0;
      for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data[pos++])) << (8 * i);
      return v;
    }
    std::string str(const std::string& where) {
      const std::uint32_t n = u32(where);
      need(n, where);
      std::string s = data.substr(pos, n);
      pos += n;
      return s;
    }
  };

  static void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  static void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  static void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.append(s);
  }

  std::size_t dims_;
  std::string fingerprint_;
  std::unique_ptr<std::shared_mutex> mutex_;
  std::vector<DocumentRecord> docs_;
  std::vector<double> norms_;
  std::unordered_map<std::string, std::size_t> slot_;
};

}  // namespace fllm
