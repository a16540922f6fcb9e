#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fllm/error.hpp"
#include "fllm/rng.hpp"
#include "fllm/text.hpp"

namespace fllm {

struct EmbeddingVector {
  std::vector<float> values;
  bool normalized = false;

  [[nodiscard]] std::size_t dims() const { return values.size(); }

  bool operator==(const EmbeddingVector&) const = default;
};

inline double l2_norm(std::span<const float> v) {
  double sum = 0.0;
  for (float x : v) sum += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(sum);
}

/// Throws when the vector is empty, holds non-finite entries, or claims to be
/// normalized without unit norm.
inline void validate(const EmbeddingVector& v) {
  if (v.values.empty()) throw Error(ErrorCode::validation, "embedding has zero dimensions");
  for (float x : v.values) {
    if (!std::isfinite(x)) throw Error(ErrorCode::validation, "embedding has a non-finite entry");
  }
  if (v.normalized && std::abs(l2_norm(v.values) - 1.0) > 1e-6) {
    throw Error(ErrorCode::validation, "embedding flagged normalized but norm is not 1");
  }
}

inline EmbeddingVector normalized(EmbeddingVector v) {
  const double norm = l2_norm(v.values);
  if (norm == 0.0) throw Error(ErrorCode::validation, "cannot normalize a zero vector");
  for (float& x : v.values) x = static_cast<float>(x / norm);
  v.normalized = true;
  return v;
}

/// Cosine similarity, computed in double precision.
inline double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::invalid_argument, "dimension mismatch: " + std::to_string(a.size()) + " vs " +
                                                 std::to_string(b.size()));
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    const double y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::invalid_argument, "cosine of a zero vector");
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  return cosine(std::span<const float>(a.values), std::span<const float>(b.values));
}

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) = 0;

  [[nodiscard]] virtual std::size_t dims() const = 0;

  /// Identifies model and configuration; stored in index files so an index is
  /// never queried with vectors from a different embedder.
  [[nodiscard]] virtual std::string fingerprint() const = 0;

  EmbeddingVector embed(const std::string& text) {
    auto out = embed_batch(std::span<const std::string>(&text, 1));
    if (out.size() != 1) throw Error(ErrorCode::backend, "embedding provider returned wrong batch size");
    return std::move(out.front());
  }
};

/// Deterministic stand-in for a sentence transformer.
///
/// Each lower-cased token hashes (with the seed) to a bucket and a positive
/// weight in [0.5, 1.5); the summed vector is L2-normalized. Identical text
/// gives identical vectors, and texts sharing a token always have positive
/// similarity.
class HashingEmbedder final : public EmbeddingProvider {
 public:
  explicit HashingEmbedder(std::size_t dims = 256, std::uint64_t seed = 0) : dims_(dims), seed_(seed) {
    if (dims_ == 0) throw Error(ErrorCode::invalid_argument, "embedding dims must be positive");
  }

  struct TokenSlot {
    std::size_t index;
    float weight;
  };

  [[nodiscard]] TokenSlot slot(std::string_view token) const {
    const std::uint64_t h = splitmix64(fnv1a64(token) ^ splitmix64(seed_));
    const auto index = static_cast<std::size_t>(h % dims_);
    const float weight = 0.5F + static_cast<float>((h >> 40) & 0xFFFFFF) / static_cast<float>(1 << 24);
    return {index, weight};
  }

  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
  }

  [[nodiscard]] EmbeddingVector embed_one(std::string_view text) const {
    const auto tokens = text::tokenize(text);
    if (tokens.empty()) throw Error(ErrorCode::invalid_argument, "cannot embed empty text");
    EmbeddingVector v;
    v.values.assign(dims_, 0.0F);
    for (const auto& token : tokens) {
      const TokenSlot s = slot(token);
      v.values[s.index] += s.weight;
    }
    return normalized(std::move(v));
  }

  [[nodiscard]] std::size_t dims() const override { return dims_; }

  [[nodiscard]] std::string fingerprint() const override {
    return "hashing-v1:dims=" + std::to_string(dims_) + ":seed=" + std::to_string(seed_);
  }

 private:
  std::size_t dims_;
  std::uint64_t seed_;
};

}  // namespace fllm
