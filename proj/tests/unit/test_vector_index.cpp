#include <random>

#include "catch_amalgamated.hpp"
#include "fllm/vector_index.hpp"
#include "support/oracles.hpp"
#include "support/tmpdir.hpp"

using namespace fllm;

namespace {

DocumentRecord doc(std::string id, std::vector<float> v, DocKind kind = DocKind::item,
                   std::map<std::string, std::string> tags = {}) {
  DocumentRecord d;
  d.doc_id = std::move(id);
  d.text = "text of " + d.doc_id;
  d.vector = {std::move(v), false};
  d.kind = kind;
  d.tags = std::move(tags);
  return d;
}

EmbeddingVector q(std::vector<float> v) { return {std::move(v), false}; }

std::vector<std::string> ids(const std::vector<SearchHit>& hits) {
  std::vector<std::string> out;
  for (const auto& h : hits) out.push_back(h.doc_id);
  return out;
}

}  // namespace

TEST_CASE("upsert inserts, replaces and validates atomically", "[vector_index]") {
  VectorIndex index(3, "fp");
  CHECK(index.size() == 0);
  CHECK(index.upsert({doc("a", {1, 0, 0}), doc("b", {0, 1, 0})}) == 2);
  CHECK(index.size() == 2);
  index.upsert({doc("a", {0, 0, 1})});
  CHECK(index.size() == 2);
  CHECK(index.get("a")->vector.values == std::vector<float>{0, 0, 1});
  CHECK_FALSE(index.get("zzz"));

  CHECK_THROWS_AS(index.upsert({doc("c", {1, 1, 1}), doc("d", {1, 1})}), Error);
  CHECK_THROWS_AS(index.upsert({doc("", {1, 1, 1})}), Error);
  CHECK_THROWS_AS(index.upsert({doc("e", {0, 0, 0})}), Error);
  CHECK(index.size() == 2);
  CHECK_FALSE(index.get("c"));
  CHECK_THROWS_AS(VectorIndex(0, "fp"), Error);
}

TEST_CASE("ten thousand documents", "[vector_index]") {
  std::mt19937_64 rng(1);
  VectorIndex index(16, "fp");
  std::vector<DocumentRecord> docs;
  for (int i = 0; i < 10000; ++i) docs.push_back(doc("d" + std::to_string(i), oracle::random_unit(rng, 16)));
  CHECK(index.upsert(docs) == 10000);
  CHECK(index.size() == 10000);
  CHECK(*index.get("d9999") == docs.back());
  CHECK_THROWS_AS(index.upsert({doc("bad", oracle::random_unit(rng, 15))}), Error);
  CHECK(index.size() == 10000);
}

TEST_CASE("search examples", "[vector_index]") {
  VectorIndex index(2, "fp");
  index.upsert({doc("east", {1, 0}), doc("north", {0, 1}, DocKind::knowledge, {{"style", "boho"}}),
                doc("ne", {1, 1}, DocKind::qa, {{"style", "boho"}}), doc("ne2", {2, 2}), doc("west", {-1, 0})});
  const auto hits = index.search_topk(q({1, 0.9F}), 3);
  CHECK(ids(hits) == std::vector<std::string>{"ne", "ne2", "east"});
  CHECK(hits[0].score == hits[1].score);
  CHECK(index.search_topk(q({-1, 0}), 1)[0].score == 1.0);
  CHECK(index.search_topk(q({1, 0}), 100).size() == 5);
  CHECK(index.search_topk(q({1, 0}), 100).back().doc_id == "west");

  DocFilter kinds;
  kinds.kinds = {DocKind::knowledge, DocKind::qa};
  CHECK(ids(index.search_topk(q({1, 0}), 5, kinds)) == std::vector<std::string>{"ne", "north"});
  DocFilter tag;
  tag.tags = {{"style", "boho"}};
  CHECK(index.search_topk(q({1, 0}), 5, tag).size() == 2);
  tag.tags = {{"style", "grunge"}};
  CHECK(index.search_topk(q({1, 0}), 5, tag).empty());

  CHECK_THROWS_AS(index.search_topk(q({1, 0}), 0), Error);
  CHECK_THROWS_AS(index.search_topk(q({1, 0, 0}), 1), Error);
  CHECK_THROWS_AS(index.search_topk(q({0, 0}), 1), Error);
  CHECK(VectorIndex(2, "fp").search_topk(q({1, 0}), 5).empty());
}

TEST_CASE("property: search equals a brute-force scan", "[vector_index]") {
  std::mt19937_64 rng(GENERATE(2u, 3u, 4u));
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t dims = 2 + rng() % 24;
    const std::size_t n = 1 + rng() % 300;
    VectorIndex index(dims, "fp");
    std::vector<oracle::RefDoc> ref;
    std::vector<DocumentRecord> docs;
    for (std::size_t i = 0; i < n; ++i) {
      auto v = oracle::random_unit(rng, dims);
      // Some exact duplicates force ties.
      if (i > 0 && rng() % 10 == 0) v = ref[rng() % ref.size()].v;
      const auto kind = static_cast<DocKind>(rng() % 3);
      ref.push_back({"d" + std::to_string(i), v, kind, {}});
      docs.push_back(doc(ref.back().id, v, kind));
    }
    index.upsert(docs);
    const auto query = oracle::random_unit(rng, dims);
    const std::size_t k = 1 + rng() % 20;
    std::set<DocKind> kinds;
    if (rng() % 2) kinds = {static_cast<DocKind>(rng() % 3)};
    DocFilter filter;
    filter.kinds = kinds;
    const auto got = index.search_topk(q(query), k, filter);
    const auto want = oracle::full_scan(ref, query, k, kinds);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      REQUIRE(got[i].doc_id == want[i].id);
      REQUIRE(got[i].score == Catch::Approx(want[i].score).margin(1e-12));
    }
  }
}

TEST_CASE("persistence", "[vector_index]") {
  testutil::TempDir dir;
  std::mt19937_64 rng(9);
  VectorIndex index(8, "hashing-v1:dims=8:seed=0");
  for (int i = 0; i < 50; ++i) {
    index.upsert({doc("d" + std::to_string(i), oracle::random_unit(rng, 8), static_cast<DocKind>(i % 3),
                      {{"k", std::to_string(i)}, {"note", "multi\nline"}})});
  }
  index.persist(dir / "a.idx");
  const auto back = VectorIndex::load(dir / "a.idx");
  CHECK(back.dims() == 8);
  CHECK(back.fingerprint() == index.fingerprint());
  REQUIRE(back.size() == 50);
  index.for_each([&](const DocumentRecord& d) { CHECK(*back.get(d.doc_id) == d); });
  const auto query = q(oracle::random_unit(rng, 8));
  CHECK(back.search_topk(query, 10) == index.search_topk(query, 10));

  SECTION("empty index round trip") {
    VectorIndex(4, "fp").persist(dir / "empty.idx");
    const auto e = VectorIndex::load(dir / "empty.idx");
    CHECK(e.size() == 0);
    CHECK(e.dims() == 4);
  }
  SECTION("corruption is reported") {
    const auto bytes = testutil::slurp(dir / "a.idx");
    dir.write("trunc.idx", bytes.substr(0, bytes.size() - 5));
    CHECK_THROWS_AS(VectorIndex::load(dir / "trunc.idx"), Error);
    dir.write("half.idx", bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(VectorIndex::load(dir / "half.idx"), Error);
    dir.write("trail.idx", bytes + "x");
    CHECK_THROWS_AS(VectorIndex::load(dir / "trail.idx"), Error);
    dir.write("junk.idx", "not an index at all");
    CHECK_THROWS_AS(VectorIndex::load(dir / "junk.idx"), Error);
    auto future = bytes;
    future[8] = 2;
    dir.write("v2.idx", future);
    try {
      VectorIndex::load(dir / "v2.idx");
      FAIL("expected a version error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::version);
    }
    CHECK_THROWS_AS(VectorIndex::load(dir / "missing.idx"), Error);
  }
}
