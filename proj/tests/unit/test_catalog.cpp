#include <random>

#include "catch_amalgamated.hpp"
#include "fllm/catalog.hpp"
#include "support/oracles.hpp"
#include "support/tmpdir.hpp"

using namespace fllm;
using Catch::Matchers::ContainsSubstring;

namespace {

Item make_item(std::string id, std::string title, std::string desc, std::string cat) {
  Item it;
  it.item_id = std::move(id);
  it.title = std::move(title);
  it.description = std::move(desc);
  it.semantic_category = std::move(cat);
  return it;
}

Catalog catalog_of(const std::vector<std::vector<std::string>>& outfits) {
  Catalog c;
  for (std::size_t i = 0; i < outfits.size(); ++i) {
    Outfit o;
    o.outfit_id = "o" + std::to_string(i + 1);
    o.item_ids = outfits[i];
    for (const auto& id : o.item_ids) c.items.emplace(id, make_item(id, "t" + id, "", "tops"));
    c.outfits.push_back(o);
  }
  return c;
}

Error error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected fllm::Error");
  return Error(ErrorCode::io, "unreachable");
}

}  // namespace

TEST_CASE("item_text canonical form", "[catalog]") {
  CHECK(item_text(make_item("1", "Floral-print pants", "", "bottoms")) == "Floral-print pants. category: bottoms.");
  CHECK(item_text(make_item("2", "  Silk   blouse. ", "Soft\ncollar.", "tops")) ==
        "Silk blouse. Soft collar. category: tops.");
  CHECK(item_text(make_item("3", "", "", "shoes")) == "category: shoes.");
  CHECK(item_text(make_item("4", "", "", "")).empty());
  const auto it = make_item("5", "Red dress", "Midi", "dresses");
  CHECK(item_text(it) == item_text(it));
}

TEST_CASE("load the bundled Polyvore-layout sample", "[catalog]") {
  const auto c = load_catalog(FLLM_SAMPLE_DIR, CatalogLayout::polyvore(SplitMode::joint));
  const auto n = count(c);
  CHECK(n.items == 30);
  CHECK(n.outfits == 11);
  CHECK(n.per_split.at(Split::train) == 6);
  CHECK(n.per_split.at(Split::valid) == 2);
  CHECK(n.per_split.at(Split::test) == 3);
  // Blank title falls back to url_name.
  CHECK(c.items.at("601").title == "camel wrap coat");
  CHECK(c.items.at("101").image_ref == "https://example.invalid/img/101.jpg");
  CHECK(c.find_outfit("1001")->item_ids == std::vector<std::string>{"101", "102", "103", "104"});
  CHECK(c.find_outfit("1001")->source_split == Split::train);
  REQUIRE(c.official_fitb.contains(Split::test));
  CHECK(c.official_fitb.at(Split::test).size() == 2);
  CHECK(c.official_fitb.at(Split::test)[0].blank_position == 4);
  // Joint sample shares items across splits; the report says so, informationally.
  const auto report = verify_disjoint(c, c.splits);
  CHECK(report.informational);
  CHECK_FALSE(report.disjoint());
}

TEST_CASE("ingestion errors", "[catalog]") {
  testutil::TempDir dir;
  const auto layout = CatalogLayout::flat();

  SECTION("missing metadata") {
    CHECK(error_of([&] { load_catalog(dir.path(), layout); }).code() == ErrorCode::io);
  }
  SECTION("empty metadata document") {
    dir.write("polyvore_item_metadata.json", "");
    CHECK_THAT(error_of([&] { load_catalog(dir.path(), layout); }).what(), ContainsSubstring("no items"));
    dir.write("polyvore_item_metadata.json", "{}");
    CHECK_THAT(error_of([&] { load_catalog(dir.path(), layout); }).what(), ContainsSubstring("no items"));
  }
  SECTION("malformed JSON reports the byte offset") {
    dir.write("polyvore_item_metadata.json", R"({"1": {"title": "x",, }})");
    const auto e = error_of([&] { load_catalog(dir.path(), layout); });
    CHECK(e.code() == ErrorCode::parse);
    CHECK_THAT(e.what(), ContainsSubstring("byte 21"));
  }
  SECTION("three outfits over seven items with one dangling reference") {
    std::string meta = "{";
    for (int i = 1; i <= 7; ++i) {
      meta += (i > 1 ? "," : "") + std::string("\"") + std::to_string(i) +
              R"(": {"title": "item", "semantic_category": "tops"})";
    }
    meta += "}";
    dir.write("polyvore_item_metadata.json", meta);
    dir.write("train.json", R"([
      {"set_id": "a", "items": [{"item_id": "1", "index": 1}, {"item_id": "2", "index": 2}]},
      {"set_id": "b", "items": [{"item_id": "3", "index": 1}, {"item_id": "4", "index": 2}, {"item_id": "99", "index": 3}]},
      {"set_id": "c", "items": [{"item_id": "5", "index": 1}, {"item_id": "6", "index": 2}, {"item_id": "7", "index": 3}]}])");
    const auto e = error_of([&] { load_catalog(dir.path(), layout); });
    CHECK(e.code() == ErrorCode::validation);
    CHECK_THAT(e.what(), ContainsSubstring("1 dangling"));
    CHECK_THAT(e.what(), ContainsSubstring("99"));
  }
  SECTION("no split files") {
    dir.write("polyvore_item_metadata.json", R"({"1": {"title": "x", "semantic_category": "tops"}})");
    CHECK(error_of([&] { load_catalog(dir.path(), layout); }).code() == ErrorCode::io);
  }
  SECTION("items are ordered by index, ids may be numbers") {
    dir.write("polyvore_item_metadata.json", R"({"1": {"title": "a", "semantic_category": "tops"},
                                                  "2": {"title": "b", "semantic_category": "shoes"},
                                                  "3": {"title": "c", "semantic_category": "bags"}})");
    dir.write("test.json", R"([{"set_id": 77, "items": [{"item_id": 3, "index": 3}, {"item_id": "1", "index": 1},
                                                        {"item_id": "2", "index": 2}]}])");
    const auto c = load_catalog(dir.path(), layout);
    REQUIRE(c.outfits.size() == 1);
    CHECK(c.outfits[0].outfit_id == "77");
    CHECK(c.outfits[0].item_ids == std::vector<std::string>{"1", "2", "3"});
    CHECK(c.splits.test.contains("77"));
  }
}

TEST_CASE("validate_catalog rejects malformed outfits", "[catalog]") {
  auto c = catalog_of({{"a", "b"}, {"c", "d"}});
  CHECK_NOTHROW(validate_catalog(c));
  auto dup = c;
  dup.outfits[1].outfit_id = "o1";
  CHECK_THAT(error_of([&] { validate_catalog(dup); }).what(), ContainsSubstring("duplicate outfit"));
  auto short_outfit = c;
  short_outfit.outfits[0].item_ids = {"a"};
  CHECK_THAT(error_of([&] { validate_catalog(short_outfit); }).what(), ContainsSubstring("fewer than 2"));
  auto repeated = c;
  repeated.outfits[0].item_ids = {"a", "a"};
  CHECK_THAT(error_of([&] { validate_catalog(repeated); }).what(), ContainsSubstring("repeats item a"));
  auto no_cat = c;
  no_cat.items.at("a").semantic_category = " ";
  CHECK_THAT(error_of([&] { validate_catalog(no_cat); }).what(), ContainsSubstring("semantic_category"));

  auto many = c;
  for (int i = 0; i < 12; ++i) many.outfits[0].item_ids.push_back("ghost" + std::to_string(i));
  const std::string msg = error_of([&] { validate_catalog(many); }).what();
  CHECK_THAT(msg, ContainsSubstring("12 dangling"));
  CHECK_THAT(msg, ContainsSubstring("ghost9"));
  CHECK_THAT(msg, !ContainsSubstring("ghost10"));
}

TEST_CASE("save and reload round trip", "[catalog]") {
  testutil::TempDir dir;
  auto c = load_catalog(FLLM_SAMPLE_DIR, CatalogLayout::polyvore(SplitMode::joint));
  save_catalog(c, dir.path(), CatalogLayout::flat());
  const auto back = load_catalog(dir.path(), CatalogLayout::flat());
  CHECK(back.items == c.items);
  CHECK(back.splits == c.splits);
  CHECK(back.official_fitb == c.official_fitb);
  REQUIRE(back.outfits.size() == c.outfits.size());
  for (const auto& o : c.outfits) CHECK(back.find_outfit(o.outfit_id)->item_ids == o.item_ids);
}

TEST_CASE("verify_disjoint", "[catalog]") {
  auto c = catalog_of({{"A", "B"}, {"B", "C"}});
  SplitAssignment s;
  s.mode = SplitMode::disjoint;
  s.train = {"o1"};
  s.test = {"o2"};
  auto r = verify_disjoint(c, s);
  CHECK(r.violations == std::vector<std::string>{"B"});
  CHECK_FALSE(r.informational);

  s.test.clear();
  s.valid = {"o2", "ghost"};
  r = verify_disjoint(c, s);
  CHECK(r.violations == std::vector<std::string>{"B"});
  CHECK(r.unknown_outfits == std::vector<std::string>{"ghost"});

  auto clean = catalog_of({{"A", "B"}, {"C", "D"}});
  SplitAssignment joint;
  joint.train = {"o1"};
  joint.test = {"o2"};
  r = verify_disjoint(clean, joint);
  CHECK(r.disjoint());
  CHECK(r.informational);
}

TEST_CASE("build_disjoint_splits examples", "[catalog]") {
  SECTION("nine disjoint outfits plus one sharing an item with the first") {
    std::vector<std::vector<std::string>> outfits;
    for (int i = 1; i <= 9; ++i) outfits.push_back({"x" + std::to_string(i), "y" + std::to_string(i)});
    outfits.push_back({"x1", "z10"});
    const auto c = catalog_of(outfits);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto s = build_disjoint_splits(c, {0.8, 0.1, 0.1}, seed);
      CHECK(verify_disjoint(c, s).disjoint());
      CHECK(oracle::split_item_overlap(c, s).empty());
      CHECK(s.assigned() + s.dropped.size() == 10);
      // Outfits 1 and 10 either share a split or one of them is dropped.
      const auto s1 = s.split_of("o1"), s10 = s.split_of("o10");
      if (s1 && s10) CHECK(*s1 == *s10);
    }
  }
  SECTION("single outfit") {
    const auto c = catalog_of({{"a", "b"}});
    CHECK(error_of([&] { build_disjoint_splits(c, {1.0, 0.0, 0.0}, 1); }).code() == ErrorCode::invalid_argument);
    const auto s = build_disjoint_splits(c, {0.8, 0.1, 0.1}, 1);
    CHECK(s.assigned() == 1);
    CHECK(s.dropped.empty());
  }
  SECTION("determinism and ratio checks") {
    std::mt19937_64 rng(5);
    const auto c = oracle::random_catalog(rng, 120, 200);
    CHECK(build_disjoint_splits(c, {0.7, 0.15, 0.15}, 9) == build_disjoint_splits(c, {0.7, 0.15, 0.15}, 9));
    CHECK(build_disjoint_splits(c, {0.7, 0.15, 0.15}, 9).mode == SplitMode::disjoint);
    CHECK_THROWS_AS(build_disjoint_splits(c, {0.7, 0.2, 0.2}, 9), Error);
    CHECK_THROWS_AS(build_disjoint_splits(c, {0.7, 0.3 + 1e-8, 0.0}, 9), Error);
    CHECK_NOTHROW(build_disjoint_splits(c, {0.7, 0.2, 0.1 + 1e-10}, 9));
    CHECK_THROWS_AS(build_disjoint_splits(Catalog{}, {0.8, 0.1, 0.1}, 9), Error);
  }
  SECTION("item-free outfits follow the ratios") {
    std::vector<std::vector<std::string>> outfits;
    for (int i = 0; i < 100; ++i) outfits.push_back({"a" + std::to_string(i), "b" + std::to_string(i)});
    const auto s = build_disjoint_splits(catalog_of(outfits), {0.8, 0.1, 0.1}, 3);
    CHECK(s.train.size() == 80);
    CHECK(s.valid.size() == 10);
    CHECK(s.test.size() == 10);
  }
}

TEST_CASE("property: disjoint splits on random catalogs", "[catalog]") {
  std::mt19937_64 rng(GENERATE(1u, 2u, 3u));
  for (int trial = 0; trial < 40; ++trial) {
    const auto c = oracle::random_catalog(rng, 1 + rng() % 150, 2 + rng() % 300);
    const auto s = build_disjoint_splits(c, {0.6, 0.2, 0.2}, rng());
    REQUIRE(verify_disjoint(c, s).disjoint());
    REQUIRE(oracle::split_item_overlap(c, s).empty());
    REQUIRE(s.assigned() + s.dropped.size() == c.outfits.size());
  }
}
