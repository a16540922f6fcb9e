#include <random>

#include "catch_amalgamated.hpp"
#include "fllm/embedding.hpp"
#include "support/oracles.hpp"

using namespace fllm;
using Catch::Approx;

namespace {

EmbeddingVector vec(std::vector<float> v) { return {std::move(v), false}; }

}  // namespace

TEST_CASE("cosine examples", "[embedding]") {
  CHECK(cosine(vec({1, 2, 2}), vec({2, 1, 2})) == Approx(8.0 / 9.0).epsilon(1e-12));
  CHECK(cosine(vec({1, 0}), vec({0, 3})) == 0.0);
  CHECK(cosine(vec({1, 1}), vec({-2, -2})) == Approx(-1.0));
  CHECK(cosine(vec({3, 4}), vec({3, 4})) == 1.0);
  CHECK_THROWS_AS(cosine(vec({1, 0}), vec({1, 0, 0})), Error);
  CHECK_THROWS_AS(cosine(vec({0, 0}), vec({1, 0})), Error);
}

TEST_CASE("property: cosine is symmetric and bounded", "[embedding]") {
  std::mt19937_64 rng(44);
  std::normal_distribution<float> n(0.0F, 1.0F);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t dims = 1 + rng() % 64;
    std::vector<float> a(dims), b(dims);
    for (auto& x : a) x = n(rng);
    for (auto& x : b) x = n(rng);
    const double ab = cosine(vec(a), vec(b));
    REQUIRE(ab == cosine(vec(b), vec(a)));
    REQUIRE(ab >= -1.0);
    REQUIRE(ab <= 1.0);
    REQUIRE(ab == Approx(oracle::ref_cosine(a, b)).margin(1e-12));
    REQUIRE(cosine(vec(a), vec(a)) == Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("normalized and validate", "[embedding]") {
  const auto v = normalized(vec({3, 4}));
  CHECK(v.normalized);
  CHECK(v.values[0] == Approx(0.6F));
  CHECK(l2_norm(v.values) == Approx(1.0).margin(1e-7));
  CHECK_THROWS_AS(normalized(vec({0, 0})), Error);
  CHECK_THROWS_AS(validate(vec({})), Error);
  CHECK_THROWS_AS(validate(vec({1, std::numeric_limits<float>::quiet_NaN()})), Error);
  CHECK_THROWS_AS(validate(EmbeddingVector{{1, 1}, true}), Error);
  CHECK_NOTHROW(validate(v));
}

TEST_CASE("hashing embedder matches its formula", "[embedding]") {
  const std::vector<std::string> texts = {"Red dress",
                                          "Floral-print pants. category: bottoms.",
                                          "Café loafers, size 42",
                                          "a a a b",
                                          "UPPER lower 123"};
  for (std::uint64_t seed : {0ULL, 7ULL}) {
    for (std::size_t dims : {8UL, 64UL, 256UL}) {
      HashingEmbedder e(dims, seed);
      for (const auto& t : texts) {
        const auto got = e.embed(t);
        const auto want = oracle::hashing_embed(t, dims, seed);
        REQUIRE(got.dims() == dims);
        CHECK(got.normalized);
        for (std::size_t d = 0; d < dims; ++d) REQUIRE(got.values[d] == Approx(want[d]).margin(1e-6));
      }
    }
  }
}

TEST_CASE("hashing embedder behaviour", "[embedding]") {
  HashingEmbedder e(256);
  CHECK(e.embed("Red Dress") == e.embed("red   dress!"));
  CHECK(e.embed_batch(std::vector<std::string>{"x y", "z"}) ==
        std::vector<EmbeddingVector>{e.embed("x y"), e.embed("z")});
  const double near = cosine(e.embed("red dress"), e.embed("red shoes"));
  const double far = cosine(e.embed("red dress"), e.embed("quantum flux"));
  CHECK(near > 0.0);
  CHECK(near > far);
  CHECK(near == Approx(oracle::cos(oracle::hashing_embed("red dress"), oracle::hashing_embed("red shoes")))
                    .margin(1e-6));
  CHECK(e.fingerprint() != HashingEmbedder(256, 1).fingerprint());
  CHECK(e.fingerprint() != HashingEmbedder(128).fingerprint());
  CHECK(e.embed("red") != HashingEmbedder(256, 1).embed("red"));
  CHECK_THROWS_AS(e.embed(""), Error);
  CHECK_THROWS_AS(e.embed(" ,.; "), Error);
  CHECK_THROWS_AS(HashingEmbedder(0), Error);
}
