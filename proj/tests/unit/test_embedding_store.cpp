#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "defembed/embedding_store.hpp"
#include "defembed/error.hpp"
#include "doctest.h"

using namespace defembed;

namespace {

EmbeddingStore parse(const std::string& text) {
  std::istringstream in(text);
  return load_embeddings(in, "fixture");
}

std::size_t error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

EmbeddingStore random_store(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  EmbeddingStore store(dim);
  std::vector<float> v(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& x : v) x = normal(rng);
    store.add("w" + std::to_string(i), v);
  }
  return store;
}

// Oracle: score every token independently in long double and sort.
std::vector<std::pair<std::string, long double>> brute_force(const EmbeddingStore& store,
                                                             const std::vector<float>& q) {
  std::vector<std::pair<std::string, long double>> all;
  for (std::size_t i = 0; i < store.size(); ++i) {
    long double dot = 0, nq = 0, nv = 0;
    const auto v = store.vector(i);
    for (std::size_t d = 0; d < q.size(); ++d) {
      dot += static_cast<long double>(q[d]) * v[d];
      nq += static_cast<long double>(q[d]) * q[d];
      nv += static_cast<long double>(v[d]) * v[d];
    }
    all.emplace_back(store.token(i), dot / std::sqrt(nq * nv));
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return all;
}

}  // namespace

TEST_CASE("load_embeddings reads header and rows") {
  const auto store = parse("3 2\ncat 1 0\ndog 0.5 0.5\nfish -1 2e-1\n");
  CHECK(store.size() == 3);
  CHECK(store.dim() == 2);
  CHECK(store.language().empty());
  CHECK(store.vector("fish")[1] == doctest::Approx(0.2));
  CHECK(store.norm(0) == 1.0);

  const auto tagged = parse("1 2 fr\r\nchien 1 1\r\n");
  CHECK(tagged.language() == "fr");
  CHECK(tagged.contains("chien"));
}

TEST_CASE("load_embeddings rejects malformed files with line numbers") {
  CHECK(error_line("3 2\ncat 1 0\ndog 1\nfish 1 1\n") == 3);      // arity
  CHECK(error_line("3 2\ncat 1 0\ndog 1 1\n") == 3);             // too few rows
  CHECK(error_line("1 2\ncat 1 0\ndog 1 1\n") == 3);             // too many rows
  CHECK(error_line("2 2\ncat 1 0\ncat 1 1\n") == 3);             // duplicate
  CHECK(error_line("2 2\ncat 1 0\ndog nan 1\n") == 3);           // non-finite
  CHECK(error_line("2 2\ncat 1 0\ndog 1 inf\n") == 3);
  CHECK(error_line("2 2\ncat 0 0\ndog 1 1\n") == 2);             // zero norm
  CHECK(error_line("2 2\ncat 1 x\ndog 1 1\n") == 2);             // not a number
  CHECK(error_line("two 2\n") == 1);
  CHECK(error_line("") == 1);
}

TEST_CASE("save/load round trip is bit-identical") {
  const auto store = random_store(100, 7, 3);
  std::ostringstream out;
  save_embeddings(out, store);
  const auto again = parse(out.str());
  REQUIRE(again.size() == store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    CHECK(again.token(i) == store.token(i));
    CHECK(std::memcmp(again.vector(i).data(), store.vector(i).data(), store.dim() * sizeof(float)) == 0);
  }
  CHECK(again.fingerprint() == store.fingerprint());
}

TEST_CASE("cosine") {
  const std::vector<float> e1 = {1, 0}, e2 = {0, 1};
  CHECK(cosine(e1, e1) == 1.0);
  CHECK(cosine(e1, e2) == 0.0);
  const std::vector<float> u = {1, 2, 3}, v = {4, 5, 6};
  // Closed form: 32 / (sqrt(14) sqrt(77)).
  CHECK(cosine(u, v) == doctest::Approx(32.0 / (std::sqrt(14.0) * std::sqrt(77.0))).epsilon(1e-12));
  CHECK(cosine(u, v) == doctest::Approx(0.974632).epsilon(1e-6));
  const std::vector<float> zero = {0, 0};
  CHECK_THROWS_AS(cosine(zero, e1), Error);
  CHECK_THROWS_AS(cosine(u, e1), Error);
}

TEST_CASE("cosine is scale invariant") {
  std::mt19937 rng(5);
  std::normal_distribution<float> normal;
  std::uniform_real_distribution<float> scale(0.01f, 100.0f);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<float> u(8), v(8);
    for (auto& x : u) x = normal(rng);
    for (auto& x : v) x = normal(rng);
    const float a = scale(rng), b = scale(rng);
    std::vector<float> au = u, bv = v;
    for (auto& x : au) x *= a;
    for (auto& x : bv) x *= b;
    CHECK(std::abs(cosine(au, bv) - cosine(u, v)) < 1e-6);
  }
}

TEST_CASE("nearest_neighbors") {
  const auto store = parse("5 2\ndog 1 0.1\ncat 0.9 0.3\nfish -1 0.2\nbird 0.1 1\nmouse 0.7 0.7\n");

  SUBCASE("self query ranks first") {
    const auto result = nearest_neighbors(store, store.vector("dog"), 1);
    REQUIRE(result.candidates.size() == 1);
    CHECK(result.candidates[0].token == "dog");
    CHECK(result.candidates[0].score == doctest::Approx(1.0));
  }
  SUBCASE("top-3 matches an exhaustive scan") {
    const std::vector<float> q = {0.8f, 0.4f};
    const auto result = nearest_neighbors(store, q, 3);
    const auto oracle = brute_force(store, q);
    REQUIRE(result.candidates.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(result.candidates[i].token == oracle[i].first);
      CHECK(result.candidates[i].score == doctest::Approx(static_cast<double>(oracle[i].second)).epsilon(1e-12));
    }
  }
  SUBCASE("filter restricts candidates") {
    const auto result = nearest_neighbors(store, store.vector("dog"), 10,
                                          [](std::string_view t) { return t.size() == 5; });
    REQUIRE(result.candidates.size() == 1);
    CHECK(result.candidates[0].token == "mouse");
  }
  SUBCASE("k beyond the vocabulary returns everything") {
    CHECK(nearest_neighbors(store, store.vector("cat"), 100).candidates.size() == 5);
  }
  SUBCASE("bad queries") {
    const std::vector<float> zero = {0, 0};
    CHECK_THROWS_AS(nearest_neighbors(store, zero, 3), Error);
    CHECK_THROWS_AS(nearest_neighbors(store, store.vector("cat"), 0), Error);
    const std::vector<float> wrong = {1, 2, 3};
    CHECK_THROWS_AS(nearest_neighbors(store, wrong, 3), Error);
  }
}

TEST_CASE("ties are broken lexicographically") {
  const auto store = parse("4 2\nzeta 1 0\nalpha 2 0\nmid 0 1\nbeta 3 0\n");
  const std::vector<float> q = {1, 0};
  const auto result = nearest_neighbors(store, q, 4);
  CHECK(result.candidates[0].token == "alpha");
  CHECK(result.candidates[1].token == "beta");
  CHECK(result.candidates[2].token == "zeta");
  CHECK(rank_of(store, q, "alpha") == 1);
  CHECK(rank_of(store, q, "beta") == 2);
  CHECK(rank_of(store, q, "zeta") == 3);
  CHECK(rank_of(store, store.vector("zeta"), "zeta") == 3);  // identical directions with earlier tokens
  CHECK_THROWS_AS(rank_of(store, q, "omega"), Error);
}

TEST_CASE("rank_of agrees with the position in a full scan") {
  const auto store = random_store(10, 4, 9);
  std::mt19937 rng(1);
  std::normal_distribution<float> normal;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<float> q(4);
    for (auto& x : q) x = normal(rng);
    const auto oracle = brute_force(store, q);
    const auto full = nearest_neighbors(store, q, store.size());
    for (std::size_t pos = 0; pos < oracle.size(); ++pos) {
      CHECK(rank_of(store, q, oracle[pos].first) == pos + 1);
      CHECK(full.candidates[pos].token == oracle[pos].first);
    }
  }
}

TEST_CASE("results do not depend on table order") {
  const auto forward = parse("4 2\na 1 0\nb 1 0\nc 0.5 0.5\nd -1 0\n");
  const auto backward = parse("4 2\nd -1 0\nc 0.5 0.5\nb 1 0\na 1 0\n");
  const std::vector<float> q = {1, 0.2f};
  CHECK(nearest_neighbors(forward, q, 4).candidates == nearest_neighbors(backward, q, 4).candidates);
}

TEST_CASE("add rejects invalid vectors") {
  EmbeddingStore store(2);
  const std::vector<float> ok = {1, 2}, zero = {0, 0}, nan = {std::nanf(""), 1}, short_v = {1};
  store.add("a", ok);
  CHECK_THROWS_AS(store.add("a", ok), Error);
  CHECK_THROWS_AS(store.add("b", zero), Error);
  CHECK_THROWS_AS(store.add("c", nan), Error);
  CHECK_THROWS_AS(store.add("d", short_v), Error);
  CHECK_THROWS_AS(EmbeddingStore(0), Error);
}
