#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "covo/error.hpp"
#include "covo/metrics.hpp"
#include "covo/random.hpp"

using namespace covo;

namespace {

TokenSequence ids(std::initializer_list<TokenId> l) { return TokenSequence{l, std::nullopt}; }

// V (1 - (1 - 1/V)^C) written out with pow for small V.
double direct_expected(double v, double c) { return v * (1.0 - std::pow((v - 1.0) / v, c)); }

}  // namespace

TEST_CASE("EAD of a single token is one") {
  const std::vector<TokenSequence> one{ids({3})};
  CHECK(ead(one, 7) == 1.0);
  const auto orders = ead_orders(one, 7);
  CHECK(orders[0].total == 1);
  for (std::size_t n = 1; n < orders.size(); ++n) CHECK(orders[n].total == 0);
}

TEST_CASE("EAD of a a a a with two symbols") {
  const std::vector<TokenSequence> out{ids({0, 0, 0, 0})};
  const auto orders = ead_orders(out, 2);
  CHECK(orders[0].value == doctest::Approx(0.5333).epsilon(1e-4));
  CHECK(orders[0].value == doctest::Approx(1.0 / (2.0 * (1.0 - 0.0625))));
  CHECK(orders[1].value == doctest::Approx(1.0 / direct_expected(4, 3)));
  CHECK(orders[2].value == doctest::Approx(1.0 / direct_expected(8, 2)));
  CHECK(orders[3].value == 1.0);
  CHECK(orders[4].total == 0);
  const double hand = (1.0 / 1.875 + 1.0 / 2.3125 + 1.0 / 1.875 + 1.0) / 4.0;
  CHECK(ead(out, 2) == doctest::Approx(hand).epsilon(1e-12));
}

TEST_CASE("expected distinct count matches the series for large spaces") {
  for (std::size_t c : {2, 5, 9}) {
    const double v = 1e6;
    const double cc = static_cast<double>(c);
    const double series = cc - cc * (cc - 1) / (2 * v) + cc * (cc - 1) * (cc - 2) / (6 * v * v);
    CHECK(std::abs(expected_distinct(1000, 2, c) - series) <= 1e-9 * cc);
  }
  // All-distinct bigrams in a huge space: EAD_2 is one to within 1e-3.
  const std::vector<TokenSequence> out{ids({1, 2, 3, 4, 5, 6, 7, 8, 9, 10})};
  CHECK(std::abs(ead_orders(out, 1000)[1].value - 1.0) < 1e-3);
  // No overflow for long n-grams over a large vocabulary.
  CHECK(expected_distinct(50000, 5, 100) == 100.0);
  CHECK(expected_distinct(3, 1, 4) == doctest::Approx(direct_expected(3, 4)).epsilon(1e-14));
}

TEST_CASE("EAD bounds") {
  // distinct <= C_n bounds EAD_n by C_n / E[distinct]; all-distinct n-grams
  // give at least 1, since E[distinct] <= C_n.
  Rng rng(12);
  for (int t = 0; t < 200; ++t) {
    std::vector<TokenSequence> out(1 + rng.below(3));
    for (auto& s : out)
      for (std::uint64_t i = 0, n = rng.below(12); i < n; ++i) s.ids.push_back(static_cast<TokenId>(rng.below(4)));
    bool any = false;
    for (const auto& s : out) any = any || !s.empty();
    if (!any) {
      CHECK_THROWS_AS(ead(out, 4), DomainError);
      continue;
    }
    for (const auto& o : ead_orders(out, 4)) {
      if (o.total == 0) continue;
      REQUIRE(o.value > 0.0);
      REQUIRE(o.value <= static_cast<double>(o.total) / o.expected + 1e-12);
      if (o.distinct == o.total) REQUIRE(o.value >= 1.0 - 1e-12);
      if (o.total == 1) REQUIRE(o.value == 1.0);
    }
  }
}

TEST_CASE("EAD pools n-grams across outputs") {
  // [a b] [b c] [a]: unigrams 3 distinct of 5, bigrams 2 of 2, V = 4.
  const std::vector<TokenSequence> out{ids({0, 1}), ids({1, 2}), ids({0})};
  const double e1 = 4.0 * (1.0 - 243.0 / 1024.0);
  const double e2 = 16.0 * (1.0 - 225.0 / 256.0);
  CHECK(ead(out, 4) == doctest::Approx((3.0 / e1 + 2.0 / e2) / 2.0).epsilon(1e-12));
}

TEST_CASE("against-pretrained EAD") {
  const auto x = ids({0, 1, 2, 1});
  CHECK(against_pretrained_ead(x, x, 10) == 0.0);
  const auto disjoint = ids({5, 6, 7});
  const std::vector<TokenSequence> single{x};
  CHECK(against_pretrained_ead(x, disjoint, 10) == ead(single, 10));
  // candidate a b c, reference b c d: novel unigram a, bigram a b, trigram a b c.
  const double hand =
      (1.0 / direct_expected(10, 3) + 1.0 / direct_expected(100, 2) + 1.0) / 3.0;
  CHECK(against_pretrained_ead(ids({0, 1, 2}), ids({1, 2, 3}), 10) ==
        doctest::Approx(hand).epsilon(1e-12));
}

TEST_CASE("pairwise cosine diversity") {
  const std::vector<Eigen::VectorXd> same(3, Eigen::Vector2d(0.6, 0.8));
  CHECK(std::abs(pairwise_cosine_diversity(same)) < 1e-15);
  std::vector<Eigen::VectorXd> ortho{Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 1, 0), Eigen::Vector3d(0, 0, 2)};
  CHECK(pairwise_cosine_diversity(ortho) == 1.0);
  const double pi = std::acos(-1.0);
  std::vector<Eigen::VectorXd> angles{Eigen::Vector2d(1, 0), Eigen::Vector2d(std::cos(pi / 3), std::sin(pi / 3)),
                                      Eigen::Vector2d(0, 1)};
  const double hand = 1.0 - (0.5 + 0.0 + std::sqrt(3.0) / 2.0) / 3.0;
  CHECK(pairwise_cosine_diversity(angles) == doctest::Approx(hand).epsilon(1e-12));
  std::vector<Eigen::VectorXd> reversed(angles.rbegin(), angles.rend());
  CHECK(pairwise_cosine_diversity(reversed) == doctest::Approx(pairwise_cosine_diversity(angles)).epsilon(1e-15));
  CHECK_THROWS_AS(pairwise_cosine_diversity(std::span<const Eigen::VectorXd>(angles.data(), 1)), DomainError);
}

TEST_CASE("hashed n-gram embedder") {
  const HashedNgramEmbedder embed(1 << 16);
  CHECK(embed(TokenSequence{}).isZero(0));
  const auto a = ids({1, 2, 3, 4, 5});
  CHECK(embed(a) == embed(a));
  CHECK(std::abs(embed(a).norm() - 1.0) <= 1e-9);
  CHECK(cosine_similarity(embed(a), embed(a)) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(HashedNgramEmbedder(8), ConfigError);

  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    TokenSequence x, y;
    for (int i = 0; i < 50; ++i) {
      x.ids.push_back(static_cast<TokenId>(rng.below(50)));
      y.ids.push_back(static_cast<TokenId>(50 + rng.below(50)));
    }
    REQUIRE(cosine_similarity(embed(x), embed(y)) < 0.05);
  }
}

TEST_CASE("cross-input diversity") {
  const HashedNgramEmbedder embed(1 << 16);
  const std::vector<TokenSequence> same(4, ids({1, 2, 3}));
  CHECK(std::abs(cross_input_diversity(same, 10, embed).cosine) < 1e-12);
  const std::vector<TokenSequence> disjoint{ids({1, 2}), ids({3, 4})};
  const auto d = cross_input_diversity(disjoint, 10, embed);
  CHECK(d.cosine == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.ead == ead(disjoint, 10));
}

TEST_CASE("precomputed embeddings") {
  const auto dir = std::filesystem::temp_directory_path() / "covo_test_embed";
  std::filesystem::create_directories(dir);
  auto vocab = std::make_shared<const Vocabulary>(Vocabulary::from_alphabet("\nab"));
  {
    std::ofstream out(dir / "e.jsonl");
    out << R"({"text": "ab", "embedding": [1, 0]})" << "\n";
    out << R"({"text": "ba", "embedding": [0, 3]})" << "\n";
  }
  const PrecomputedEmbedder embed(dir / "e.jsonl", vocab);
  CHECK(embed.size() == 2);
  const std::vector<TokenSequence> out{vocab->tokenize("ab"), vocab->tokenize("ba")};
  CHECK(pairwise_cosine_diversity(out, embed) == 1.0);
  CHECK_THROWS_AS(embed(vocab->tokenize("aa")), DomainError);
  {
    std::ofstream bad(dir / "bad.jsonl");
    bad << "{\"text\": \"ab\"}\n";
  }
  CHECK_THROWS_AS(PrecomputedEmbedder(dir / "bad.jsonl", vocab), FormatError);
}
