#include <doctest.h>

#include <filesystem>

#include "covo/error.hpp"
#include "covo/random.hpp"
#include "covo/vocabulary.hpp"

using namespace covo;

TEST_CASE("tokenize: empty text gives an empty sequence") {
  const auto v = Vocabulary::from_alphabet(Vocabulary::default_alphabet());
  const auto s = v.tokenize("");
  CHECK(s.empty());
  CHECK(v.detokenize(s.view()).empty());
}

TEST_CASE("tokenize: one token per character") {
  const auto v = Vocabulary::from_alphabet("\nab");
  const auto s = v.tokenize("ab");
  REQUIRE(s.size() == 2);
  CHECK(s.ids[0] == *v.find("a"));
  CHECK(s.ids[1] == *v.find("b"));
  CHECK(v.token(v.pad()) == "<pad>");
  CHECK(v.token(v.eos()) == "<eos>");
  CHECK(v.token(v.newline()) == "\n");
}

TEST_CASE("tokenize: unknown symbol error names the character") {
  const auto v = Vocabulary::from_alphabet("\nab");
  try {
    (void)v.tokenize("abz");
    FAIL("expected UnknownSymbolError");
  } catch (const UnknownSymbolError& e) {
    CHECK(e.symbol() == 'z');
    CHECK(std::string(e.what()).find("'z'") != std::string::npos);
  }
}

TEST_CASE("tokenize: random printable strings round-trip") {
  std::string alphabet = "\n";
  for (char c = 0x20; c < 0x7f; ++c) alphabet += c;
  const auto v = Vocabulary::from_alphabet(alphabet);
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    std::string s;
    const auto len = rng.below(40);
    for (std::uint64_t i = 0; i < len; ++i) s += alphabet[rng.below(alphabet.size())];
    const auto ids = v.tokenize(s);
    REQUIRE(v.detokenize(ids.view()) == s);
    REQUIRE(v.tokenize(s).ids == ids.ids);
  }
}

TEST_CASE("vocabulary rejects duplicates and a missing newline") {
  CHECK_THROWS_AS(Vocabulary::from_alphabet("\naa"), ConfigError);
  CHECK_THROWS_AS(Vocabulary::from_alphabet("ab"), ConfigError);
}

TEST_CASE("vocabulary file round-trip keeps the escaped tokens") {
  const auto v = Vocabulary::from_alphabet(std::string("\n \\abc"));
  const auto path = std::filesystem::temp_directory_path() / "covo_vocab_test.txt";
  v.save(path);
  const auto w = Vocabulary::load(path);
  CHECK(v == w);
  std::filesystem::remove(path);
}
