#include <doctest.h>

#include <cmath>

#include "covo/covo_score.hpp"
#include "oracles.hpp"
#include "test_models.hpp"

using namespace covo;
using covo::testing::random_model;

namespace {

TokenSequence ids(std::initializer_list<TokenId> l) { return TokenSequence{l, std::nullopt}; }

CovoConfig raw_config() {
  CovoConfig c;
  c.trim_at_eos = false;
  return c;
}

// Context-free model: the final LayerNorm gain is zero, so every row is
// softmax(E b) regardless of the input.
PolicySnapshot<double> context_free_model(std::uint64_t seed) {
  auto m = random_model(3, seed, 4, 1, 12, 1.0);
  MatrixX<double> gain = MatrixX<double>::Zero(1, 4);
  MatrixX<double> bias(1, 4);
  bias << 1.0, -0.5, 0.25, 2.0;
  return m.with_tensor("ln_f.gain", gain).with_tensor("ln_f.bias", bias);
}

}  // namespace

TEST_CASE("build_reverse_input substitutes the single output slot") {
  const auto v = Vocabulary::from_alphabet(std::string("\nabcQ:tsk ") + "\xe2\x86\x92");
  CovoConfig c;
  c.reverse_template = "Q: {out} \xe2\x86\x92 task:";
  const auto y = v.tokenize("abc");
  const auto r = build_reverse_input(y, c, v);
  CHECK(r.ids == v.tokenize("Q: abc \xe2\x86\x92 task:").ids);
  CHECK(v.detokenize(r.view()) == "Q: abc \xe2\x86\x92 task:");

  c.reverse_template = "{out}";
  CHECK(build_reverse_input(y, c, v).ids == y.ids);

  c.reverse_template = "no slot";
  CHECK_THROWS_AS(build_reverse_input(y, c, v), ConfigError);
  c.reverse_template = "{out}{out}";
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("build_reverse_input reproduces the math reverse prompt byte for byte") {
  std::string alphabet = "\n";
  for (char ch = 0x20; ch < 0x7f; ++ch) alphabet += ch;
  const auto v = Vocabulary::from_alphabet(alphabet);
  CovoConfig c;
  c.reverse_template = std::string(kMathReverseTemplate);
  const auto y = v.tokenize("The answer is 4.");
  const auto r = build_reverse_input(y, c, v);
  CHECK(v.detokenize(r.view()) ==
        "Below is a response that appropriately completes a request. Write the instruction that "
        "describes the task.\n\n### Response:\nThe answer is 4.\n\n### Instruction:");
}

TEST_CASE("value component: greedy chain, uniform model, hand-set row") {
  const auto m = random_model(5, 31, 8, 2, 16, 1.2);
  const CovoConfig c = raw_config();
  const auto y = ids({2, 3, 1});
  const auto x = sample_sequence(m, y, SamplerConfig{1.0, 0, 4, true}, 0).tokens;
  CHECK(value_component(m, x, y, c) == 0.0);

  const auto u = m.with_tensor("tok_emb", MatrixX<double>::Zero(5, 8));
  CHECK(std::abs(value_component(u, ids({4, 0}), y, c)) < 1e-15);

  const auto h = covo::testing::positional_two_token_model(false);
  CHECK(value_component(h, ids({0}), ids({1}), c) == doctest::Approx(-0.8473).epsilon(1e-4));
  CHECK(value_component(h, ids({0}), ids({1}), c) ==
        doctest::Approx(std::log(0.3) - std::log(0.7)).epsilon(1e-9));
}

TEST_CASE("originality component: greedy chain, uniform model, hand-set rows") {
  const auto m = random_model(5, 32, 8, 2, 16, 1.2);
  const CovoConfig c = raw_config();
  const auto x = ids({1, 4});
  const auto y = sample_sequence(m, x, SamplerConfig{1.0, 0, 5, true}, 0).tokens;
  CHECK(originality_component(m, x, y, c) == 0.0);

  const auto u = m.with_tensor("tok_emb", MatrixX<double>::Zero(5, 8));
  CHECK(std::abs(originality_component(u, x, ids({0, 0, 3}), c)) < 1e-15);

  const auto h = covo::testing::positional_two_token_model(true);
  const double s_o = originality_component(h, ids({1}), ids({0, 0}), c);
  CHECK(s_o == doctest::Approx(0.4236).epsilon(1e-4));
  CHECK(s_o == doctest::Approx(-(std::log(0.3) - std::log(0.7)) / 2).epsilon(1e-9));
  CHECK_THROWS_AS(originality_component(h, ids({1}), TokenSequence{}, c), DomainError);
}

TEST_CASE("covo_score: defaults, breakdown and the brute-force oracle") {
  const CovoConfig defaults;
  CHECK(defaults.lambda_v == 1.0);
  CHECK(defaults.lambda_o == 1.0);
  CHECK(defaults.max_normalization);

  CovoConfig c = raw_config();
  c.lambda_v = 0.7;
  c.lambda_o = 1.3;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto m = random_model(3, seed, 8, 2, 8, 1.0);
    std::vector<std::vector<TokenId>> seqs;
    for (std::size_t len = 1; len <= 3; ++len) {
      std::vector<TokenId> s(len, 0);
      for (int code = 0; code < static_cast<int>(std::pow(3, len)); ++code) {
        int k = code;
        for (std::size_t i = 0; i < len; ++i, k /= 3) s[i] = static_cast<TokenId>(k % 3);
        seqs.push_back(s);
      }
    }
    for (const auto& x : seqs) {
      for (const auto& y : seqs) {
        const auto b = covo_score(m, TokenSequence{x, std::nullopt}, TokenSequence{y, std::nullopt}, c);
        REQUIRE(std::abs(b.total - covo::testing::enumerated_covo(m, x, y, 0.7, 1.3)) <= 1e-12);
        REQUIRE(std::abs(b.total - (0.7 * b.s_v + 1.3 * b.s_o)) <= 1e-12);
        REQUIRE(b.s_v <= 0.0);
        REQUIRE(b.s_o >= 0.0);
        REQUIRE(b.x_len == x.size());
        REQUIRE(b.y_len == y.size());
      }
    }
  }
}

TEST_CASE("covo_score: a deterministic model scoring its own greedy output is zero") {
  auto m = random_model(3, 4, 4, 0, 12, 1.0);
  MatrixX<double> emb = MatrixX<double>::Zero(3, 4);
  emb(2, 0) = 10.0;
  MatrixX<double> gain = MatrixX<double>::Zero(1, 4), bias = MatrixX<double>::Zero(1, 4);
  bias(0, 0) = 1.0;
  m = m.with_tensor("tok_emb", emb).with_tensor("ln_f.gain", gain).with_tensor("ln_f.bias", bias);
  const auto x = ids({2, 2});
  const auto y = sample_sequence(m, x, SamplerConfig{1.0, 0, 3, true}, 0).tokens;
  CHECK(y.ids == std::vector<TokenId>{2, 2, 2});
  const auto b = covo_score(m, x, y, raw_config());
  CHECK(b.s_v == 0.0);
  CHECK(b.s_o == 0.0);
  CHECK(b.total == 0.0);
}

TEST_CASE("covo_score ignores padding and tokens after eos") {
  auto vocab = std::make_shared<const Vocabulary>(Vocabulary::from_alphabet(Vocabulary::default_alphabet()));
  auto m = PolicySnapshot<double>::initialize(vocab, covo::testing::tiny_config(vocab->size(), 8, 1, 2, 64), 3);
  CovoConfig c;
  c.reverse_template = "{out}\nit is ";
  c.value_target = {"write a ", " poem"};
  const auto prompt = vocab->tokenize("write a dark ode poem\n");
  auto y = vocab->tokenize("the sea");
  y.ids.push_back(vocab->eos());
  const auto base = covo_score(m, prompt, y, c);
  auto padded = y;
  padded.ids.insert(padded.ids.end(), {vocab->pad(), vocab->pad()});
  auto trailing = y;
  for (TokenId t : vocab->tokenize("junk").ids) trailing.ids.push_back(t);
  CHECK(covo_score(m, prompt, padded, c).total == base.total);
  CHECK(covo_score(m, prompt, trailing, c).total == base.total);
  CHECK(base.x_len == std::string("dark ode").size());
  CHECK(base.y_len == y.size());
}

TEST_CASE("property: length normalization under a context-free model") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = context_free_model(seed);
    Rng rng(seed);
    TokenSequence x, y;
    x.ids = {static_cast<TokenId>(rng.below(3))};
    for (int i = 0; i < 5; ++i) y.ids.push_back(static_cast<TokenId>(rng.below(3)));
    const double once = originality_component(m, x, y, raw_config());
    const double twice = originality_component(m, x, concat(y, y), raw_config());
    CHECK(std::abs(once - twice) <= 1e-9);
  }
}

TEST_CASE("property: s_v <= 0 and s_o >= 0 on random draws") {
  Rng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const auto m = random_model(4, static_cast<std::uint64_t>(trial), 8, 1, 12, 1.5);
    TokenSequence x, y;
    for (std::uint64_t i = 0, n = 1 + rng.below(4); i < n; ++i) x.ids.push_back(static_cast<TokenId>(rng.below(4)));
    for (std::uint64_t i = 0, n = 1 + rng.below(5); i < n; ++i) y.ids.push_back(static_cast<TokenId>(rng.below(4)));
    const auto b = covo_score(m, x, y, raw_config());
    REQUIRE(b.s_v <= 0.0);
    REQUIRE(b.s_o >= 0.0);
  }
}

TEST_CASE("length-only normalization is available behind a flag") {
  const auto h = covo::testing::positional_two_token_model(false);
  CovoConfig c = raw_config();
  c.max_normalization = false;
  CHECK(value_component(h, ids({0, 1}), ids({1}), c) ==
        doctest::Approx((std::log(0.3) + std::log(0.7)) / 2).epsilon(1e-9));
}

TEST_CASE("value target selector extracts the task description") {
  const auto v = Vocabulary::from_alphabet(Vocabulary::default_alphabet());
  ValueTargetSelector sel{"write a ", " poem"};
  CHECK(v.detokenize(sel.select(v.tokenize("write a dark ode poem\n"), v).view()) == "dark ode");
  CHECK_THROWS_AS(sel.select(v.tokenize("nothing here"), v), ConfigError);
  ValueTargetSelector all;
  CHECK(all.select(v.tokenize("abc"), v).ids == v.tokenize("abc").ids);
}

TEST_CASE("mi_identity_check") {
  Eigen::MatrixXd indep = Eigen::Vector3d(0.2, 0.3, 0.5) * Eigen::RowVector2d(0.4, 0.6);
  CHECK(mi_identity_check(indep) <= 1e-12);
  Eigen::MatrixXd hand(2, 2);
  hand << 0.4, 0.1, 0.2, 0.3;
  CHECK(mi_identity_check(hand) <= 1e-12);
  // both sides by hand at (0,0): log(0.4 / (0.5 * 0.6))
  const double pmi = std::log(0.4 / (0.5 * 0.6));
  CHECK((std::log(0.4 / 0.6) - std::log(0.5)) == doctest::Approx(pmi));
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    Eigen::MatrixXd j(4, 4);
    for (int a = 0; a < 16; ++a) j(a / 4, a % 4) = 0.01 + rng.uniform();
    j /= j.sum();
    REQUIRE(mi_identity_check(j) <= 1e-12);
  }
  hand(0, 1) = 0.0;
  hand(0, 0) = 0.5;
  CHECK_THROWS_AS(mi_identity_check(hand), DomainError);
}
