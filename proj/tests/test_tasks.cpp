#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "covo/error.hpp"
#include "covo/tasks.hpp"

using namespace covo;

namespace {

const Vocabulary& vocab() {
  static const Vocabulary v = Vocabulary::from_alphabet(Vocabulary::default_alphabet());
  return v;
}

TokenSequence text(std::string_view s, bool eos = true) {
  auto t = vocab().tokenize(s);
  if (eos) t.ids.push_back(vocab().eos());
  return t;
}

StyleSpec two_line_spec() {
  StyleSpec s;
  s.style = "chant";
  s.tone = "calm";
  s.line_count = 2;
  s.min_line_tokens = 3;
  s.max_line_tokens = 12;
  s.lexicon = {"still", "hush"};
  s.newline = vocab().newline();
  return s;
}

}  // namespace

TEST_CASE("instance streams") {
  const auto spec = TaskSpec::poetry_default();
  CHECK_THROWS_AS(generate_task_instances(spec, Split::train, 0, 1, vocab()), ConfigError);
  const auto a = generate_task_instances(spec, Split::train, 50, 7, vocab());
  const auto b = generate_task_instances(spec, Split::train, 50, 7, vocab());
  REQUIRE(a.size() == 50);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].prompt == b[i].prompt);
  CHECK_THROWS_AS(parse_family("sonnet"), ConfigError);
}

TEST_CASE("train and test pools are disjoint with five new styles and tones") {
  const auto spec = TaskSpec::poetry_default();
  const auto train = task_pool(spec, Split::train, vocab());
  const auto test = task_pool(spec, Split::test, vocab());
  CHECK(train.size() == 25);
  CHECK(test.size() == 75);
  std::set<std::string> train_styles, train_tones, test_styles, test_tones, train_ids;
  for (const auto& i : train) {
    train_styles.insert(i.style->style);
    train_tones.insert(i.style->tone);
    train_ids.insert(i.id);
  }
  for (const auto& i : test) {
    CHECK(train_ids.count(i.id) == 0);
    if (!train_styles.count(i.style->style)) test_styles.insert(i.style->style);
    if (!train_tones.count(i.style->tone)) test_tones.insert(i.style->tone);
  }
  CHECK(train_styles.size() == 5);
  CHECK(train_tones.size() == 5);
  CHECK(test_styles.size() == 5);
  CHECK(test_tones.size() == 5);
  CHECK(train[0].prompt == "write a calm ode poem\n");
  CHECK(train[0].description == "calm ode");
}

TEST_CASE("constraint reward") {
  const auto s = two_line_spec();
  CHECK(constraint_reward(text("a still sea\nby the hill"), s, vocab()) == 1.0);
  CHECK(constraint_reward(text("a still sea\nby the hill\n"), s, vocab()) == 1.0);
  CHECK(constraint_reward(TokenSequence{}, s, vocab()) == 0.0);
  CHECK(constraint_reward(text(""), s, vocab()) == 0.0);
  // right shape, lexicon missed
  CHECK(constraint_reward(text("the open sea\nby the hill"), s, vocab()) == doctest::Approx(0.6667).epsilon(1e-4));
  CHECK(constraint_reward(text("the open sea\nby the hill"), s, vocab()) == 2.0 / 3.0);
  // lexicon words match whole words only
  CHECK(constraint_reward(text("stillness\nby the hill"), s, vocab()) == 2.0 / 3.0);
  // three lines, one too long, lexicon hit
  CHECK(constraint_reward(text("hush\nby the long long hill\nsea"), s, vocab()) == 1.0 / 3.0);
  // tokens after eos are ignored
  auto extra = text("a still sea\nby the hill");
  for (TokenId t : vocab().tokenize("\nmore lines here").ids) extra.ids.push_back(t);
  CHECK(constraint_reward(extra, s, vocab()) == 1.0);
  CHECK(well_formed(text("a\nb"), vocab()));
  CHECK_FALSE(well_formed(text("ab"), vocab()));
}

TEST_CASE("arithmetic reward") {
  const auto spec = TaskSpec::arithmetic_default();
  const auto inst = ArithmeticInstance::make(7, 8, '*', spec);
  CHECK(inst.prompt == "what is 7*8?\n");
  CHECK(inst.answer == "56");
  CHECK(arithmetic_reward(text("7*8=56 #### 56"), inst, vocab()) == 1.0);
  CHECK(arithmetic_reward(text("7*8=57 #### 57"), inst, vocab()) == 0.0);
  CHECK(arithmetic_reward(text("7*8=56"), inst, vocab()) == 0.0);
  CHECK(arithmetic_reward(text("#### 5 6"), inst, vocab()) == 0.0);
  CHECK(arithmetic_reward(text("#### 1 #### 56"), inst, vocab()) == 1.0);
  const auto neg = ArithmeticInstance::make(2, 9, '-', spec);
  CHECK(arithmetic_reward(text("2-9=-7 #### -7"), neg, vocab()) == 1.0);
  CHECK(task_pool(spec, Split::train, vocab()).size() == 300);
}

TEST_CASE("rewards are stable under a tokenization round trip") {
  const auto spec = TaskSpec::poetry_default();
  for (const auto& inst : task_pool(spec, Split::test, vocab())) {
    const std::string out = "the " + inst.style->lexicon[0] + " sea\nover the hill";
    const auto once = text(out);
    const auto twice = text(vocab().detokenize(vocab().tokenize(out).view()));
    CHECK(constraint_reward(once, *inst.style, vocab()) == constraint_reward(twice, *inst.style, vocab()));
  }
}

TEST_CASE("corpus records meet their own constraints") {
  const auto spec = TaskSpec::poetry_default();
  const auto recs = make_corpus(spec, 3, 11);
  CHECK(recs.size() == 300);
  std::map<std::string, StyleSpec> styles;
  for (Split sp : {Split::train, Split::test})
    for (const auto& i : task_pool(spec, sp, vocab())) styles[i.description] = *i.style;
  for (const auto& r : recs) CHECK(constraint_reward(text(r.text), styles.at(r.title), vocab()) == 1.0);
  CHECK(make_corpus(spec, 3, 11)[17].text == recs[17].text);

  const auto arith = make_corpus(TaskSpec::arithmetic_default(), 20, 3);
  std::size_t correct = 0;
  for (const auto& r : arith) {
    const auto op_at = r.title.find_first_of("+-*", 1);
    const auto inst = ArithmeticInstance::make(std::stoi(r.title.substr(0, op_at)), std::stoi(r.title.substr(op_at + 1)),
                                               r.title[op_at], TaskSpec::arithmetic_default());
    correct += arithmetic_reward(text(r.text), inst, vocab()) == 1.0;
  }
  const double frac = static_cast<double>(correct) / static_cast<double>(arith.size());
  CHECK(frac > 0.25);
  CHECK(frac < 0.40);
}

TEST_CASE("pretraining sequences carry both directions") {
  const auto spec = TaskSpec::poetry_default();
  const auto seqs = pretraining_sequences(spec, "calm ode", "the sea", vocab());
  REQUIRE(seqs.size() == 2);
  CHECK(vocab().detokenize(seqs[0].view()) == "write a calm ode poem\nthe sea");
  CHECK(seqs[0].ids.back() == vocab().eos());
  CHECK(vocab().detokenize(seqs[1].view()) == "the sea\nit is a calm ode");
}

TEST_CASE("task files round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "covo_test_tasks";
  std::filesystem::create_directories(dir);
  for (const auto& spec : {TaskSpec::poetry_default(), TaskSpec::arithmetic_default()}) {
    spec.save(dir / "t.txt");
    const auto back = TaskSpec::load(dir / "t.txt");
    CHECK(back.prompt_template == spec.prompt_template);
    CHECK(back.reverse_template == spec.reverse_template);
    CHECK(back.value_prefix == spec.value_prefix);
    CHECK(back.value_suffix == spec.value_suffix);
    CHECK(back.styles.size() == spec.styles.size());
    CHECK(back.tones.size() == spec.tones.size());
    CHECK(back.filler == spec.filler);
    CHECK(back.delimiter == spec.delimiter);
  }
  {
    std::ofstream out(dir / "bad.txt");
    out << "family poetry\nrhyme abab\n";
  }
  CHECK_THROWS_AS(TaskSpec::load(dir / "bad.txt"), ConfigError);
  {
    std::ofstream out(dir / "bad2.txt");
    out << "family limerick\n";
  }
  CHECK_THROWS_AS(TaskSpec::load(dir / "bad2.txt"), ConfigError);
}
