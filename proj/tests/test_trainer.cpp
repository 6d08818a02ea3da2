#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "covo/error.hpp"
#include "covo/evaluation.hpp"
#include "covo/run_config.hpp"
#include "covo/trainer.hpp"

using namespace covo;

namespace {

std::shared_ptr<const Vocabulary> vocab() {
  static const auto v =
      std::make_shared<const Vocabulary>(Vocabulary::from_alphabet(Vocabulary::default_alphabet()));
  return v;
}

Policy small_policy(std::uint64_t seed = 3) {
  ModelConfig c;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.context = 96;
  return Policy::initialize(vocab(), c, seed);
}

TrainerConfig small_trainer() {
  TrainerConfig t;
  t.total_batches = 2;
  t.batch_size = 2;
  t.grad_accum = 1;
  t.generations = 3;
  t.sampler = SamplerConfig{1.0, 0, 6, false};
  t.lr = 1e-2;
  t.seed = 5;
  return t;
}

std::vector<TaskInstance> some_prompts(std::size_t n) {
  return generate_task_instances(TaskSpec::poetry_default(), Split::train, n, 9, *vocab());
}

}  // namespace

TEST_CASE("zero batches leave the policy untouched") {
  const Policy p = small_policy();
  TrainerConfig t = small_trainer();
  t.total_batches = 0;
  const TrainResult r = train(p, p, TaskSpec::poetry_default(), t);
  CHECK(r.metrics.empty());
  CHECK_FALSE(r.aborted);
  CHECK(r.policy.parameters() == p.parameters());
}

TEST_CASE("equal rewards without KL give a zero update") {
  const Policy p = small_policy();
  TrainerConfig t = small_trainer();
  t.w_covo = 0.0;
  t.w_ext = 0.0;
  const TrainResult r = train(p, p, TaskSpec::poetry_default(), t);
  REQUIRE(r.metrics.size() == 2);
  CHECK((r.policy.parameters() - p.parameters()).cwiseAbs().maxCoeff() <= 1e-7f);
  CHECK(r.metrics[0].grad_norm == doctest::Approx(0.0));
}

TEST_CASE("training is reproducible bit for bit") {
  const Policy p = small_policy();
  const TrainerConfig t = small_trainer();
  const TrainResult a = train(p, p, TaskSpec::poetry_default(), t);
  const TrainResult b = train(p, p, TaskSpec::poetry_default(), t);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) CHECK(to_json_line(a.metrics[i]) == to_json_line(b.metrics[i]));
  CHECK(a.policy.parameters() == b.policy.parameters());
  CHECK(a.policy.parameters() != p.parameters());
}

TEST_CASE("first step has zero KL to the reference") {
  const Policy p = small_policy();
  TrainerConfig t = small_trainer();
  t.total_batches = 1;
  const TrainResult r = train(p, p, TaskSpec::poetry_default(), t);
  REQUIRE(r.metrics.size() == 1);
  CHECK(r.metrics[0].mean_kl == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(r.metrics[0].clip_fraction == 0.0);
  CHECK(r.metrics[0].mean_length <= 6.0);
}

TEST_CASE("gradient accumulation matches one large batch") {
  const Policy p = small_policy();
  const TaskSpec spec = TaskSpec::poetry_default();
  const auto prompts = some_prompts(4);
  TrainerConfig big = small_trainer();
  big.batch_size = 4;
  big.grad_accum = 1;
  TrainerConfig split = big;
  split.batch_size = 2;
  split.grad_accum = 2;
  Adam<float> oa(big.adam), ob(split.adam);
  const auto a = grpo_step(p, p, prompts, spec, big, oa, 0);
  const auto b = grpo_step(p, p, prompts, spec, split, ob, 0);
  CHECK(to_json_line(a.metrics).substr(0, 60) == to_json_line(b.metrics).substr(0, 60));
  CHECK((a.policy.parameters() - b.policy.parameters()).cwiseAbs().maxCoeff() < 1e-5f);
}

TEST_CASE("a diverging run aborts and keeps the last good snapshot") {
  const Policy p = small_policy();
  TrainerConfig t = small_trainer();
  t.total_batches = 6;
  t.lr = 1e36;
  t.adam.max_grad_norm = 0.0;
  std::vector<VectorX<float>> seen;
  const TrainResult r = train(p, p, TaskSpec::poetry_default(), t,
                              [&](const StepMetrics&, const Policy& q) { seen.push_back(q.parameters()); });
  REQUIRE(r.aborted);
  CHECK_FALSE(r.abort_reason.empty());
  CHECK(r.metrics.size() < 6);
  CHECK(r.policy.parameters().allFinite());
  if (!seen.empty()) CHECK(r.policy.parameters() == seen.back());
}

TEST_CASE("step metrics serialize in a fixed key order") {
  StepMetrics m;
  m.step = 3;
  const std::string s = to_json_line(m);
  CHECK(s.find("\"step\":3") == 1);
  CHECK(s.find("mean_reward") < s.find("mean_s_v"));
  CHECK(s.find("mean_kl") < s.find("clip_fraction"));
  CHECK(s.find("clip_fraction") < s.find("overflow_count"));
}

TEST_CASE("generation length is clamped to the context window") {
  const Policy p = small_policy();
  const TaskSpec spec = TaskSpec::poetry_default();
  const TaskInstance inst = some_prompts(1)[0];
  const std::size_t n = effective_max_new_tokens(p, spec, inst, 1000);
  CHECK(n < 96);
  CHECK(n > 0);
  CHECK(effective_max_new_tokens(p, spec, inst, 4) == 4);
}

TEST_CASE("invalid trainer settings are rejected") {
  TrainerConfig t = small_trainer();
  t.generations = 1;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = small_trainer();
  t.sampler.greedy = true;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = small_trainer();
  t.beta = -1.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("presets set the reward weights and KL") {
  auto w = preset_weights("covo", 0.05, 1.0, 1.0);
  CHECK(w.beta == 0.0);
  CHECK(w.w_covo == 1.0);
  CHECK(w.w_ext == 0.0);
  w = preset_weights("covo-kl", 0.05, 1.0, 1.0);
  CHECK(w.beta == 0.05);
  w = preset_weights("ext", 0.05, 1.0, 1.0);
  CHECK(w.w_covo == 0.0);
  CHECK(w.w_ext == 1.0);
  w = preset_weights("covo-ext-kl", 0.05, 1.0, 1.0);
  CHECK(w.beta == 0.05);
  CHECK(w.w_covo == 1.0);
  CHECK(w.w_ext == 1.0);
  CHECK_THROWS_AS(preset_weights("grpo", 0.05, 1.0, 1.0), ConfigError);
}

TEST_CASE("run config reads table keys") {
  const auto path = std::filesystem::temp_directory_path() / "covo_test_run.cfg";
  std::ofstream(path) << "# poetry\n"
                         "Total batches = 7\n"
                         "Batch size = 2\n"
                         "Gradient accumulation steps = 3\n"
                         "Max new tokens = 40\n"
                         "Top-k = 5\n"
                         "Learning rate = 2e-5\n"
                         "Max gradient normalization = 100.\n"
                         "Scale rewards = False\n"
                         "beta = 0.1\n"
                         "Number of generations G = 6\n"
                         "Reward for correct answer = +1.\n"
                         "preset = covo-ext-kl\n"
                         "seed = 11\n";
  const RunConfig c = RunConfig::load(path);
  const TrainerConfig t = c.trainer_config(25);
  CHECK(t.total_batches == 7);
  CHECK(t.batch_size == 2);
  CHECK(t.grad_accum == 3);
  CHECK(t.sampler.max_new_tokens == 40);
  CHECK(t.sampler.top_k == 5);
  CHECK(t.lr == 2e-5);
  CHECK(t.adam.max_grad_norm == 100.0);
  CHECK_FALSE(t.scale_rewards);
  CHECK(t.beta == 0.1);
  CHECK(t.generations == 6);
  CHECK(t.w_ext == 1.0);
  CHECK(t.seed == 11);

  // The dump loads back to the same configuration.
  std::ofstream(path) << c.dump();
  CHECK(RunConfig::load(path).dump() == c.dump());
  std::filesystem::remove(path);
}

TEST_CASE("epochs convert to batches over the training pool") {
  RunConfig c;
  c.set("Total epochs", "2");
  c.set("Batch size", "4");
  c.set("Gradient accumulation steps", "2");
  CHECK(c.trainer_config(25).total_batches == 7);
}

TEST_CASE("bad config entries are config errors") {
  RunConfig c;
  CHECK_THROWS_AS(c.set("Total batchez", "3"), ConfigError);
  CHECK_THROWS_AS(c.set("Total batches", "-3"), ConfigError);
  CHECK_THROWS_AS(c.set("Learning rate", "fast"), ConfigError);
  CHECK_THROWS_AS(c.set("Scale rewards", "maybe"), ConfigError);
  CHECK_THROWS_AS(c.set("LoRA rank", "16"), ConfigError);
  c.set("Optimizer", "SGD");
  CHECK_THROWS_AS(c.validate(), ConfigError);
  RunConfig d;
  d.preset = "nope";
  CHECK_THROWS_AS(d.validate(), ConfigError);
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/covo.cfg"), ConfigError);
}

TEST_CASE("the reference compared with itself has no against-pretrained diversity") {
  const Policy p = small_policy();
  EvalConfig e;
  e.seeds = {1, 42};
  e.sampler = SamplerConfig{1.0, 0, 12, true};
  e.max_prompts = 3;
  const EvalReport r = evaluate(p, p, TaskSpec::poetry_default(), e);
  REQUIRE(r.rows.size() == 6);
  for (const auto& row : r.rows) {
    CHECK(row.output == row.reference_output);
    CHECK(row.against_ead == 0.0);
    CHECK(row.against_cosine == doctest::Approx(0.0).epsilon(1e-12));
  }
  CHECK(r.against_ead.mean == 0.0);
}

TEST_CASE("evaluation reports corpus overlap when given an index") {
  const Policy p = small_policy();
  std::vector<CorpusDocument> docs;
  for (const auto& rec : make_corpus(TaskSpec::poetry_default(), 1, 1)) {
    docs.push_back({rec.id, rec.title, rec.text, vocab()->tokenize(rec.text)});
  }
  const CorpusIndex index = CorpusIndex::build(docs, vocab()->size());
  EvalConfig e;
  e.seeds = {1};
  e.sampler = SamplerConfig{1.0, 50, 10, false};
  e.max_prompts = 2;
  const EvalReport r = evaluate(p, p, TaskSpec::poetry_default(), e, &index);
  REQUIRE(r.tlcs.has_value());
  CHECK(r.tlcs->rows.size() == 2);
  for (const auto& row : r.rows) REQUIRE(row.lcs.has_value());
  CHECK(summary_json(r).find("tlcs") != std::string::npos);
}
