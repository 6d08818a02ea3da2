#include "covo/commands.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "covo/checkpoint.hpp"
#include "covo/error.hpp"

namespace covo {

namespace {

namespace fs = std::filesystem;

void prepare_out(const RunConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out);
  std::ofstream(cfg.out / "config.txt") << cfg.dump();
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  return f;
}

Policy load_reference(const RunConfig& cfg) {
  if (cfg.reference.empty()) throw ConfigError("reference checkpoint is not set");
  return load_checkpoint<float>(cfg.reference);
}

// The policy checkpoint, falling back to the reference.
Policy load_policy(const RunConfig& cfg) {
  if (!cfg.policy.empty()) return load_checkpoint<float>(cfg.policy);
  return load_reference(cfg);
}

IngestResult ingest_checked(const RunConfig& cfg, const Vocabulary& vocab) {
  if (cfg.corpus.empty()) throw ConfigError("corpus is not set");
  IngestResult res = ingest_corpus(cfg.corpus, cfg.ingest, vocab);
  if (res.documents.empty()) {
    throw DomainError("corpus " + cfg.corpus.string() + " has no usable documents after filtering");
  }
  return res;
}

std::vector<TaskInstance> prompts_for(const RunConfig& cfg, const TaskSpec& spec, const Vocabulary& vocab) {
  if (!cfg.prompt.empty()) return {TaskInstance{"custom", "", cfg.prompt, std::nullopt, std::nullopt}};
  auto pool = task_pool(spec, cfg.eval_config().split, vocab);
  if (cfg.eval_max_prompts > 0 && pool.size() > cfg.eval_max_prompts) pool.resize(cfg.eval_max_prompts);
  return pool;
}

}  // namespace

std::shared_ptr<const Vocabulary> make_vocabulary(const RunConfig& cfg) {
  return std::make_shared<const Vocabulary>(
      Vocabulary::from_alphabet(cfg.alphabet.empty() ? Vocabulary::default_alphabet() : cfg.alphabet));
}

void run_make_corpus(const RunConfig& cfg) {
  prepare_out(cfg);
  if (cfg.corpus_per_item == 0) throw ConfigError("corpus_per_item must be positive");
  write_corpus(make_corpus(cfg.task_spec(), cfg.corpus_per_item, cfg.seed), cfg.out / "corpus.jsonl");
}

void run_ingest(const RunConfig& cfg) {
  prepare_out(cfg);
  const auto vocab = make_vocabulary(cfg);
  const IngestResult res = ingest_checked(cfg, *vocab);
  CorpusIndex::build(res.documents, vocab->size()).save(cfg.out / "corpus.idx");
  nlohmann::ordered_json j;
  j["records"] = res.report.records;
  j["kept"] = res.report.kept;
  j["malformed"] = res.report.malformed;
  j["unrepresentable"] = res.report.unrepresentable;
  j["filtered"] = res.report.filtered;
  j["duplicates"] = res.report.duplicates;
  j["warnings"] = res.report.warnings;
  open_out(cfg.out / "ingest_report.json") << j.dump(2) << "\n";
}

void run_pretrain(const RunConfig& cfg) {
  prepare_out(cfg);
  const auto vocab = make_vocabulary(cfg);
  const TaskSpec spec = cfg.task_spec();
  const IngestResult res = ingest_checked(cfg, *vocab);
  std::vector<TokenSequence> sequences;
  for (const auto& d : res.documents) {
    for (auto& s : pretraining_sequences(spec, d.title, d.text, *vocab)) sequences.push_back(std::move(s));
  }
  const Policy init = Policy::initialize(vocab, cfg.model_config(vocab->size()), cfg.seed);
  auto log = open_out(cfg.out / "pretrain_log.jsonl");
  const PretrainResult r = pretrain(init, sequences, cfg.pretrain_config(), [&](std::size_t step, double loss) {
    nlohmann::ordered_json j;
    j["step"] = step;
    j["loss"] = loss;
    log << j.dump() << "\n";
    if (!std::isfinite(loss)) throw NumericError("non-finite pretraining loss at step " + std::to_string(step));
  });
  save_checkpoint(r.model, cfg.out / "checkpoint");
}

void run_train(const RunConfig& cfg) {
  prepare_out(cfg);
  const Policy ref = load_reference(cfg);
  const Policy policy = load_policy(cfg);
  if (!(policy.vocabulary() == ref.vocabulary())) throw ConfigError("policy and reference vocabularies differ");
  const TaskSpec spec = cfg.task_spec();
  const TrainerConfig tc = cfg.trainer_config(task_pool(spec, Split::train, ref.vocabulary()).size());
  auto log = open_out(cfg.out / "metrics.jsonl");
  const TrainResult r = train(policy, ref, spec, tc, [&](const StepMetrics& m, const Policy&) {
    log << to_json_line(m) << "\n" << std::flush;
  });
  save_checkpoint(r.policy, cfg.out / "checkpoint");
  if (r.aborted) throw NumericError(r.abort_reason + "; saved the last good policy");
}

void run_generate(const RunConfig& cfg) {
  prepare_out(cfg);
  const Policy policy = load_policy(cfg);
  const Vocabulary& vocab = policy.vocabulary();
  const TaskSpec spec = cfg.task_spec();
  auto out = open_out(cfg.out / "generations.jsonl");
  for (std::uint64_t seed : cfg.eval_seeds) {
    const auto prompts = prompts_for(cfg, spec, vocab);
    for (std::size_t pi = 0; pi < prompts.size(); ++pi) {
      const TaskInstance& inst = prompts[pi];
      SamplerConfig sampler = cfg.generation_sampler();
      sampler.max_new_tokens = effective_max_new_tokens(policy, spec, inst, sampler.max_new_tokens);
      const TokenSequence prompt = vocab.tokenize(inst.prompt);
      const SampledSequence s = sample_sequence(policy, prompt, sampler, derive_seed(seed, {pi}));
      nlohmann::ordered_json j;
      j["prompt_id"] = inst.id;
      j["seed"] = seed;
      j["prompt"] = inst.prompt;
      j["output"] = vocab.detokenize(strip_generation(s.tokens, vocab).view());
      j["overflow"] = s.overflow;
      if (inst.style || inst.arithmetic) j["extrinsic"] = extrinsic_reward(s.tokens, inst, spec, vocab);
      out << j.dump() << "\n";
    }
  }
}

void run_score(const RunConfig& cfg) {
  prepare_out(cfg);
  if (cfg.input.empty()) throw ConfigError("input is not set");
  std::ifstream in(cfg.input);
  if (!in) throw ConfigError("cannot read input " + cfg.input.string());
  const Policy ref = load_reference(cfg);
  const Vocabulary& vocab = ref.vocabulary();
  CovoConfig covo = cfg.task_spec().covo_config();
  covo.lambda_v = cfg.lambda_v;
  covo.lambda_o = cfg.lambda_o;
  auto out = open_out(cfg.out / "scores.jsonl");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
      if (!rec.at("prompt").is_string() || !rec.at("output").is_string()) throw FormatError("not a string");
    } catch (const std::exception&) {
      throw FormatError(cfg.input.string() + ":" + std::to_string(lineno) +
                        ": expected a JSON object with string fields prompt and output");
    }
    const TokenSequence prompt = vocab.tokenize(rec["prompt"].get<std::string>());
    const TokenSequence output = vocab.tokenize(rec["output"].get<std::string>());
    const CovoBreakdown b = covo_score(ref, prompt, output, covo);
    nlohmann::ordered_json j;
    j["prompt_id"] = rec.value("prompt_id", std::to_string(lineno));
    if (rec.contains("seed")) j["seed"] = rec["seed"];
    j["s_v"] = b.s_v;
    j["s_o"] = b.s_o;
    j["covo"] = b.total;
    j["x_len"] = b.x_len;
    j["y_len"] = b.y_len;
    out << j.dump() << "\n";
  }
}

void run_eval(const RunConfig& cfg) {
  prepare_out(cfg);
  const Policy ref = load_reference(cfg);
  const Policy policy = load_policy(cfg);
  std::optional<CorpusIndex> index;
  if (!cfg.index.empty()) {
    index = CorpusIndex::load(cfg.index);
  } else if (!cfg.corpus.empty()) {
    index = CorpusIndex::build(ingest_checked(cfg, ref.vocabulary()).documents, ref.vocabulary().size());
  }
  const EvalReport r = evaluate(policy, ref, cfg.task_spec(), cfg.eval_config(), index ? &*index : nullptr);
  auto rows = open_out(cfg.out / "eval_rows.jsonl");
  for (const auto& row : r.rows) rows << row_json(row) << "\n";
  open_out(cfg.out / "eval_summary.txt") << summary_text(r);
  open_out(cfg.out / "eval_summary.json") << summary_json(r) << "\n";
}

}  // namespace covo
