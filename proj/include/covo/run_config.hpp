#ifndef COVO_RUN_CONFIG_HPP_
#define COVO_RUN_CONFIG_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "covo/corpus.hpp"
#include "covo/evaluation.hpp"
#include "covo/trainer.hpp"

namespace covo {

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"covo", "covo-kl", "ext", "ext-kl", "covo-ext", "covo-ext-kl"};
  return names;
}

// Everything a command reads. Training keys carry the names of the rows of
// the hyperparameter tables; the rest are snake_case.
struct RunConfig {
  // training table
  std::size_t total_batches = 100;
  std::optional<double> total_epochs;
  std::size_t batch_size = 4;
  std::size_t grad_accum = 8;
  std::size_t max_new_tokens = 256;
  double temperature = 1.0;
  std::size_t top_k = 0;
  std::string optimizer = "Adam";
  double learning_rate = 1e-5;
  double max_grad_norm = 100.0;
  std::size_t training_iterations = 1;
  bool scale_rewards = true;
  double beta = 0.05;  // used by the -kl presets
  std::size_t generations = 4;
  double reward_correct = 1.0;

  // reward and surrogate
  double lambda_v = 1.0;
  double lambda_o = 1.0;
  double covo_weight = 1.0;
  double clip_epsilon = 0.2;
  std::string preset = "covo";

  // run
  std::uint64_t seed = 1;
  std::string task = "poetry";
  std::filesystem::path task_file;
  std::filesystem::path corpus;
  std::filesystem::path reference;
  std::filesystem::path policy;
  std::filesystem::path index;
  std::filesystem::path input;
  std::filesystem::path out = "out";

  // model
  std::string alphabet;  // empty: the default alphabet
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t context = 128;
  std::size_t d_ff = 0;

  // pretraining
  std::size_t pretrain_steps = 500;
  std::size_t pretrain_batch_size = 16;
  double pretrain_learning_rate = 3e-3;
  std::size_t corpus_per_item = 4;

  // evaluation and generation
  std::vector<std::uint64_t> eval_seeds{1, 42, 121};
  std::string eval_split = "test";
  bool eval_greedy = false;
  double eval_temperature = 1.0;
  std::size_t eval_top_k = 50;
  std::size_t eval_max_prompts = 0;
  std::size_t embed_dimension = std::size_t{1} << 16;
  std::filesystem::path embedding_file;
  std::string prompt;

  // ingestion
  IngestRules ingest;

  // Parses `key = value` lines; '#' starts a comment line.
  static RunConfig load(const std::filesystem::path& path);
  // Applies one `key = value` assignment.
  void set(const std::string& key, const std::string& value);
  void validate() const;
  // Every key with its effective value, in a fixed order.
  std::string dump() const;

  TaskSpec task_spec() const;
  ModelConfig model_config(std::size_t vocab_size) const;
  PretrainConfig pretrain_config() const;
  // Training settings with the preset applied.
  TrainerConfig trainer_config(std::size_t train_pool_size) const;
  EvalConfig eval_config() const;
  SamplerConfig generation_sampler() const;
};

struct PresetWeights {
  double beta = 0.0;
  double w_covo = 0.0;
  double w_ext = 0.0;
};

// Throws ConfigError listing the valid presets for an unknown name.
PresetWeights preset_weights(std::string_view name, double beta, double covo_weight, double reward_correct);

}  // namespace covo

#endif  // COVO_RUN_CONFIG_HPP_
