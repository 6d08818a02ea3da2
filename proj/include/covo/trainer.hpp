#ifndef COVO_TRAINER_HPP_
#define COVO_TRAINER_HPP_

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "covo/grpo.hpp"
#include "covo/optimizer.hpp"
#include "covo/tasks.hpp"

namespace covo {

using Policy = PolicySnapshot<float>;

struct PretrainConfig {
  std::size_t steps = 500;
  std::size_t batch_size = 16;
  double lr = 3e-3;
  AdamConfig adam;
  std::uint64_t seed = 1;
};

struct PretrainResult {
  Policy model;
  std::vector<double> losses;
};

// Cross-entropy training on sequences drawn with replacement.
PretrainResult pretrain(Policy model, std::span<const TokenSequence> sequences, const PretrainConfig& cfg,
                        const std::function<void(std::size_t, double)>& on_step = {});

struct TrainerConfig {
  std::size_t total_batches = 100;
  std::size_t batch_size = 4;
  std::size_t grad_accum = 8;
  std::size_t generations = 4;
  SamplerConfig sampler{1.0, 0, 256, false};
  double lr = 1e-5;
  AdamConfig adam;
  std::size_t iterations = 1;
  bool scale_rewards = true;
  double beta = 0.0;
  double clip_epsilon = 0.2;
  double w_covo = 1.0;
  double w_ext = 1.0;
  double lambda_v = 1.0;
  double lambda_o = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct StepMetrics {
  std::size_t step = 0;
  double mean_reward = 0.0;
  double mean_s_v = 0.0;
  double mean_s_o = 0.0;
  double mean_covo = 0.0;
  double mean_extrinsic = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  std::size_t overflow_count = 0;
  double mean_length = 0.0;
  double grad_norm = 0.0;

  bool finite() const;
};

// One JSON object per line, fixed key order.
std::string to_json_line(const StepMetrics& m);

// Largest completion that still leaves room for the prompt and for the
// reverse input plus the scored description inside the context window.
std::size_t effective_max_new_tokens(const Policy& model, const TaskSpec& spec, const TaskInstance& inst,
                                     std::size_t requested);

// G scored samples for one prompt under the current policy.
GroupBatch sample_group(const Policy& policy, const Policy& ref, const TaskInstance& inst,
                        const TaskSpec& spec, const TrainerConfig& cfg, std::uint64_t seed);

struct GrpoStepResult {
  Policy policy;
  StepMetrics metrics;
};

// Samples and scores a group for every prompt, then applies `iterations`
// Adam updates on the surrogate averaged over all groups. `prompts` holds
// batch_size * grad_accum instances.
GrpoStepResult grpo_step(const Policy& policy, const Policy& ref, std::span<const TaskInstance> prompts,
                         const TaskSpec& spec, const TrainerConfig& cfg, Adam<float>& optimizer,
                         std::size_t step);

struct TrainResult {
  Policy policy;
  std::vector<StepMetrics> metrics;
  bool aborted = false;
  std::string abort_reason;
};

// Runs total_batches GRPO steps on the train split. On a numeric failure
// the last good policy is returned with `aborted` set.
TrainResult train(const Policy& policy, const Policy& ref, const TaskSpec& spec, const TrainerConfig& cfg,
                  const std::function<void(const StepMetrics&, const Policy&)>& on_step = {});

}  // namespace covo

#endif  // COVO_TRAINER_HPP_
