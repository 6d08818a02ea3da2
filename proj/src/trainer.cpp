#include "covo/trainer.hpp"

#include <cmath>

#include <json.hpp>

#include "covo/error.hpp"

namespace covo {

PretrainResult pretrain(Policy model, std::span<const TokenSequence> sequences, const PretrainConfig& cfg,
                        const std::function<void(std::size_t, double)>& on_step) {
  PretrainResult res{std::move(model), {}};
  if (cfg.steps == 0) return res;
  if (sequences.empty()) throw ConfigError("pretraining needs at least one sequence");
  if (cfg.batch_size == 0) throw ConfigError("pretraining batch size must be positive");
  if (!(cfg.lr > 0.0)) throw ConfigError("pretraining learning rate must be positive");
  for (const auto& s : sequences) {
    if (s.size() > res.model.config().context) {
      throw LengthError("pretraining sequence of length " + std::to_string(s.size()) +
                        " exceeds the context window " + std::to_string(res.model.config().context));
    }
  }
  Adam<float> opt(cfg.adam);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Rng rng(derive_seed(cfg.seed, {0x9e37u, step}));
    CrossEntropyLoss batch;
    for (std::size_t i = 0; i < cfg.batch_size; ++i) batch.sequences.push_back(sequences[rng.below(sequences.size())]);
    const auto lg = loss_and_gradients(res.model, batch);
    res.losses.push_back(lg.loss);
    res.model = opt.step(res.model, lg.gradient, cfg.lr);
    if (on_step) on_step(step, lg.loss);
  }
  return res;
}

void TrainerConfig::validate() const {
  if (generations < 2) throw ConfigError("Number of generations G must be at least 2");
  if (batch_size == 0) throw ConfigError("Batch size must be positive");
  if (grad_accum == 0) throw ConfigError("Gradient accumulation steps must be positive");
  if (iterations == 0) throw ConfigError("Training iterations must be positive");
  if (!(lr > 0.0)) throw ConfigError("Learning rate must be positive");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be non-negative");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw ConfigError("clip epsilon must lie in (0, 1)");
  if (!std::isfinite(w_covo) || !std::isfinite(w_ext)) throw ConfigError("reward weights must be finite");
  if (sampler.greedy) throw ConfigError("training samples must not be greedy");
  if (!(sampler.temperature > 0.0)) throw ConfigError("Temperature must be positive");
  if (sampler.max_new_tokens == 0) throw ConfigError("Max new tokens must be positive");
}

bool StepMetrics::finite() const {
  for (double v : {mean_reward, mean_s_v, mean_s_o, mean_covo, mean_extrinsic, mean_kl, clip_fraction,
                   mean_length, grad_norm}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string to_json_line(const StepMetrics& m) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["mean_reward"] = m.mean_reward;
  j["mean_s_v"] = m.mean_s_v;
  j["mean_s_o"] = m.mean_s_o;
  j["mean_kl"] = m.mean_kl;
  j["clip_fraction"] = m.clip_fraction;
  j["overflow_count"] = m.overflow_count;
  j["mean_covo"] = m.mean_covo;
  j["mean_extrinsic"] = m.mean_extrinsic;
  j["mean_length"] = m.mean_length;
  j["grad_norm"] = m.grad_norm;
  return j.dump();
}

std::size_t effective_max_new_tokens(const Policy& model, const TaskSpec& spec, const TaskInstance& inst,
                                     std::size_t requested) {
  const Vocabulary& vocab = model.vocabulary();
  const std::size_t context = model.config().context;
  const TokenSequence prompt = vocab.tokenize(inst.prompt);
  const CovoConfig covo = spec.covo_config();
  const std::size_t x_len = covo.value_target.select(prompt, vocab).size();
  const std::size_t overhead = build_reverse_input(TokenSequence{}, covo, vocab).size();
  if (prompt.size() >= context || overhead + x_len >= context) {
    throw LengthError("prompt \"" + inst.prompt + "\" leaves no room in a context window of " +
                      std::to_string(context));
  }
  return std::min({requested, context - prompt.size(), context - overhead - x_len});
}

GroupBatch sample_group(const Policy& policy, const Policy& ref, const TaskInstance& inst,
                        const TaskSpec& spec, const TrainerConfig& cfg, std::uint64_t seed) {
  const Vocabulary& vocab = policy.vocabulary();
  CovoConfig covo = spec.covo_config();
  covo.lambda_v = cfg.lambda_v;
  covo.lambda_o = cfg.lambda_o;
  SamplerConfig sampler = cfg.sampler;
  sampler.max_new_tokens = effective_max_new_tokens(policy, spec, inst, cfg.sampler.max_new_tokens);
  GroupBatch b;
  b.prompt = vocab.tokenize(inst.prompt);
  b.prompt.text.reset();
  for (std::size_t g = 0; g < cfg.generations; ++g) {
    const SampledSequence s = sample_sequence(policy, b.prompt, sampler, derive_seed(seed, {g}));
    ScoredGeneration gen;
    gen.completion = s.tokens;
    gen.overflow = s.overflow;
    gen.old_logprobs = sequence_scores(policy, b.prompt, gen.completion).logprob;
    gen.ref_logprobs = sequence_scores(ref, b.prompt, gen.completion).logprob;
    const CovoBreakdown score = covo_score(ref, b.prompt, gen.completion, covo);
    gen.s_v = score.s_v;
    gen.s_o = score.s_o;
    gen.covo = score.total;
    gen.extrinsic = extrinsic_reward(gen.completion, inst, spec, vocab);
    gen.reward = cfg.w_covo * gen.covo + cfg.w_ext * gen.extrinsic;
    b.rewards.push_back(gen.reward);
    b.generations.push_back(std::move(gen));
  }
  b.advantages = group_advantages(b.rewards, cfg.scale_rewards);
  return b;
}

GrpoStepResult grpo_step(const Policy& policy, const Policy& ref, std::span<const TaskInstance> prompts,
                         const TaskSpec& spec, const TrainerConfig& cfg, Adam<float>& optimizer,
                         std::size_t step) {
  cfg.validate();
  if (prompts.size() != cfg.batch_size * cfg.grad_accum) {
    throw ConfigError("a step needs Batch size x Gradient accumulation steps prompts");
  }
  std::vector<GroupBatch> groups;
  groups.reserve(prompts.size());
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    groups.push_back(sample_group(policy, ref, prompts[p], spec, cfg, derive_seed(cfg.seed, {step, p})));
  }

  StepMetrics m;
  m.step = step;
  double n = 0.0, kl_sum = 0.0;
  for (const auto& b : groups) {
    for (const auto& g : b.generations) {
      m.mean_reward += g.reward;
      m.mean_s_v += g.s_v;
      m.mean_s_o += g.s_o;
      m.mean_covo += g.covo;
      m.mean_extrinsic += g.extrinsic;
      m.mean_length += static_cast<double>(g.completion.size());
      m.overflow_count += g.overflow ? 1 : 0;
      double kl = 0.0;
      for (double k : kl_estimate(g.old_logprobs, g.ref_logprobs)) kl += k;
      kl_sum += kl / static_cast<double>(g.completion.size());
      n += 1.0;
    }
  }
  for (double* v : {&m.mean_reward, &m.mean_s_v, &m.mean_s_o, &m.mean_covo, &m.mean_extrinsic, &m.mean_length}) {
    *v /= n;
  }
  m.mean_kl = kl_sum / n;

  const SurrogateConfig surrogate{cfg.clip_epsilon, cfg.beta};
  Policy current = policy;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    VectorX<float> grad = VectorX<float>::Zero(current.parameters().size());
    VectorX<float> micro_grad;
    double clipped = 0.0, tokens = 0.0;
    for (std::size_t a = 0; a < cfg.grad_accum; ++a) {
      const std::span<const GroupBatch> micro(groups.data() + a * cfg.batch_size, cfg.batch_size);
      const SurrogateValue v = evaluate_surrogate(current, micro, surrogate, &micro_grad);
      grad += micro_grad / static_cast<float>(cfg.grad_accum);
      clipped += v.clip_fraction * static_cast<double>(v.tokens);
      tokens += static_cast<double>(v.tokens);
    }
    m.clip_fraction = tokens > 0.0 ? clipped / tokens : 0.0;
    current = optimizer.step(current, grad, cfg.lr);
    m.grad_norm = optimizer.last_grad_norm();
  }
  if (!m.finite()) throw NumericError("non-finite training metric at step " + std::to_string(step));
  return {current, m};
}

TrainResult train(const Policy& policy, const Policy& ref, const TaskSpec& spec, const TrainerConfig& cfg,
                  const std::function<void(const StepMetrics&, const Policy&)>& on_step) {
  cfg.validate();
  TrainResult res{policy, {}, false, ""};
  if (cfg.total_batches == 0) return res;
  const std::size_t per_step = cfg.batch_size * cfg.grad_accum;
  const auto prompts = generate_task_instances(spec, Split::train, cfg.total_batches * per_step, cfg.seed,
                                               policy.vocabulary());
  Adam<float> optimizer(cfg.adam);
  for (std::size_t step = 0; step < cfg.total_batches; ++step) {
    try {
      const std::span<const TaskInstance> batch(prompts.data() + step * per_step, per_step);
      GrpoStepResult r = grpo_step(res.policy, ref, batch, spec, cfg, optimizer, step);
      res.policy = std::move(r.policy);
      res.metrics.push_back(r.metrics);
      if (on_step) on_step(r.metrics, res.policy);
    } catch (const NumericError& e) {
      res.aborted = true;
      res.abort_reason = e.what();
      return res;
    }
  }
  return res;
}

}  // namespace covo
