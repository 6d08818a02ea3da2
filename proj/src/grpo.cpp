#include "covo/grpo.hpp"

namespace covo {

std::vector<double> group_advantages(std::span<const double> rewards, bool scale) {
  if (rewards.size() < 2) throw ConfigError("group advantages need G >= 2 rewards");
  double mean = 0.0;
  for (double r : rewards) {
    if (!std::isfinite(r)) throw NumericError("non-finite reward in group");
    mean += r;
  }
  mean /= static_cast<double>(rewards.size());
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double stddev = std::sqrt(var / static_cast<double>(rewards.size()));
  std::vector<double> adv(rewards.size(), 0.0);
  if (stddev < 1e-8) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    adv[i] = scale ? (rewards[i] - mean) / stddev : rewards[i] - mean;
  }
  return adv;
}

std::vector<double> kl_estimate(std::span<const double> logp_current,
                                std::span<const double> logp_ref) {
  if (logp_current.size() != logp_ref.size()) {
    throw DomainError("kl_estimate needs equal-length log-prob lists");
  }
  std::vector<double> out(logp_current.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double delta = logp_ref[i] - logp_current[i];
    if (!std::isfinite(delta)) throw NumericError("non-finite log-prob at token " + std::to_string(i));
    out[i] = std::expm1(delta) - delta;
  }
  return out;
}

MeanCi mean_ci95(std::span<const double> values) {
  MeanCi out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() < 2) return out;
  double var = 0.0;
  for (double v : values) var += (v - out.mean) * (v - out.mean);
  var /= static_cast<double>(values.size() - 1);
  out.half_width = 1.96 * std::sqrt(var / static_cast<double>(values.size()));
  return out;
}

void GroupBatch::validate() const {
  const std::size_t g = generations.size();
  if (g < 2) throw ConfigError("a group batch needs G >= 2 generations");
  if (rewards.size() != g || advantages.size() != g) {
    throw ConfigError("group batch rewards/advantages do not match its generations");
  }
  for (const auto& gen : generations) {
    if (gen.old_logprobs.size() != gen.completion.size()) {
      throw ConfigError("generation is missing its old-policy log-probs");
    }
    if (!gen.ref_logprobs.empty() && gen.ref_logprobs.size() != gen.completion.size()) {
      throw ConfigError("generation reference log-probs do not match its length");
    }
  }
}

}  // namespace covo
