#ifndef COVO_GRPO_HPP_
#define COVO_GRPO_HPP_

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "covo/optimizer.hpp"
#include "covo/sampling.hpp"

namespace covo {

// Group-relative advantages: (r_i - mean) / std with the population std.
// Without scaling only the mean is removed. Groups whose std is below 1e-8
// get all-zero advantages.
std::vector<double> group_advantages(std::span<const double> rewards, bool scale);

// Per-token k3 estimate of KL(current || ref): r - log r - 1 with
// r = p_ref / p_current. Non-negative, zero iff the log-probs coincide.
std::vector<double> kl_estimate(std::span<const double> logp_current,
                                std::span<const double> logp_ref);

// Mean and 95% normal-approximation half-width.
struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;
};
MeanCi mean_ci95(std::span<const double> values);

struct ScoredGeneration {
  // Action tokens: the sampled continuation up to and including eos.
  TokenSequence completion;
  // Per-token log-probs under the policy that sampled the completion.
  std::vector<double> old_logprobs;
  // Per-token log-probs under the frozen reference; empty when beta == 0.
  std::vector<double> ref_logprobs;
  double s_v = 0.0;
  double s_o = 0.0;
  double covo = 0.0;
  double extrinsic = 0.0;
  double reward = 0.0;
  bool overflow = false;
};

// G scored generations for one prompt with their normalized advantages.
struct GroupBatch {
  TokenSequence prompt;
  std::vector<ScoredGeneration> generations;
  std::vector<double> rewards;
  std::vector<double> advantages;

  void validate() const;
};

struct SurrogateConfig {
  double clip_epsilon = 0.2;
  double beta = 0.0;
};

struct SurrogateValue {
  double surrogate = 0.0;      // clipped policy-gradient term
  double kl = 0.0;             // mean per-token k3 estimate
  double objective = 0.0;      // surrogate - beta * kl (maximized)
  double clip_fraction = 0.0;  // tokens where the clipped branch is active
  std::size_t tokens = 0;
};

namespace detail {

struct TokenTerm {
  double value = 0.0;  // min(r A, clip(r) A)
  double kl = 0.0;
  double dlogp = 0.0;  // d(term - beta kl)/d log pi_theta
  bool clipped = false;
};

inline TokenTerm surrogate_token(double logp, double old_logp, double ref_logp, double advantage,
                                 const SurrogateConfig& cfg, bool with_kl) {
  TokenTerm t;
  const double ratio = std::exp(logp - old_logp);
  const double clipped = std::clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
  const double unclipped_term = ratio * advantage;
  const double clipped_term = clipped * advantage;
  t.clipped = clipped_term < unclipped_term;
  t.value = t.clipped ? clipped_term : unclipped_term;
  t.dlogp = t.clipped ? 0.0 : unclipped_term;
  if (with_kl) {
    const double delta = ref_logp - logp;
    t.kl = std::expm1(delta) - delta;
    t.dlogp -= cfg.beta * (1.0 - std::exp(delta));
  }
  return t;
}

}  // namespace detail

// Evaluates the surrogate for the current parameters; optionally returns the
// gradient of the loss (negated objective). Averaging: token mean within a
// generation, then mean over every generation of every batch.
template <typename Scalar>
SurrogateValue evaluate_surrogate(const PolicySnapshot<Scalar>& model,
                                  std::span<const GroupBatch> batches, const SurrogateConfig& cfg,
                                  VectorX<Scalar>* gradient) {
  if (!(cfg.clip_epsilon > 0.0 && cfg.clip_epsilon < 1.0)) {
    throw ConfigError("clip_epsilon must lie in (0, 1)");
  }
  if (cfg.beta < 0.0) throw ConfigError("beta must be non-negative");
  std::size_t n_gen = 0;
  for (const auto& b : batches) {
    b.validate();
    for (const auto& g : b.generations) n_gen += g.completion.empty() ? 0 : 1;
  }
  SurrogateValue out;
  if (gradient) *gradient = VectorX<Scalar>::Zero(model.parameters().size());
  if (n_gen == 0) return out;
  const bool with_kl = cfg.beta > 0.0;
  std::size_t clipped = 0;
  for (const auto& b : batches) {
    for (std::size_t i = 0; i < b.generations.size(); ++i) {
      const ScoredGeneration& gen = b.generations[i];
      if (gen.completion.empty()) continue;
      const double adv = b.advantages[i];
      const TokenSequence seq = concat(b.prompt, gen.completion);
      const ForwardPass<Scalar> fp = forward(model, seq.view());
      const std::size_t len = gen.completion.size();
      const double w = 1.0 / (static_cast<double>(n_gen) * static_cast<double>(len));
      MatrixX<Scalar> dlogits;
      if (gradient) dlogits = MatrixX<Scalar>::Zero(fp.logprobs.rows(), fp.logprobs.cols());
      double gen_value = 0.0, gen_kl = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const auto row = static_cast<Eigen::Index>(b.prompt.size() + j - 1);
        const TokenId tok = gen.completion.ids[j];
        const double logp = static_cast<double>(fp.logprobs(row, tok));
        const double ref = with_kl ? gen.ref_logprobs[j] : 0.0;
        const auto term = detail::surrogate_token(logp, gen.old_logprobs[j], ref, adv, cfg, with_kl);
        if (!std::isfinite(term.value) || !std::isfinite(term.kl)) {
          throw NumericError("non-finite probability ratio at completion token " +
                             std::to_string(j) + " (model step " + std::to_string(model.step()) +
                             ")");
        }
        gen_value += term.value;
        gen_kl += term.kl;
        clipped += term.clipped ? 1 : 0;
        ++out.tokens;
        if (gradient && term.dlogp != 0.0) {
          // d loss / d logits = -w * dlogp * (onehot - softmax)
          const Scalar c = static_cast<Scalar>(-w * term.dlogp);
          dlogits.row(row) -= c * fp.logprobs.row(row).array().exp().matrix();
          dlogits(row, tok) += c;
        }
      }
      out.surrogate += gen_value / static_cast<double>(len) / static_cast<double>(n_gen);
      out.kl += gen_kl / static_cast<double>(len) / static_cast<double>(n_gen);
      if (gradient && !dlogits.isZero(0)) *gradient += backward(model, fp, dlogits);
    }
  }
  out.objective = out.surrogate - cfg.beta * out.kl;
  out.clip_fraction = static_cast<double>(clipped) / static_cast<double>(out.tokens);
  if (gradient && !gradient->allFinite()) {
    throw NumericError("non-finite surrogate gradient at model step " + std::to_string(model.step()));
  }
  return out;
}

// Surrogate value (to maximize) of one or more group batches.
template <typename Scalar>
SurrogateValue clipped_objective(std::span<const GroupBatch> batches,
                                 const PolicySnapshot<Scalar>& model, const SurrogateConfig& cfg) {
  return evaluate_surrogate<Scalar>(model, batches, cfg, nullptr);
}

struct GrpoLoss {
  std::span<const GroupBatch> batches;
  SurrogateConfig surrogate;
};

template <typename Scalar>
LossAndGradient<Scalar> loss_and_gradients(const PolicySnapshot<Scalar>& model, const GrpoLoss& spec) {
  LossAndGradient<Scalar> out;
  const SurrogateValue v = evaluate_surrogate(model, spec.batches, spec.surrogate, &out.gradient);
  out.loss = -v.objective;
  return out;
}

}  // namespace covo

#endif  // COVO_GRPO_HPP_
