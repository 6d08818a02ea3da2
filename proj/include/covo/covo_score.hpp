#ifndef COVO_COVO_SCORE_HPP_
#define COVO_COVO_SCORE_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <string>
#include <string_view>
#include <vector>

#include "covo/sampling.hpp"

namespace covo {

// Placeholder for the generated output inside a reverse template.
inline constexpr std::string_view kOutputSlot = "{out}";

// Reverse prompts that ask the model to recover the request from a
// response, in the wording used for the math and chat experiments.
inline constexpr std::string_view kMathReverseTemplate =
    "Below is a response that appropriately completes a request. Write the instruction that "
    "describes the task.\n\n### Response:\n{out}\n\n### Instruction:";
inline constexpr std::string_view kChatReverseTemplate =
    "Below is a response that appropriately solves a task. Write the instruction that describes "
    "the task.\n\n### Response:\n{out}\n\n### Instruction:";
inline constexpr std::string_view kPoetryReverseTemplate =
    "Describe the style of the following poem in two words:\n\n{out}\n\nI would describe it as a";

// Picks the span of the prompt scored in the value direction: the tokens
// strictly between the first `prefix` match and the next `suffix` match.
// Empty delimiters select from the start / to the end.
struct ValueTargetSelector {
  std::string prefix;
  std::string suffix;

  TokenSequence select(const TokenSequence& prompt, const Vocabulary& vocab) const;
};

struct CovoConfig {
  double lambda_v = 1.0;
  double lambda_o = 1.0;
  std::string reverse_template{kOutputSlot};
  ValueTargetSelector value_target;
  // Divide each token probability by the row maximum before averaging. When
  // off, the plain length-normalized log-likelihoods are used.
  bool max_normalization = true;
  // Log-probs are floored here before differencing.
  double logprob_floor = -60.0;
  // Cut generations after the first eos and drop padding.
  bool trim_at_eos = true;

  void validate() const;
};

struct CovoBreakdown {
  double s_v = 0.0;
  double s_o = 0.0;
  double total = 0.0;
  std::size_t x_len = 0;
  std::size_t y_len = 0;
  // Normalized per-token log-probs: value direction (x | y') and
  // originality direction (y | prompt).
  std::vector<double> value_terms;
  std::vector<double> originality_terms;
};

// The generation truncated after its first eos, with padding removed.
TokenSequence trim_generation(const TokenSequence& y, const Vocabulary& vocab);
// The same, without the eos itself.
TokenSequence strip_generation(const TokenSequence& y, const Vocabulary& vocab);

// y' = template text with y substituted for the single output slot.
TokenSequence build_reverse_input(const TokenSequence& y, const CovoConfig& cfg,
                                  const Vocabulary& vocab);

namespace detail {

inline std::vector<double> normalized_terms(const SequenceScores& s, const CovoConfig& cfg) {
  std::vector<double> out(s.logprob.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double lp = std::max(s.logprob[i], cfg.logprob_floor);
    const double mx = std::max(s.max_logprob[i], cfg.logprob_floor);
    out[i] = cfg.max_normalization ? lp - mx : lp;
  }
  return out;
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace detail

// s_v: mean normalized log-probability of x following the reverse input
// built from y. Always <= 0.
template <typename Scalar>
double value_component(const PolicySnapshot<Scalar>& ref, const TokenSequence& x,
                       const TokenSequence& y, const CovoConfig& cfg,
                       std::vector<double>* terms = nullptr) {
  if (x.empty()) throw DomainError("value component needs a non-empty source");
  const TokenSequence y_body = cfg.trim_at_eos ? strip_generation(y, ref.vocabulary()) : y;
  const TokenSequence reverse = build_reverse_input(y_body, cfg, ref.vocabulary());
  if (reverse.empty()) throw DomainError("value component needs a non-empty reverse input");
  auto t = detail::normalized_terms(sequence_scores(ref, reverse, x), cfg);
  const double s_v = detail::mean(t);
  if (terms) *terms = std::move(t);
  return s_v;
}

// s_o: negated mean normalized log-probability of y following `context`.
// Always >= 0.
template <typename Scalar>
double originality_component(const PolicySnapshot<Scalar>& ref, const TokenSequence& context,
                             const TokenSequence& y, const CovoConfig& cfg = {},
                             std::vector<double>* terms = nullptr) {
  const TokenSequence y_scored = cfg.trim_at_eos ? trim_generation(y, ref.vocabulary()) : y;
  if (y_scored.empty()) throw DomainError("originality component needs a non-empty output");
  auto t = detail::normalized_terms(sequence_scores(ref, context, y_scored), cfg);
  const double s_o = -detail::mean(t);
  if (terms) *terms = std::move(t);
  return s_o;
}

// CoVO score of output y for prompt `prompt` under the frozen reference.
// The value direction scores the selected part of the prompt given y'; the
// originality direction scores y given the whole prompt.
template <typename Scalar>
CovoBreakdown covo_score(const PolicySnapshot<Scalar>& ref, const TokenSequence& prompt,
                         const TokenSequence& y, const CovoConfig& cfg) {
  cfg.validate();
  const TokenSequence x = cfg.value_target.select(prompt, ref.vocabulary());
  CovoBreakdown b;
  b.s_v = value_component(ref, x, y, cfg, &b.value_terms);
  b.s_o = originality_component(ref, prompt, y, cfg, &b.originality_terms);
  b.total = cfg.lambda_v * b.s_v + cfg.lambda_o * b.s_o;
  b.x_len = b.value_terms.size();
  b.y_len = b.originality_terms.size();
  return b;
}

// Largest violation of log p(x|y) - log p(x) == log p(y|x) - log p(y) over a
// strictly positive, normalized joint table (rows index x, columns y).
double mi_identity_check(const Eigen::MatrixXd& joint);

}  // namespace covo

#endif  // COVO_COVO_SCORE_HPP_
