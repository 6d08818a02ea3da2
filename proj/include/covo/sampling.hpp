#ifndef COVO_SAMPLING_HPP_
#define COVO_SAMPLING_HPP_

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "covo/model.hpp"

namespace covo {

struct SamplerConfig {
  double temperature = 1.0;
  std::size_t top_k = 0;  // 0 keeps the full distribution
  std::size_t max_new_tokens = 256;
  bool greedy = false;

  void validate(std::size_t vocab_size) const {
    if (greedy) return;
    if (!(temperature > 0.0)) throw ConfigError("sampler temperature must be positive");
    if (top_k > vocab_size) throw ConfigError("sampler top_k exceeds the vocabulary size");
    if (max_new_tokens == 0) throw ConfigError("sampler max_new_tokens must be positive");
  }
};

struct SampledSequence {
  TokenSequence tokens;  // continuation only; includes the terminating eos if sampled
  bool ended_with_eos = false;
  // Hit max_new_tokens (or the context window) before eos.
  bool overflow = false;
};

namespace detail {

// Greedy choice; ties go to the lowest id.
template <typename Row>
TokenId argmax(const Row& row) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

// Draws one token from a log-distribution row under temperature/top-k using
// inverse-CDF sampling with a single uniform draw. With top_k == 1 this is
// argmax, with the same tie rule.
template <typename Row>
TokenId draw(const Row& logp, double temperature, std::size_t top_k, Rng& rng) {
  const auto n = static_cast<std::size_t>(logp.size());
  std::vector<TokenId> ids(n);
  std::iota(ids.begin(), ids.end(), TokenId{0});
  std::size_t keep = n;
  if (top_k > 0 && top_k < n) {
    keep = top_k;
    std::stable_sort(ids.begin(), ids.end(),
                     [&](TokenId a, TokenId b) { return logp[a] > logp[b]; });
  }
  const double u = rng.uniform();
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < keep; ++i) mx = std::max(mx, static_cast<double>(logp[ids[i]]));
  std::vector<double> w(keep);
  double total = 0.0;
  for (std::size_t i = 0; i < keep; ++i) {
    w[i] = std::exp((static_cast<double>(logp[ids[i]]) - mx) / temperature);
    total += w[i];
  }
  double target = u * total;
  for (std::size_t i = 0; i < keep; ++i) {
    if (target < w[i]) return ids[i];
    target -= w[i];
  }
  // Rounding can leave target just above the last cumulative weight.
  for (std::size_t i = keep; i-- > 0;) {
    if (w[i] > 0.0) return ids[i];
  }
  return ids[0];
}

}  // namespace detail

// Samples a continuation of `prompt`. Stops at eos, at max_new_tokens, or
// when the context window is full; a pure function of its arguments.
template <typename Scalar>
SampledSequence sample_sequence(const PolicySnapshot<Scalar>& model, const TokenSequence& prompt,
                                const SamplerConfig& cfg, std::uint64_t seed) {
  cfg.validate(model.config().vocab_size);
  detail::check_context(model, prompt.view());
  const std::size_t room = model.config().context - prompt.size();
  const std::size_t budget = std::min(cfg.max_new_tokens, room);
  const TokenId eos = model.vocabulary().eos();

  IncrementalDecoder<Scalar> decoder(model);
  RowVectorX<Scalar> row;
  for (TokenId t : prompt.ids) row = decoder.push(t);

  Rng rng(seed);
  SampledSequence out;
  for (std::size_t i = 0; i < budget; ++i) {
    const TokenId next = cfg.greedy ? detail::argmax(row)
                                    : detail::draw(row, cfg.temperature, cfg.top_k, rng);
    out.tokens.ids.push_back(next);
    if (next == eos) {
      out.ended_with_eos = true;
      return out;
    }
    if (i + 1 < budget) row = decoder.push(next);
  }
  out.overflow = true;
  return out;
}

// Per-token log-probabilities of `target` following `prefix`, paired with
// the maximum log-probability of the same row.
struct SequenceScores {
  std::vector<double> logprob;
  std::vector<double> max_logprob;
};

template <typename Scalar>
SequenceScores sequence_scores(const PolicySnapshot<Scalar>& model, const TokenSequence& prefix,
                               const TokenSequence& target) {
  if (target.empty()) throw DomainError("sequence_scores needs a non-empty target");
  if (prefix.empty()) throw DomainError("sequence_scores needs a non-empty prefix");
  const TokenSequence joined = concat(prefix, target);
  const MatrixX<Scalar> rows = forward_logprobs(model, joined.view());
  SequenceScores s;
  s.logprob.reserve(target.size());
  s.max_logprob.reserve(target.size());
  for (std::size_t j = 0; j < target.size(); ++j) {
    const auto r = static_cast<Eigen::Index>(prefix.size() + j - 1);
    s.logprob.push_back(static_cast<double>(rows(r, target.ids[j])));
    s.max_logprob.push_back(static_cast<double>(rows.row(r).maxCoeff()));
  }
  return s;
}

}  // namespace covo

#endif  // COVO_SAMPLING_HPP_
