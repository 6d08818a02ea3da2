// Small hand-built and random models shared by the unit tests.
#ifndef COVO_TESTS_TEST_MODELS_HPP_
#define COVO_TESTS_TEST_MODELS_HPP_

#include <cmath>
#include <memory>

#include "covo/model.hpp"

namespace covo::testing {

inline ModelConfig tiny_config(std::size_t vocab, std::size_t d = 8, std::size_t layers = 2,
                               std::size_t heads = 2, std::size_t context = 12) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.d_model = d;
  c.n_layers = layers;
  c.n_heads = heads;
  c.context = context;
  return c;
}

// Random model whose weights are large enough to give non-trivial rows.
template <typename Scalar = double>
PolicySnapshot<Scalar> random_model(std::size_t vocab, std::uint64_t seed, std::size_t d = 8,
                                    std::size_t layers = 2, std::size_t context = 12,
                                    double spread = 0.5) {
  auto v = std::make_shared<const Vocabulary>(Vocabulary::synthetic(vocab));
  auto m = PolicySnapshot<Scalar>::initialize(v, tiny_config(vocab, d, layers, 2, context), seed);
  VectorX<Scalar> p = m.parameters();
  Rng rng(seed ^ 0xabcdefULL);
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += static_cast<Scalar>(spread * rng.normal());
  return m.with_parameters(std::move(p), 0);
}

// Zero-layer model over a 2-token vocabulary whose next-token row depends
// only on the position: p = (0.3, 0.7) everywhere, or, when `varying` is
// set, (0.3, 0.7) at even positions and (0.5, 0.5) at odd ones.
//
// d_model = 2; the position embedding dominates so LayerNorm maps position
// t to xhat = (1, -1) or (-1, 1); the gain/bias turn that into a head input
// of (2, 0) or (0, 0), and the tied head reads logits from the first
// embedding column.
inline PolicySnapshot<double> positional_two_token_model(bool varying) {
  auto v = std::make_shared<const Vocabulary>(Vocabulary::synthetic(2));
  ModelConfig c = tiny_config(2, 2, 0, 1, 8);
  auto m = PolicySnapshot<double>::initialize(v, c, 1);
  const double half_logit = 0.5 * std::log(0.7 / 0.3);
  MatrixX<double> emb(2, 2);
  emb << 0.0, 0.0, half_logit, 0.0;
  MatrixX<double> pos(8, 2);
  for (int t = 0; t < 8; ++t) {
    const bool skewed = varying ? (t % 2 == 0) : true;
    pos(t, 0) = skewed ? 1000.0 : 0.0;
    pos(t, 1) = skewed ? 0.0 : 1000.0;
  }
  MatrixX<double> gain(1, 2), bias(1, 2);
  gain << 1.0, 0.0;
  bias << 1.0, 0.0;
  return m.with_tensor("tok_emb", emb)
      .with_tensor("pos_emb", pos)
      .with_tensor("ln_f.gain", gain)
      .with_tensor("ln_f.bias", bias);
}

}  // namespace covo::testing

#endif  // COVO_TESTS_TEST_MODELS_HPP_
