#ifndef COVO_OPTIMIZER_HPP_
#define COVO_OPTIMIZER_HPP_

#include <cmath>

#include "covo/model.hpp"

namespace covo {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double max_grad_norm = 100.0;  // <= 0 disables clipping
};

// Scales `grad` in place so its L2 norm does not exceed max_norm. Returns
// the norm before clipping.
template <typename Scalar>
double clip_grad_norm(VectorX<Scalar>& grad, double max_norm) {
  const double norm = static_cast<double>(grad.template cast<double>().norm());
  if (max_norm > 0.0 && norm > max_norm) {
    grad *= static_cast<Scalar>(max_norm / norm);
  }
  return norm;
}

// Adam with bias correction and global gradient-norm clipping. The moment
// estimates live here; the parameters live in the snapshot it is applied to.
template <typename Scalar>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  std::uint64_t steps() const noexcept { return t_; }
  double last_grad_norm() const noexcept { return last_norm_; }

  PolicySnapshot<Scalar> step(const PolicySnapshot<Scalar>& model, VectorX<Scalar> grad, double lr) {
    const auto n = model.parameters().size();
    if (grad.size() != n) throw ConfigError("gradient shape does not match the parameters");
    if (m_.size() != n) {
      m_ = VectorX<double>::Zero(n);
      v_ = VectorX<double>::Zero(n);
    }
    last_norm_ = clip_grad_norm(grad, cfg_.max_grad_norm);
    ++t_;
    const VectorX<double> g = grad.template cast<double>();
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * g;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const VectorX<double> update =
        (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg_.epsilon) * lr;
    VectorX<Scalar> p = model.parameters() - update.template cast<Scalar>();
    return model.with_parameters(std::move(p), model.step() + 1);
  }

 private:
  AdamConfig cfg_;
  VectorX<double> m_;
  VectorX<double> v_;
  std::uint64_t t_ = 0;
  double last_norm_ = 0.0;
};

template <typename Scalar>
struct LossAndGradient {
  double loss = 0.0;
  VectorX<Scalar> gradient;
};

// Mean next-token cross-entropy over every predicted position of every
// sequence (the first token of each sequence is context only).
struct CrossEntropyLoss {
  std::vector<TokenSequence> sequences;
};

template <typename Scalar>
LossAndGradient<Scalar> loss_and_gradients(const PolicySnapshot<Scalar>& model,
                                           const CrossEntropyLoss& spec) {
  std::size_t count = 0;
  for (const auto& s : spec.sequences) {
    if (s.size() >= 2) count += s.size() - 1;
  }
  if (count == 0) throw DomainError("cross-entropy loss needs a sequence of length >= 2");
  LossAndGradient<Scalar> out;
  out.gradient = VectorX<Scalar>::Zero(model.parameters().size());
  const Scalar inv = Scalar(1) / static_cast<Scalar>(count);
  for (const auto& s : spec.sequences) {
    if (s.size() < 2) continue;
    const ForwardPass<Scalar> fp = forward(model, s.view());
    const auto T = static_cast<Eigen::Index>(s.size());
    MatrixX<Scalar> dlogits = fp.logprobs.array().exp().matrix();
    dlogits.row(T - 1).setZero();
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
      const TokenId target = s.ids[static_cast<std::size_t>(t + 1)];
      out.loss -= static_cast<double>(fp.logprobs(t, target));
      dlogits(t, target) -= Scalar(1);
    }
    dlogits *= inv;
    out.gradient += backward(model, fp, dlogits);
  }
  out.loss /= static_cast<double>(count);
  if (!std::isfinite(out.loss) || !out.gradient.allFinite()) {
    throw NumericError("non-finite cross-entropy loss at model step " + std::to_string(model.step()));
  }
  return out;
}

}  // namespace covo

#endif  // COVO_OPTIMIZER_HPP_
