#ifndef COVO_MODEL_HPP_
#define COVO_MODEL_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "covo/error.hpp"
#include "covo/random.hpp"
#include "covo/vocabulary.hpp"

namespace covo {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// Decoder-only transformer: token + learned position embeddings, pre-norm
// blocks (causal multi-head self-attention, GELU MLP), final LayerNorm and
// an output head tied to the token embedding.
struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t context = 128;
  std::size_t d_ff = 0;  // 0 selects 4 * d_model

  std::size_t ff_width() const { return d_ff == 0 ? 4 * d_model : d_ff; }

  void validate() const {
    if (vocab_size < 2) throw ConfigError("model vocab_size must be >= 2");
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
      throw ConfigError("model d_model must be a positive multiple of n_heads");
    }
    if (context == 0) throw ConfigError("model context window must be positive");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TensorSpec {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index offset = 0;

  Eigen::Index size() const { return rows * cols; }
};

// Named views into one flat parameter vector. The order of tensors is the
// order they are laid out in memory and in checkpoints.
class ParameterLayout {
 public:
  struct Block {
    std::size_t ln1_gain, ln1_bias, wq, wk, wv, wo, ln2_gain, ln2_bias, w1, b1, w2, b2;
  };

  explicit ParameterLayout(const ModelConfig& cfg) {
    cfg.validate();
    const auto n = static_cast<Eigen::Index>(cfg.vocab_size);
    const auto d = static_cast<Eigen::Index>(cfg.d_model);
    const auto f = static_cast<Eigen::Index>(cfg.ff_width());
    const auto c = static_cast<Eigen::Index>(cfg.context);
    tok_emb = add("tok_emb", n, d);
    pos_emb = add("pos_emb", c, d);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      const std::string p = "blocks." + std::to_string(l) + ".";
      Block b{};
      b.ln1_gain = add(p + "ln1.gain", 1, d);
      b.ln1_bias = add(p + "ln1.bias", 1, d);
      b.wq = add(p + "attn.wq", d, d);
      b.wk = add(p + "attn.wk", d, d);
      b.wv = add(p + "attn.wv", d, d);
      b.wo = add(p + "attn.wo", d, d);
      b.ln2_gain = add(p + "ln2.gain", 1, d);
      b.ln2_bias = add(p + "ln2.bias", 1, d);
      b.w1 = add(p + "mlp.w1", d, f);
      b.b1 = add(p + "mlp.b1", 1, f);
      b.w2 = add(p + "mlp.w2", f, d);
      b.b2 = add(p + "mlp.b2", 1, d);
      blocks.push_back(b);
    }
    lnf_gain = add("ln_f.gain", 1, d);
    lnf_bias = add("ln_f.bias", 1, d);
  }

  const std::vector<TensorSpec>& tensors() const noexcept { return tensors_; }
  const TensorSpec& operator[](std::size_t i) const { return tensors_.at(i); }
  Eigen::Index total_size() const noexcept { return total_; }

  const TensorSpec& find(std::string_view name) const {
    for (const auto& t : tensors_) {
      if (t.name == name) return t;
    }
    throw ConfigError("no parameter tensor named " + std::string(name));
  }

  std::size_t tok_emb = 0, pos_emb = 0, lnf_gain = 0, lnf_bias = 0;
  std::vector<Block> blocks;

 private:
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    tensors_.push_back({std::move(name), rows, cols, total_});
    total_ += rows * cols;
    return tensors_.size() - 1;
  }

  std::vector<TensorSpec> tensors_;
  Eigen::Index total_ = 0;
};

// An immutable set of model parameters plus the vocabulary and architecture
// they belong to. Plays both the trainable policy and the frozen reference.
template <typename Scalar>
class PolicySnapshot {
 public:
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;
  using ConstMap = Eigen::Map<const Matrix>;

  PolicySnapshot(std::shared_ptr<const Vocabulary> vocab, ModelConfig cfg, Vector params,
                 std::uint64_t step = 0)
      : vocab_(std::move(vocab)),
        cfg_(cfg),
        layout_(std::make_shared<const ParameterLayout>(cfg)),
        params_(std::move(params)),
        step_(step) {
    cfg_.d_ff = cfg_.ff_width();
    if (!vocab_) throw ConfigError("policy snapshot needs a vocabulary");
    if (vocab_->size() != cfg_.vocab_size) {
      throw ConfigError("vocabulary size does not match model vocab_size");
    }
    if (params_.size() != layout_->total_size()) {
      throw ConfigError("parameter vector size does not match the architecture");
    }
    if (!params_.allFinite()) throw NumericError("policy snapshot holds non-finite parameters");
  }

  // Random initialization: embeddings N(0, 0.02^2), projections
  // N(0, 1/fan_in) with residual outputs scaled down by sqrt(2 * layers),
  // LayerNorm gains 1, biases 0.
  static PolicySnapshot initialize(std::shared_ptr<const Vocabulary> vocab, ModelConfig cfg,
                                   std::uint64_t seed) {
    cfg.vocab_size = vocab->size();
    ParameterLayout layout(cfg);
    Vector p = Vector::Zero(layout.total_size());
    Rng rng(seed);
    const double resid = 1.0 / std::sqrt(2.0 * static_cast<double>(std::max<std::size_t>(cfg.n_layers, 1)));
    auto fill_normal = [&](std::size_t idx, double stddev) {
      const TensorSpec& t = layout[idx];
      for (Eigen::Index i = 0; i < t.size(); ++i) {
        p[t.offset + i] = static_cast<Scalar>(stddev * rng.normal());
      }
    };
    auto fill_const = [&](std::size_t idx, Scalar v) {
      const TensorSpec& t = layout[idx];
      p.segment(t.offset, t.size()).setConstant(v);
    };
    const double d = static_cast<double>(cfg.d_model);
    const double f = static_cast<double>(cfg.ff_width());
    fill_normal(layout.tok_emb, 0.02);
    fill_normal(layout.pos_emb, 0.02);
    for (const auto& b : layout.blocks) {
      fill_const(b.ln1_gain, Scalar(1));
      fill_normal(b.wq, 1.0 / std::sqrt(d));
      fill_normal(b.wk, 1.0 / std::sqrt(d));
      fill_normal(b.wv, 1.0 / std::sqrt(d));
      fill_normal(b.wo, resid / std::sqrt(d));
      fill_const(b.ln2_gain, Scalar(1));
      fill_normal(b.w1, 1.0 / std::sqrt(d));
      fill_normal(b.w2, resid / std::sqrt(f));
    }
    fill_const(layout.lnf_gain, Scalar(1));
    return PolicySnapshot(std::move(vocab), cfg, std::move(p), 0);
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  const Vocabulary& vocabulary() const noexcept { return *vocab_; }
  const std::shared_ptr<const Vocabulary>& shared_vocabulary() const noexcept { return vocab_; }
  const ParameterLayout& layout() const noexcept { return *layout_; }
  const Vector& parameters() const noexcept { return params_; }
  std::uint64_t step() const noexcept { return step_; }

  ConstMap tensor(std::size_t idx) const {
    const TensorSpec& t = (*layout_)[idx];
    return ConstMap(params_.data() + t.offset, t.rows, t.cols);
  }
  ConstMap tensor(std::string_view name) const {
    const TensorSpec& t = layout_->find(name);
    return ConstMap(params_.data() + t.offset, t.rows, t.cols);
  }

  PolicySnapshot with_parameters(Vector params, std::uint64_t step) const {
    return PolicySnapshot(vocab_, cfg_, std::move(params), step);
  }

  PolicySnapshot with_tensor(std::string_view name, const Matrix& value) const {
    const TensorSpec& t = layout_->find(name);
    if (value.rows() != t.rows || value.cols() != t.cols) {
      throw ConfigError("shape mismatch setting tensor " + t.name);
    }
    Vector p = params_;
    Eigen::Map<Matrix>(p.data() + t.offset, t.rows, t.cols) = value;
    return PolicySnapshot(vocab_, cfg_, std::move(p), step_);
  }

  template <typename Other>
  PolicySnapshot<Other> cast() const {
    return PolicySnapshot<Other>(vocab_, cfg_, params_.template cast<Other>(), step_);
  }

 private:
  std::shared_ptr<const Vocabulary> vocab_;
  ModelConfig cfg_;
  std::shared_ptr<const ParameterLayout> layout_;
  Vector params_;
  std::uint64_t step_ = 0;
};

namespace detail {

template <typename Scalar>
constexpr Scalar kLayerNormEps = Scalar(1e-5);

template <typename Scalar>
struct LayerNormCache {
  MatrixX<Scalar> xhat;
  VectorX<Scalar> rstd;
};

template <typename Scalar, typename Gain, typename Bias>
MatrixX<Scalar> layer_norm(const MatrixX<Scalar>& x, const Gain& gain, const Bias& bias,
                           LayerNormCache<Scalar>& cache) {
  const VectorX<Scalar> mean = x.rowwise().mean();
  MatrixX<Scalar> centered = x.colwise() - mean;
  const VectorX<Scalar> var = centered.array().square().rowwise().mean();
  cache.rstd = (var.array() + kLayerNormEps<Scalar>).rsqrt();
  cache.xhat = cache.rstd.asDiagonal() * centered;
  MatrixX<Scalar> y = cache.xhat.array().rowwise() * gain.row(0).array();
  y.array().rowwise() += bias.row(0).array();
  return y;
}

template <typename Scalar, typename Gain, typename GradGain, typename GradBias>
MatrixX<Scalar> layer_norm_backward(const MatrixX<Scalar>& dy, const Gain& gain,
                                    const LayerNormCache<Scalar>& cache, GradGain&& dgain,
                                    GradBias&& dbias) {
  dgain += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dbias += dy.colwise().sum();
  const MatrixX<Scalar> dxhat = dy.array().rowwise() * gain.row(0).array();
  const VectorX<Scalar> m1 = dxhat.rowwise().mean();
  const VectorX<Scalar> m2 = (dxhat.array() * cache.xhat.array()).rowwise().mean();
  MatrixX<Scalar> inner = dxhat.colwise() - m1;
  inner -= (cache.xhat.array().colwise() * m2.array()).matrix();
  return cache.rstd.asDiagonal() * inner;
}

template <typename Scalar>
constexpr Scalar kGeluC = Scalar(0.7978845608028654);  // sqrt(2/pi)
template <typename Scalar>
constexpr Scalar kGeluA = Scalar(0.044715);

template <typename Scalar>
MatrixX<Scalar> gelu(const MatrixX<Scalar>& x) {
  const auto a = x.array();
  const auto u = kGeluC<Scalar> * (a + kGeluA<Scalar> * a.cube());
  return (Scalar(0.5) * a * (Scalar(1) + u.tanh())).matrix();
}

template <typename Scalar>
MatrixX<Scalar> gelu_grad(const MatrixX<Scalar>& x) {
  const auto a = x.array();
  const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> t =
      (kGeluC<Scalar> * (a + kGeluA<Scalar> * a.cube())).tanh();
  return (Scalar(0.5) * (Scalar(1) + t) +
          Scalar(0.5) * a * (Scalar(1) - t.square()) * kGeluC<Scalar> *
              (Scalar(1) + Scalar(3) * kGeluA<Scalar> * a.square()))
      .matrix();
}

// Row-wise log-softmax.
template <typename Scalar>
MatrixX<Scalar> log_softmax_rows(const MatrixX<Scalar>& logits) {
  const VectorX<Scalar> mx = logits.rowwise().maxCoeff();
  MatrixX<Scalar> shifted = logits.colwise() - mx;
  const VectorX<Scalar> lse = shifted.array().exp().rowwise().sum().log();
  shifted.colwise() -= lse;
  return shifted;
}

}  // namespace detail

// Activations retained by a full forward pass for backpropagation.
template <typename Scalar>
struct ForwardPass {
  struct Block {
    MatrixX<Scalar> h1;  // ln1 output
    detail::LayerNormCache<Scalar> ln1;
    MatrixX<Scalar> q, k, v;
    std::vector<MatrixX<Scalar>> probs;  // one T x T attention matrix per head
    MatrixX<Scalar> att;                 // concatenated head outputs
    MatrixX<Scalar> h2;                  // ln2 output
    detail::LayerNormCache<Scalar> ln2;
    MatrixX<Scalar> pre;                 // MLP pre-activation
    MatrixX<Scalar> act;                 // GELU output
  };

  std::vector<TokenId> tokens;
  std::vector<Block> blocks;
  detail::LayerNormCache<Scalar> lnf;
  MatrixX<Scalar> hf;
  // Row t is the log-distribution of the token following position t.
  MatrixX<Scalar> logprobs;
};

namespace detail {

template <typename Scalar>
void check_context(const PolicySnapshot<Scalar>& model, std::span<const TokenId> tokens) {
  if (tokens.empty()) throw LengthError("forward pass needs a non-empty context");
  if (tokens.size() > model.config().context) {
    throw LengthError("context of " + std::to_string(tokens.size()) +
                      " tokens exceeds the window of " + std::to_string(model.config().context));
  }
  const auto n = static_cast<TokenId>(model.config().vocab_size);
  for (TokenId t : tokens) {
    if (t < 0 || t >= n) throw LengthError("token id " + std::to_string(t) + " outside vocabulary");
  }
}

}  // namespace detail

template <typename Scalar>
ForwardPass<Scalar> forward(const PolicySnapshot<Scalar>& model, std::span<const TokenId> tokens) {
  using Matrix = MatrixX<Scalar>;
  detail::check_context(model, tokens);
  const ModelConfig& cfg = model.config();
  const ParameterLayout& L = model.layout();
  const auto T = static_cast<Eigen::Index>(tokens.size());
  const auto d = static_cast<Eigen::Index>(cfg.d_model);
  const auto H = static_cast<Eigen::Index>(cfg.n_heads);
  const Eigen::Index dh = d / H;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

  ForwardPass<Scalar> fp;
  fp.tokens.assign(tokens.begin(), tokens.end());
  const auto emb = model.tensor(L.tok_emb);
  const auto pos = model.tensor(L.pos_emb);
  Matrix x(T, d);
  for (Eigen::Index t = 0; t < T; ++t) x.row(t) = emb.row(tokens[t]) + pos.row(t);

  fp.blocks.resize(L.blocks.size());
  for (std::size_t l = 0; l < L.blocks.size(); ++l) {
    const auto& b = L.blocks[l];
    auto& c = fp.blocks[l];
    c.h1 = detail::layer_norm<Scalar>(x, model.tensor(b.ln1_gain), model.tensor(b.ln1_bias), c.ln1);
    c.q.noalias() = c.h1 * model.tensor(b.wq);
    c.k.noalias() = c.h1 * model.tensor(b.wk);
    c.v.noalias() = c.h1 * model.tensor(b.wv);
    c.att.resize(T, d);
    c.probs.resize(static_cast<std::size_t>(H));
    for (Eigen::Index h = 0; h < H; ++h) {
      Matrix s = (c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose()) * scale;
      for (Eigen::Index i = 0; i < T; ++i) {
        const Scalar mx = s.row(i).head(i + 1).maxCoeff();
        s.row(i).head(i + 1) = (s.row(i).head(i + 1).array() - mx).exp().matrix();
        s.row(i).head(i + 1) /= s.row(i).head(i + 1).sum();
        s.row(i).tail(T - i - 1).setZero();
      }
      c.att.middleCols(h * dh, dh).noalias() = s * c.v.middleCols(h * dh, dh);
      c.probs[static_cast<std::size_t>(h)] = std::move(s);
    }
    x.noalias() += c.att * model.tensor(b.wo);
    c.h2 = detail::layer_norm<Scalar>(x, model.tensor(b.ln2_gain), model.tensor(b.ln2_bias), c.ln2);
    c.pre.noalias() = c.h2 * model.tensor(b.w1);
    c.pre.array().rowwise() += model.tensor(b.b1).row(0).array();
    c.act = detail::gelu(c.pre);
    x.noalias() += c.act * model.tensor(b.w2);
    x.array().rowwise() += model.tensor(b.b2).row(0).array();
  }
  fp.hf = detail::layer_norm<Scalar>(x, model.tensor(L.lnf_gain), model.tensor(L.lnf_bias), fp.lnf);
  const Matrix logits = fp.hf * emb.transpose();
  fp.logprobs = detail::log_softmax_rows(logits);
  if (!fp.logprobs.allFinite()) {
    for (Eigen::Index t = 0; t < T; ++t) {
      if (!fp.logprobs.row(t).allFinite()) {
        throw NumericError("non-finite activation at position " + std::to_string(t) +
                           " (model step " + std::to_string(model.step()) + ")");
      }
    }
  }
  return fp;
}

// Full next-token log-distribution for every position of the context.
template <typename Scalar>
MatrixX<Scalar> forward_logprobs(const PolicySnapshot<Scalar>& model,
                                 std::span<const TokenId> context) {
  return forward(model, context).logprobs;
}

// Backpropagates d(loss)/d(logits) (T x N) through the pass and returns the
// gradient with respect to the flat parameter vector.
template <typename Scalar>
VectorX<Scalar> backward(const PolicySnapshot<Scalar>& model, const ForwardPass<Scalar>& fp,
                         const MatrixX<Scalar>& dlogits) {
  using Matrix = MatrixX<Scalar>;
  using Map = Eigen::Map<Matrix>;
  const ModelConfig& cfg = model.config();
  const ParameterLayout& L = model.layout();
  const auto T = static_cast<Eigen::Index>(fp.tokens.size());
  const auto d = static_cast<Eigen::Index>(cfg.d_model);
  const auto H = static_cast<Eigen::Index>(cfg.n_heads);
  const Eigen::Index dh = d / H;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  if (dlogits.rows() != T || dlogits.cols() != static_cast<Eigen::Index>(cfg.vocab_size)) {
    throw ConfigError("dlogits shape does not match the forward pass");
  }

  VectorX<Scalar> grad = VectorX<Scalar>::Zero(L.total_size());
  auto g = [&](std::size_t idx) {
    const TensorSpec& t = L[idx];
    return Map(grad.data() + t.offset, t.rows, t.cols);
  };

  const auto emb = model.tensor(L.tok_emb);
  g(L.tok_emb).noalias() += dlogits.transpose() * fp.hf;
  Matrix dhf = dlogits * emb;
  Matrix dx = detail::layer_norm_backward<Scalar>(dhf, model.tensor(L.lnf_gain), fp.lnf,
                                                  g(L.lnf_gain), g(L.lnf_bias));

  for (std::size_t li = L.blocks.size(); li-- > 0;) {
    const auto& b = L.blocks[li];
    const auto& c = fp.blocks[li];

    // MLP branch
    g(b.w2).noalias() += c.act.transpose() * dx;
    g(b.b2) += dx.colwise().sum();
    Matrix dpre = (dx * model.tensor(b.w2).transpose()).cwiseProduct(detail::gelu_grad(c.pre));
    g(b.w1).noalias() += c.h2.transpose() * dpre;
    g(b.b1) += dpre.colwise().sum();
    const Matrix dh2 = dpre * model.tensor(b.w1).transpose();
    dx += detail::layer_norm_backward<Scalar>(dh2, model.tensor(b.ln2_gain), c.ln2, g(b.ln2_gain),
                                              g(b.ln2_bias));

    // attention branch
    g(b.wo).noalias() += c.att.transpose() * dx;
    const Matrix datt = dx * model.tensor(b.wo).transpose();
    Matrix dq(T, d), dk(T, d), dv(T, d);
    for (Eigen::Index h = 0; h < H; ++h) {
      const Matrix& P = c.probs[static_cast<std::size_t>(h)];
      const auto dout = datt.middleCols(h * dh, dh);
      const Matrix dP = dout * c.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh).noalias() = P.transpose() * dout;
      const VectorX<Scalar> rs = P.cwiseProduct(dP).rowwise().sum();
      const Matrix dS = P.cwiseProduct(dP.colwise() - rs);
      dq.middleCols(h * dh, dh).noalias() = (dS * c.k.middleCols(h * dh, dh)) * scale;
      dk.middleCols(h * dh, dh).noalias() = (dS.transpose() * c.q.middleCols(h * dh, dh)) * scale;
    }
    g(b.wq).noalias() += c.h1.transpose() * dq;
    g(b.wk).noalias() += c.h1.transpose() * dk;
    g(b.wv).noalias() += c.h1.transpose() * dv;
    Matrix dh1 = dq * model.tensor(b.wq).transpose();
    dh1.noalias() += dk * model.tensor(b.wk).transpose();
    dh1.noalias() += dv * model.tensor(b.wv).transpose();
    dx += detail::layer_norm_backward<Scalar>(dh1, model.tensor(b.ln1_gain), c.ln1, g(b.ln1_gain),
                                              g(b.ln1_bias));
  }

  auto gemb = g(L.tok_emb);
  auto gpos = g(L.pos_emb);
  for (Eigen::Index t = 0; t < T; ++t) {
    gemb.row(fp.tokens[static_cast<std::size_t>(t)]) += dx.row(t);
    gpos.row(t) += dx.row(t);
  }
  return grad;
}

// Key/value cache for token-by-token decoding. push() appends one token and
// returns the log-distribution of the next one. Results agree with
// forward_logprobs up to floating-point reassociation.
template <typename Scalar>
class IncrementalDecoder {
 public:
  explicit IncrementalDecoder(const PolicySnapshot<Scalar>& model) : model_(&model) {
    const auto& cfg = model.config();
    const auto C = static_cast<Eigen::Index>(cfg.context);
    const auto d = static_cast<Eigen::Index>(cfg.d_model);
    keys_.assign(cfg.n_layers, MatrixX<Scalar>(C, d));
    values_.assign(cfg.n_layers, MatrixX<Scalar>(C, d));
  }

  std::size_t length() const noexcept { return static_cast<std::size_t>(len_); }

  RowVectorX<Scalar> push(TokenId token) {
    using Row = RowVectorX<Scalar>;
    const PolicySnapshot<Scalar>& model = *model_;
    const ModelConfig& cfg = model.config();
    const ParameterLayout& L = model.layout();
    if (static_cast<std::size_t>(len_) >= cfg.context) {
      throw LengthError("decoder context window of " + std::to_string(cfg.context) + " exhausted");
    }
    if (token < 0 || static_cast<std::size_t>(token) >= cfg.vocab_size) {
      throw LengthError("token id " + std::to_string(token) + " outside vocabulary");
    }
    const auto d = static_cast<Eigen::Index>(cfg.d_model);
    const auto H = static_cast<Eigen::Index>(cfg.n_heads);
    const Eigen::Index dh = d / H;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
    const Eigen::Index t = len_;

    const auto emb = model.tensor(L.tok_emb);
    Row x = emb.row(token) + model.tensor(L.pos_emb).row(t);
    for (std::size_t l = 0; l < L.blocks.size(); ++l) {
      const auto& b = L.blocks[l];
      const Row h1 = norm(x, model.tensor(b.ln1_gain), model.tensor(b.ln1_bias));
      const Row q = h1 * model.tensor(b.wq);
      keys_[l].row(t).noalias() = h1 * model.tensor(b.wk);
      values_[l].row(t).noalias() = h1 * model.tensor(b.wv);
      Row att(d);
      for (Eigen::Index h = 0; h < H; ++h) {
        Row s = (q.segment(h * dh, dh) * keys_[l].block(0, h * dh, t + 1, dh).transpose()) * scale;
        s = (s.array() - s.maxCoeff()).exp().matrix();
        s /= s.sum();
        att.segment(h * dh, dh).noalias() = s * values_[l].block(0, h * dh, t + 1, dh);
      }
      x.noalias() += att * model.tensor(b.wo);
      const Row h2 = norm(x, model.tensor(b.ln2_gain), model.tensor(b.ln2_bias));
      MatrixX<Scalar> pre = h2 * model.tensor(b.w1);
      pre += model.tensor(b.b1);
      x.noalias() += detail::gelu(pre) * model.tensor(b.w2);
      x += model.tensor(b.b2);
    }
    const Row hf = norm(x, model.tensor(L.lnf_gain), model.tensor(L.lnf_bias));
    const MatrixX<Scalar> logits = hf * emb.transpose();
    ++len_;
    Row out = detail::log_softmax_rows(logits).row(0);
    if (!out.allFinite()) {
      throw NumericError("non-finite activation at position " + std::to_string(t) +
                         " (model step " + std::to_string(model.step()) + ")");
    }
    return out;
  }

 private:
  template <typename Gain, typename Bias>
  static RowVectorX<Scalar> norm(const RowVectorX<Scalar>& x, const Gain& gain, const Bias& bias) {
    const Scalar mean = x.mean();
    const RowVectorX<Scalar> c = x.array() - mean;
    const Scalar rstd = Scalar(1) / std::sqrt(c.squaredNorm() / static_cast<Scalar>(x.size()) +
                                              detail::kLayerNormEps<Scalar>);
    return (c.array() * rstd * gain.array() + bias.array()).matrix();
  }

  const PolicySnapshot<Scalar>* model_;
  std::vector<MatrixX<Scalar>> keys_;
  std::vector<MatrixX<Scalar>> values_;
  Eigen::Index len_ = 0;
};

}  // namespace covo

#endif  // COVO_MODEL_HPP_
