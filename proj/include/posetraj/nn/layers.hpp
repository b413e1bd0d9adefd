#ifndef POSETRAJ_NN_LAYERS_HPP
#define POSETRAJ_NN_LAYERS_HPP

#include "posetraj/autodiff/ops.hpp"
#include "posetraj/autodiff/tape.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace posetraj::nn {

using ad::Index;
using ad::Matrix;
using ad::ParameterStore;
using ad::Tape;
using ad::Var;

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline Matrix fan_in_uniform(Index rows, Index cols, Index fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

/// Binds parameters of a store onto a tape, one leaf per parameter per tape.
class Binder {
 public:
  Binder(Tape& tape, ParameterStore& store) : tape_(&tape), mutable_(&store), store_(&store) {}
  Binder(Tape& tape, const ParameterStore& store) : tape_(&tape), store_(&store) {}

  Var operator()(std::size_t index) {
    if (cache_.size() <= index) cache_.resize(store_->size());
    if (!cache_[index]) {
      cache_[index] = (mutable_ != nullptr && tape_->recording()) ? tape_->param(*mutable_, index)
                                                                   : tape_->param(*store_, index);
    }
    return *cache_[index];
  }

  Tape& tape() { return *tape_; }

 private:
  Tape* tape_;
  ParameterStore* mutable_ = nullptr;
  const ParameterStore* store_;
  std::vector<std::optional<Var>> cache_;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, Index in, Index out, std::mt19937_64& rng,
         bool bias = true)
      : in_(in), out_(out) {
    weight_ = store.add(name + ".weight", fan_in_uniform(in, out, in, rng));
    if (bias) bias_ = store.add(name + ".bias", fan_in_uniform(1, out, in, rng));
  }

  Var operator()(Binder& b, Var x) const {
    Var y = ad::matmul(x, b(weight_));
    return bias_ ? ad::add_row(y, b(*bias_)) : y;
  }

  Index in() const { return in_; }
  Index out() const { return out_; }
  std::size_t weight_index() const { return weight_; }
  std::optional<std::size_t> bias_index() const { return bias_; }

 private:
  Index in_ = 0;
  Index out_ = 0;
  std::size_t weight_ = 0;
  std::optional<std::size_t> bias_;
};

/// Feed-forward stack with ReLU between layers (none after the last).
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& name, const std::vector<Index>& widths, std::mt19937_64& rng) {
    for (std::size_t i = 0; i + 1 < widths.size(); ++i)
      layers_.emplace_back(store, name + "." + std::to_string(i), widths[i], widths[i + 1], rng);
  }

  Var operator()(Binder& b, Var x) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      x = layers_[i](b, x);
      if (i + 1 < layers_.size()) x = ad::relu(x);
    }
    return x;
  }

  const std::vector<Linear>& layers() const { return layers_; }

 private:
  std::vector<Linear> layers_;
};

/// LSTM cell, gate order (input, forget, cell, output).
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(ParameterStore& store, const std::string& name, Index in, Index hidden, std::mt19937_64& rng)
      : hidden_(hidden) {
    wx_ = store.add(name + ".wx", fan_in_uniform(in, 4 * hidden, hidden, rng));
    wh_ = store.add(name + ".wh", fan_in_uniform(hidden, 4 * hidden, hidden, rng));
    Matrix bias = Matrix::Zero(1, 4 * hidden);
    bias.middleCols(hidden, hidden).setOnes();
    b_ = store.add(name + ".bias", std::move(bias));
  }

  struct State {
    Var h;
    Var c;
  };

  State step(Binder& b, Var x, const State& s) const {
    Var gates = ad::add_row(ad::add(ad::matmul(x, b(wx_)), ad::matmul(s.h, b(wh_))), b(b_));
    Var i = ad::sigmoid(ad::slice_cols(gates, 0, hidden_));
    Var f = ad::sigmoid(ad::slice_cols(gates, hidden_, hidden_));
    Var g = ad::tanh(ad::slice_cols(gates, 2 * hidden_, hidden_));
    Var o = ad::sigmoid(ad::slice_cols(gates, 3 * hidden_, hidden_));
    Var c = ad::add(ad::hadamard(f, s.c), ad::hadamard(i, g));
    Var h = ad::hadamard(o, ad::tanh(c));
    return {h, c};
  }

  State zero_state(Tape& t, Index rows) const {
    return {t.constant(Matrix::Zero(rows, hidden_)), t.constant(Matrix::Zero(rows, hidden_))};
  }

  Index hidden() const { return hidden_; }

 private:
  Index hidden_ = 0;
  std::size_t wx_ = 0;
  std::size_t wh_ = 0;
  std::size_t b_ = 0;
};

/// Multi-head attention with separate query/key-value inputs.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, Index query_dim, Index kv_dim, Index dim,
                     int heads, std::mt19937_64& rng)
      : heads_(heads),
        q_(store, name + ".q", query_dim, dim, rng, false),
        k_(store, name + ".k", kv_dim, dim, rng, false),
        v_(store, name + ".v", kv_dim, dim, rng, false),
        o_(store, name + ".o", dim, dim, rng) {}

  Var operator()(Binder& b, Var query, Var kv, ad::AttentionSpec spec,
                 ad::AttentionWeights* weights = nullptr) const {
    spec.heads = heads_;
    Var mixed = ad::attention(q_(b, query), k_(b, kv), v_(b, kv), spec, weights);
    return o_(b, mixed);
  }

  int heads() const { return heads_; }
  const Linear& query() const { return q_; }
  const Linear& key() const { return k_; }
  const Linear& value() const { return v_; }
  const Linear& output() const { return o_; }

 private:
  int heads_ = 1;
  Linear q_, k_, v_, o_;
};

/// Self-attention + residual, then feed-forward + residual.
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(ParameterStore& store, const std::string& name, Index dim, int heads, Index ff_dim,
                   std::mt19937_64& rng)
      : attn_(store, name + ".attn", dim, dim, dim, heads, rng),
        ff1_(store, name + ".ff1", dim, ff_dim, rng),
        ff2_(store, name + ".ff2", ff_dim, dim, rng) {}

  template <typename Rng>
  Var operator()(Binder& b, Var x, const ad::AttentionSpec& spec, double dropout, Rng& rng,
                 ad::AttentionWeights* weights = nullptr) const {
    Var a = ad::dropout(attn_(b, x, x, spec, weights), dropout, rng);
    x = ad::add(x, a);
    Var f = ad::dropout(ff2_(b, ad::relu(ff1_(b, x))), dropout, rng);
    return ad::add(x, f);
  }

  const MultiHeadAttention& attention() const { return attn_; }
  const Linear& ff1() const { return ff1_; }
  const Linear& ff2() const { return ff2_; }

 private:
  MultiHeadAttention attn_;
  Linear ff1_, ff2_;
};

/// Adam with bias correction.
class Adam {
 public:
  explicit Adam(const ParameterStore& store, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : store) {
      m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }

  void step(ParameterStore& store, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < store.size(); ++i) {
      auto& p = store[i];
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
      p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
  }

  std::int64_t steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

/// Rescales all gradients so their joint L2 norm is at most max_norm. Returns the pre-clip norm.
inline double clip_grad_norm(ParameterStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& p : store) sq += p.grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : store) p.grad *= s;
  }
  return norm;
}

}  // namespace posetraj::nn

#endif  // POSETRAJ_NN_LAYERS_HPP
