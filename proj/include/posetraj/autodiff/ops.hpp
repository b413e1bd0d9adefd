#ifndef POSETRAJ_AUTODIFF_OPS_HPP
#define POSETRAJ_AUTODIFF_OPS_HPP

#include "posetraj/autodiff/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace posetraj::ad {

namespace detail {

inline void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

inline bool any_grad(Tape& t, std::initializer_list<Var> vs) {
  for (const Var& v : vs)
    if (t.needs_grad(v.id)) return true;
  return false;
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  detail::require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix out = a.value() * b.value();
  return t.push(std::move(out), detail::any_grad(t, {a, b}), [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(a.id)) t.accumulate(a.id, g * t.value(b.id).transpose());
    if (t.needs_grad(b.id)) t.accumulate(b.id, t.value(a.id).transpose() * g);
  });
}

inline Var add(Var a, Var b) {
  Tape& t = *a.tape;
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Matrix out = a.value() + b.value();
  return t.push(std::move(out), detail::any_grad(t, {a, b}), [a, b](Tape& t, std::size_t self) {
    t.accumulate(a.id, t.grad(self));
    t.accumulate(b.id, t.grad(self));
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = *a.tape;
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  Matrix out = a.value() - b.value();
  return t.push(std::move(out), detail::any_grad(t, {a, b}), [a, b](Tape& t, std::size_t self) {
    t.accumulate(a.id, t.grad(self));
    if (t.needs_grad(b.id)) t.accumulate(b.id, -t.grad(self));
  });
}

inline Var hadamard(Var a, Var b) {
  Tape& t = *a.tape;
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard: shape mismatch");
  Matrix out = a.value().cwiseProduct(b.value());
  return t.push(std::move(out), detail::any_grad(t, {a, b}), [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(a.id)) t.accumulate(a.id, g.cwiseProduct(t.value(b.id)));
    if (t.needs_grad(b.id)) t.accumulate(b.id, g.cwiseProduct(t.value(a.id)));
  });
}

inline Var scale(Var a, double s) {
  Tape& t = *a.tape;
  Matrix out = a.value() * s;
  return t.push(std::move(out), t.needs_grad(a.id),
                [a, s](Tape& t, std::size_t self) { t.accumulate(a.id, t.grad(self) * s); });
}

/// a + row, where row is 1 x cols and broadcast over every row of a.
inline Var add_row(Var a, Var row) {
  Tape& t = *a.tape;
  detail::require(row.rows() == 1 && row.cols() == a.cols(), "add_row: row shape mismatch");
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.push(std::move(out), detail::any_grad(t, {a, row}), [a, row](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    t.accumulate(a.id, g);
    if (t.needs_grad(row.id)) t.accumulate(row.id, g.colwise().sum());
  });
}

inline Var relu(Var a) {
  Tape& t = *a.tape;
  Matrix out = a.value().cwiseMax(0.0);
  return t.push(std::move(out), t.needs_grad(a.id), [a](Tape& t, std::size_t self) {
    const Matrix& x = t.value(a.id);
    t.accumulate(a.id, t.grad(self).cwiseProduct((x.array() > 0.0).cast<double>().matrix()));
  });
}

inline Var tanh(Var a) {
  Tape& t = *a.tape;
  Matrix out = a.value().array().tanh().matrix();
  return t.push(std::move(out), t.needs_grad(a.id), [a](Tape& t, std::size_t self) {
    const Matrix& y = t.value(self);
    t.accumulate(a.id, (t.grad(self).array() * (1.0 - y.array().square())).matrix());
  });
}

inline Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return t.push(std::move(out), t.needs_grad(a.id), [a](Tape& t, std::size_t self) {
    const Matrix& y = t.value(self);
    t.accumulate(a.id, (t.grad(self).array() * y.array() * (1.0 - y.array())).matrix());
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  detail::require(!parts.empty(), "concat_cols: no inputs");
  Tape& t = *parts.front().tape;
  const Index rows = parts.front().rows();
  Index cols = 0;
  bool grad = false;
  for (const Var& p : parts) {
    detail::require(p.rows() == rows, "concat_cols: row count mismatch");
    cols += p.cols();
    grad = grad || t.needs_grad(p.id);
  }
  Matrix out(rows, cols);
  Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return t.push(std::move(out), grad, [parts](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Index c = 0;
    for (const Var& p : parts) {
      const Index w = t.value(p.id).cols();
      if (t.needs_grad(p.id)) t.accumulate(p.id, g.middleCols(c, w));
      c += w;
    }
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  detail::require(!parts.empty(), "concat_rows: no inputs");
  Tape& t = *parts.front().tape;
  const Index cols = parts.front().cols();
  Index rows = 0;
  bool grad = false;
  for (const Var& p : parts) {
    detail::require(p.cols() == cols, "concat_rows: column count mismatch");
    rows += p.rows();
    grad = grad || t.needs_grad(p.id);
  }
  Matrix out(rows, cols);
  Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return t.push(std::move(out), grad, [parts](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Index r = 0;
    for (const Var& p : parts) {
      const Index h = t.value(p.id).rows();
      if (t.needs_grad(p.id)) t.accumulate(p.id, g.middleRows(r, h));
      r += h;
    }
  });
}

inline Var slice_cols(Var a, Index begin, Index count) {
  Tape& t = *a.tape;
  detail::require(begin >= 0 && begin + count <= a.cols(), "slice_cols: out of range");
  Matrix out = a.value().middleCols(begin, count);
  return t.push(std::move(out), t.needs_grad(a.id), [a, begin, count](Tape& t, std::size_t self) {
    Matrix g = Matrix::Zero(t.value(a.id).rows(), t.value(a.id).cols());
    g.middleCols(begin, count) = t.grad(self);
    t.accumulate(a.id, g);
  });
}

/// out.row(i) = a.row(index[i]); repeated indices accumulate on backward.
inline Var gather_rows(Var a, std::vector<Index> index) {
  Tape& t = *a.tape;
  Matrix out(static_cast<Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    detail::require(index[i] >= 0 && index[i] < a.rows(), "gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = a.value().row(index[i]);
  }
  return t.push(std::move(out), t.needs_grad(a.id),
                [a, index = std::move(index)](Tape& t, std::size_t self) {
                  const Matrix& g = t.grad(self);
                  Matrix ga = Matrix::Zero(t.value(a.id).rows(), t.value(a.id).cols());
                  for (std::size_t i = 0; i < index.size(); ++i) ga.row(index[i]) += g.row(static_cast<Index>(i));
                  t.accumulate(a.id, ga);
                });
}

/// Weighted row pooling: out.row(s) = sum over (r, w) in pools[s] of w * a.row(r).
/// An empty pool yields a zero row.
using RowPool = std::vector<std::pair<Index, double>>;

inline Var pool_rows(Var a, std::vector<RowPool> pools) {
  Tape& t = *a.tape;
  Matrix out = Matrix::Zero(static_cast<Index>(pools.size()), a.cols());
  for (std::size_t s = 0; s < pools.size(); ++s)
    for (const auto& [r, w] : pools[s]) {
      detail::require(r >= 0 && r < a.rows(), "pool_rows: index out of range");
      out.row(static_cast<Index>(s)) += w * a.value().row(r);
    }
  return t.push(std::move(out), t.needs_grad(a.id),
                [a, pools = std::move(pools)](Tape& t, std::size_t self) {
                  const Matrix& g = t.grad(self);
                  Matrix ga = Matrix::Zero(t.value(a.id).rows(), t.value(a.id).cols());
                  for (std::size_t s = 0; s < pools.size(); ++s)
                    for (const auto& [r, w] : pools[s]) ga.row(r) += w * g.row(static_cast<Index>(s));
                  t.accumulate(a.id, ga);
                });
}

/// Inverted dropout. Identity when rate == 0 or the tape does not record.
template <typename Rng>
Var dropout(Var a, double rate, Rng& rng) {
  Tape& t = *a.tape;
  if (rate <= 0.0 || !t.recording()) return a;
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix mask(a.rows(), a.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  Matrix out = a.value().cwiseProduct(mask);
  return t.push(std::move(out), t.needs_grad(a.id), [a, mask = std::move(mask)](Tape& t, std::size_t self) {
    t.accumulate(a.id, t.grad(self).cwiseProduct(mask));
  });
}

/// Sum of all entries, as a 1x1 node.
inline Var sum(Var a) {
  Tape& t = *a.tape;
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), t.needs_grad(a.id), [a](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    t.accumulate(a.id, Matrix::Constant(t.value(a.id).rows(), t.value(a.id).cols(), g));
  });
}

/// Mean over rows of the squared L2 distance between pred rows and target rows.
inline Var mean_squared_distance(Var pred, const Matrix& target) {
  Tape& t = *pred.tape;
  detail::require(pred.rows() == target.rows() && pred.cols() == target.cols(),
                  "mean_squared_distance: shape mismatch");
  detail::require(pred.rows() > 0, "mean_squared_distance: empty input");
  Matrix diff = pred.value() - target;
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / static_cast<double>(diff.rows());
  return t.push(std::move(out), t.needs_grad(pred.id),
                [pred, diff = std::move(diff)](Tape& t, std::size_t self) {
                  const double g = t.grad(self)(0, 0);
                  t.accumulate(pred.id, diff * (2.0 * g / static_cast<double>(diff.rows())));
                });
}

// ---------------------------------------------------------------------------
// Segmented multi-head attention

/// A block of query rows attending over a block of key/value rows.
struct AttentionSegment {
  Index q_begin = 0;
  Index q_len = 0;
  Index k_begin = 0;
  Index k_len = 0;
};

struct AttentionSpec {
  std::vector<AttentionSegment> segments;
  int heads = 1;
  /// Query i of a segment sees key j only if j <= i + (k_len - q_len).
  bool causal = false;
  /// Optional per-key-row validity; invalid keys receive zero weight.
  std::shared_ptr<const std::vector<char>> key_valid;
};

/// Attention weights of one forward call: weights[s * heads + h] is q_len x k_len.
using AttentionWeights = std::vector<Matrix>;

/// Scaled dot-product attention applied independently per segment and head.
/// q, k, v have the same column count D, split into `heads` slices of D/heads.
/// A query row with no admissible key produces a zero output row.
inline Var attention(Var q, Var k, Var v, const AttentionSpec& spec,
                     AttentionWeights* weights_out = nullptr) {
  Tape& t = *q.tape;
  const Index d = q.cols();
  detail::require(k.cols() == d && v.cols() == d, "attention: q/k/v widths differ");
  detail::require(k.rows() == v.rows(), "attention: k/v row counts differ");
  detail::require(spec.heads >= 1 && d % spec.heads == 0, "attention: width not divisible by heads");
  const int heads = spec.heads;
  const Index dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  const Matrix& Q = q.value();
  const Matrix& K = k.value();
  const Matrix& V = v.value();
  Matrix out = Matrix::Zero(Q.rows(), d);
  auto weights = std::make_shared<AttentionWeights>();
  weights->reserve(spec.segments.size() * static_cast<std::size_t>(heads));

  for (const auto& seg : spec.segments) {
    detail::require(seg.q_begin + seg.q_len <= Q.rows() && seg.k_begin + seg.k_len <= K.rows(),
                    "attention: segment out of range");
    for (int h = 0; h < heads; ++h) {
      Matrix s = Q.block(seg.q_begin, h * dh, seg.q_len, dh) *
                 K.block(seg.k_begin, h * dh, seg.k_len, dh).transpose() * inv_sqrt;
      Matrix a = Matrix::Zero(seg.q_len, seg.k_len);
      for (Index i = 0; i < seg.q_len; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        auto admissible = [&](Index j) {
          if (spec.causal && j > i + (seg.k_len - seg.q_len)) return false;
          if (spec.key_valid && !(*spec.key_valid)[static_cast<std::size_t>(seg.k_begin + j)]) return false;
          return true;
        };
        for (Index j = 0; j < seg.k_len; ++j)
          if (admissible(j)) mx = std::max(mx, s(i, j));
        if (!std::isfinite(mx)) continue;
        double z = 0.0;
        for (Index j = 0; j < seg.k_len; ++j)
          if (admissible(j)) {
            a(i, j) = std::exp(s(i, j) - mx);
            z += a(i, j);
          }
        a.row(i) /= z;
      }
      out.block(seg.q_begin, h * dh, seg.q_len, dh) = a * V.block(seg.k_begin, h * dh, seg.k_len, dh);
      weights->push_back(std::move(a));
    }
  }
  if (weights_out != nullptr) *weights_out = *weights;

  auto segments = spec.segments;
  return t.push(
      std::move(out), detail::any_grad(t, {q, k, v}),
      [q, k, v, heads, dh, inv_sqrt, weights, segments = std::move(segments)](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const Matrix& Q = t.value(q.id);
        const Matrix& K = t.value(k.id);
        const Matrix& V = t.value(v.id);
        Matrix gq = Matrix::Zero(Q.rows(), Q.cols());
        Matrix gk = Matrix::Zero(K.rows(), K.cols());
        Matrix gv = Matrix::Zero(V.rows(), V.cols());
        std::size_t w = 0;
        for (const auto& seg : segments) {
          for (int h = 0; h < heads; ++h, ++w) {
            const Matrix& a = (*weights)[w];
            const auto g = G.block(seg.q_begin, h * dh, seg.q_len, dh);
            const auto vb = V.block(seg.k_begin, h * dh, seg.k_len, dh);
            gv.block(seg.k_begin, h * dh, seg.k_len, dh) += a.transpose() * g;
            Matrix ga = g * vb.transpose();
            Eigen::VectorXd rowdot = (ga.cwiseProduct(a)).rowwise().sum();
            Matrix gs = a.cwiseProduct(ga.colwise() - rowdot) * inv_sqrt;
            gq.block(seg.q_begin, h * dh, seg.q_len, dh) += gs * K.block(seg.k_begin, h * dh, seg.k_len, dh);
            gk.block(seg.k_begin, h * dh, seg.k_len, dh) += gs.transpose() * Q.block(seg.q_begin, h * dh, seg.q_len, dh);
          }
        }
        if (t.needs_grad(q.id)) t.accumulate(q.id, gq);
        if (t.needs_grad(k.id)) t.accumulate(k.id, gk);
        if (t.needs_grad(v.id)) t.accumulate(v.id, gv);
      });
}

}  // namespace posetraj::ad

#endif  // POSETRAJ_AUTODIFF_OPS_HPP
