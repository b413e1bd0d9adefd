#ifndef POSETRAJ_AUTODIFF_TAPE_HPP
#define POSETRAJ_AUTODIFF_TAPE_HPP

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every operation of one forward pass as a node holding its
// value and a closure that pushes the node's gradient into its inputs. Nodes
// are appended in topological order, so backward() is a single reverse sweep.
// Parameters live outside the tape in a ParameterStore; their leaves read the
// stored value in place and add gradients back into the store.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace posetraj::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

class ParameterStore {
 public:
  std::size_t add(std::string name, Matrix init) {
    Matrix grad = Matrix::Zero(init.rows(), init.cols());
    params_.push_back({std::move(name), std::move(init), std::move(grad)});
    return params_.size() - 1;
  }

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.setZero();
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  /// With record_grad = false no closures are stored and parameters are
  /// read-only leaves; use for inference.
  explicit Tape(bool record_grad = true) : record_grad_(record_grad) { nodes_.reserve(256); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_grad_; }

  Var constant(Matrix v) { return push(std::move(v), false, nullptr); }

  /// Leaf whose gradient is retained after backward().
  Var input(Matrix v) { return push(std::move(v), record_grad_, nullptr); }

  Var param(ParameterStore& store, std::size_t index) {
    Node n;
    n.external = &store[index].value;
    n.needs_grad = record_grad_;
    if (record_grad_) {
      Parameter* p = &store[index];
      n.backward = [p](Tape& t, std::size_t self) {
        const Matrix& g = t.nodes_[self].grad;
        if (g.size() != 0) p->grad += g;
      };
    }
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  Var param(const ParameterStore& store, std::size_t index) {
    Node n;
    n.external = &store[index].value;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  Var push(Matrix value, bool needs_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad && record_grad_;
    if (n.needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  const Matrix& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external != nullptr ? *n.external : n.value;
  }

  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  /// Gradient of a node after backward(); empty if nothing flowed into it.
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }

  template <typename Expr>
  void accumulate(std::size_t id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and sweeps the tape backwards.
  void backward(Var root) {
    if (!record_grad_) throw std::logic_error("backward() on a non-recording tape");
    const Matrix& v = value(root.id);
    if (v.rows() != 1 || v.cols() != 1) throw std::logic_error("backward() root must be scalar");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    nodes_[root.id].grad = Matrix::Ones(1, 1);
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.needs_grad && n.backward && n.grad.size() != 0) n.backward(*this, i);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    Backward backward;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  bool record_grad_;
};

inline const Matrix& Var::value() const { return tape->value(id); }

}  // namespace posetraj::ad

#endif  // POSETRAJ_AUTODIFF_TAPE_HPP
