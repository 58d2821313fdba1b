// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode differentiation over Matrix values. A Tape records
// every operation of one forward pass; Tape::backward() walks the records in
// reverse and accumulates gradients. Parameters enter the tape by reference
// and receive their gradient in Parameter::grad (accumulated, never reset).

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "paco/tensor.hpp"

namespace paco {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;
  // Excluded from decoupled weight decay when false (biases, norms, embeddings).
  bool decay = true;

  Parameter() = default;
  Parameter(std::string n, Matrix v, bool apply_decay = true)
      : name(std::move(n)), value(std::move(v)), grad(value.rows, value.cols), decay(apply_decay) {}

  void zero_grad() {
    grad = Matrix(value.rows, value.cols);
  }
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}

  const Matrix& value() const;
  /// Gradient accumulated so far (allocated on first access).
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
  double scalar() const;
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// With grad_enabled = false every value is a constant and backward() is a no-op.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix m);
  /// Free input that receives a gradient (used for sensitivity checks).
  Var input(Matrix m);
  /// Frozen (trainable == false) parameters enter as constants.
  Var param(Parameter& p);

  /// Seeds d(loss)/d(loss) = 1 and back-propagates. Loss must be 1x1.
  void backward(Var loss);

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  Var record(Matrix value, bool requires_grad, std::function<void()> backward);
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  Matrix& grad(std::size_t id);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::function<void()> backward;
  };
  bool grad_enabled_;
  std::deque<Node> nodes_;
  std::vector<std::pair<std::size_t, Parameter*>> params_;
};

namespace ag {

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Adds a [1, cols] row to every row of a.
Var add_row(Var a, Var row);
Var scale(Var a, double s);
Var mul(Var a, Var b);

Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-6);
Var gelu(Var x);
Var relu(Var x);
Var softmax_rows(Var x);

Var slice_cols(Var x, std::size_t begin, std::size_t end);
Var concat_cols(const std::vector<Var>& parts);
Var gather_rows(Var src, const std::vector<std::size_t>& rows);
/// out = base, except out[rows[k]] = table[table_rows[k]].
Var substitute_rows(Var base, Var table, const std::vector<std::size_t>& rows,
                    const std::vector<std::size_t>& table_rows);
/// out.data[k] = x.data[index[k]], shaped [out_rows, out_cols].
Var gather(Var x, const std::vector<std::size_t>& index, std::size_t out_rows,
           std::size_t out_cols);
Var reshape(Var x, std::size_t rows, std::size_t cols);

struct Conv2dShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;
  std::size_t out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};
/// x: [H*W, Cin] channel-last; weight: [k*k*Cin, Cout] ordered (ky, kx, ci); bias: [1, Cout].
Var conv2d(Var x, Var weight, Var bias, const Conv2dShape& shape);

/// Sum of all elements, as 1x1.
Var sum(Var x);
/// mean((a - b)^2) over all elements.
Var mse(Var a, Var b);
/// Cosine of the flattened operands; defined as 0 when either norm < 1e-12.
Var cosine(Var a, Var b);
/// Mean (or sum) over rows of -log softmax(logits[r])[labels[r]].
Var cross_entropy(Var logits, const std::vector<std::size_t>& labels, bool mean = true);

}  // namespace ag
}  // namespace paco
