// Copyright 2026 The newsrec Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Dense reverse-mode differentiation over row-major 64-bit tensors.
//
// Every op records its inputs and a backward closure on the result node when
// at least one input requires a gradient; otherwise the result is a plain
// constant and the subgraph is never revisited. Rank-1 tensors behave as a
// single row, so a bias of shape {m} broadcasts against (n, m).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "newsrec/random.hpp"

namespace newsrec::autodiff {

using Shape = std::vector<std::size_t>;

/// 1 marks a valid position, 0 a padded one.
using Mask = std::vector<std::uint8_t>;

std::size_t shape_size(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value);
  /// A (1, n) row.
  static Tensor row(std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  /// Empty when no gradient has been accumulated.
  std::span<const double> grad() const { return node_->grad; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  void zero_grad();

  /// Constant copy sharing nothing with the tape.
  Tensor detach() const;

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ for a (n, k) and b (m, k).
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor one_minus(const Tensor& a);
/// (n, m) + (m) broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& bias);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor square(const Tensor& a);

// Reductions and structure.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);

/// Row-wise softmax with max subtraction. Masked columns (same mask for every
/// row) come out exactly zero. Throws AllMasked when nothing is valid.
Tensor masked_softmax(const Tensor& logits, std::span<const std::uint8_t> mask);
Tensor softmax(const Tensor& logits);

/// Row gather from a (|V|, d) table. Rows equal to `frozen_id` never receive
/// gradient. Throws IdOutOfRange.
Tensor gather_rows(const Tensor& table, std::span<const int> ids, int frozen_id = -1);

/// Row-wise layer normalization followed by the γ/β affine map.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-12);

/// Same-padded 1-D convolution over rows. `filters` has shape (k, d, f), k odd.
Tensor conv1d(const Tensor& x, const Tensor& filters, const Tensor& bias);

/// Inverted dropout; identity when `rate` is 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng);

/// −log softmax(scores)[target] over all entries of `scores`, max-subtracted.
/// Throws NonFiniteScore.
Tensor softmax_nll(const Tensor& scores, std::size_t target = 0);

/// Reverse sweep from a single-element tensor. Throws NotScalarLoss.
void backward(const Tensor& loss);

/// Suspends tape recording on this thread, e.g. for evaluation passes.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace newsrec::autodiff
