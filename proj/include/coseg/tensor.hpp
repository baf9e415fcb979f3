/* Copyright 2026 The coseg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace coseg {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

// Dense row-major array of doubles. Plain value type; gradients live on Var.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor column(std::span<const double> values);
  static Tensor identity(std::size_t n);
  static Tensor scalar(double value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Matrix helpers; valid for rank-2 tensors only.
  std::size_t rows() const;
  std::size_t cols() const;
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  // Same data, new extents (product must agree).
  Tensor reshaped(Shape shape) const;
  Tensor transposed() const;

  bool all_finite() const;
  double max_abs() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

bool operator==(const Tensor& a, const Tensor& b);

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
};

}  // namespace detail

// Handle onto a node of the reverse-mode graph. Copies share the node.
class Var {
 public:
  Var() = default;

  static Var constant(Tensor value);
  // Leaf whose gradient persists and accumulates across backward() calls.
  static Var leaf(Tensor value);

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  // Gradient buffer, or nullopt before any accumulation.
  std::optional<Tensor> grad() const;
  void zero_grad();
  bool valid() const { return static_cast<bool>(node_); }

  // Overwrites the value of a leaf in place (optimizer updates).
  Tensor& mutable_leaf_value();

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  friend Var make_result(Tensor value, std::vector<Var> inputs,
                         std::function<void(detail::Node&)> backward);
  std::shared_ptr<detail::Node> node_;
};

// Builds an interior node. `backward` is only attached when an input requires grad.
Var make_result(Tensor value, std::vector<Var> inputs,
                std::function<void(detail::Node&)> backward);

struct Parameter {
  std::string name;
  Var var;
};

// Differentiable operations. All matrices are rank 2.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
// Each column is shifted by its max, exponentiated and normalized to sum 1.
Var softmax_columns(const Var& m);
Var sigmoid(const Var& t);
Var tanh(const Var& t);
// Elementwise product. `b` may also be 1×c against an r×c `a`, broadcast down the rows.
Var hadamard(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
// Adds an r×1 column `b` to every column of the r×c matrix `a`.
Var add_bias(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var concat_rows(const Var& a, const Var& b);
// Repeats an r×1 column `n` times: r×n.
Var tile_columns(const Var& column, std::size_t n);
Var reshape(const Var& a, Shape shape);
Var sum(const Var& a);
Var mean(std::span<const Var> items);
// c×h×w → (4c)×((h/2)·(w/2)); gathers each non-overlapping 2×2 patch into one column.
Var space_to_depth2(const Var& image);

// Reverse pass from a single-element `loss`. Leaf gradients accumulate additively.
void backward(const Var& loss);
void zero_grad(std::span<Parameter> params);

// Raw kernels shared with the oracles-free fast paths.
namespace kernels {
// c(m×n) += a(m×k) · b(k×n)
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
// c(m×k) += a(m×n) · b(k×n)ᵀ
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
             std::size_t k);
// c(k×n) += a(m×k)ᵀ · b(m×n)
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
}  // namespace kernels

}  // namespace coseg
