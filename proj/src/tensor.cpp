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

#include "coseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "coseg/error.hpp"

namespace coseg {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_string(shape_) + " needs " +
                         std::to_string(shape_size(shape_)) + " values, got " +
                         std::to_string(data_.size()));
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::column(std::span<const double> values) {
  return Tensor({values.size(), 1}, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got " + shape_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got " + shape_string(shape_));
  return shape_[1];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " +
                         shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::transposed() const {
  const std::size_t r = rows(), c = cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = (*this)(i, j);
  return out;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

bool operator==(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && a.values() == b.values();
}

namespace kernels {

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
             std::size_t k) {
  // Transposing b first turns the dot-product loop into axpy updates, which
  // vectorize without reassociating the sums.
  std::vector<double> bt(n * k);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  gemm_nn(a, bt.data(), c, m, n, k);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace kernels

Tensor& detail::Node::grad_buffer() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

Var Var::constant(Tensor value) {
  Var v;
  v.node_ = std::make_shared<detail::Node>();
  v.node_->value = std::move(value);
  return v;
}

Var Var::leaf(Tensor value) {
  Var v = constant(std::move(value));
  v.node_->requires_grad = true;
  return v;
}

std::optional<Tensor> Var::grad() const {
  if (!node_ || node_->grad.shape() != node_->value.shape()) return std::nullopt;
  return node_->grad;
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor(node_->value.shape());
}

Tensor& Var::mutable_leaf_value() {
  if (!node_ || node_->backward) throw ContractError("only leaves can be updated in place");
  return node_->value;
}

Var make_result(Tensor value, std::vector<Var> inputs,
                std::function<void(detail::Node&)> backward) {
  Var out = Var::constant(std::move(value));
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Var& v) { return v.requires_grad(); });
  if (needs) {
    out.node_->requires_grad = true;
    out.node_->parents.reserve(inputs.size());
    for (auto& in : inputs) out.node_->parents.push_back(in.node_);
    out.node_->backward = std::move(backward);
  }
  return out;
}

namespace {

void require_matrix(const Var& v, const char* op) {
  if (v.shape().size() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_string(v.shape()));
  }
}

// Parent i of `self`, or nullptr when it does not take gradients.
detail::Node* grad_target(detail::Node& self, std::size_t i) {
  detail::Node* p = self.parents[i].get();
  return p->requires_grad ? p : nullptr;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner extents disagree between " +
                         shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  Tensor out({m, n});
  kernels::gemm_nn(a.value().data().data(), b.value().data().data(), out.data().data(), m,
                   k, n);
  return make_result(std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    const double* g = self.grad.data().data();
    if (auto* pa = grad_target(self, 0)) {
      kernels::gemm_nt(g, self.parents[1]->value.data().data(),
                       pa->grad_buffer().data().data(), m, n, k);
    }
    if (auto* pb = grad_target(self, 1)) {
      kernels::gemm_tn(self.parents[0]->value.data().data(), g,
                       pb->grad_buffer().data().data(), m, k, n);
    }
  });
}

Var transpose(const Var& a) {
  require_matrix(a, "transpose");
  return make_result(a.value().transposed(), {a}, [](detail::Node& self) {
    auto* pa = grad_target(self, 0);
    Tensor& ga = pa->grad_buffer();
    const std::size_t r = ga.rows(), c = ga.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga(i, j) += self.grad(j, i);
  });
}

Var softmax_columns(const Var& m) {
  require_matrix(m, "softmax_columns");
  const std::size_t r = m.rows(), c = m.cols();
  if (r == 0 || c == 0) {
    throw DimensionError("softmax_columns: empty matrix " + shape_string(m.shape()));
  }
  const Tensor& x = m.value();
  Tensor out({r, c});
  for (std::size_t j = 0; j < c; ++j) {
    double mx = x(0, j);
    for (std::size_t i = 1; i < r; ++i) mx = std::max(mx, x(i, j));
    double total = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
      out(i, j) = std::exp(x(i, j) - mx);
      total += out(i, j);
    }
    for (std::size_t i = 0; i < r; ++i) out(i, j) /= total;
  }
  return make_result(std::move(out), {m}, [r, c](detail::Node& self) {
    Tensor& gx = grad_target(self, 0)->grad_buffer();
    const Tensor& y = self.value;
    const Tensor& g = self.grad;
    for (std::size_t j = 0; j < c; ++j) {
      double dot = 0.0;
      for (std::size_t i = 0; i < r; ++i) dot += g(i, j) * y(i, j);
      for (std::size_t i = 0; i < r; ++i) gx(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

Var sigmoid(const Var& t) {
  Tensor out(t.shape());
  const auto in = t.value().data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = stable_sigmoid(in[i]);
  return make_result(std::move(out), {t}, [](detail::Node& self) {
    Tensor& gx = grad_target(self, 0)->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double s = self.value[i];
      gx[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Var tanh(const Var& t) {
  Tensor out(t.shape());
  const auto in = t.value().data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
  return make_result(std::move(out), {t}, [](detail::Node& self) {
    Tensor& gx = grad_target(self, 0)->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double y = self.value[i];
      gx[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Var hadamard(const Var& a, const Var& b) {
  if (a.shape() == b.shape()) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    return make_result(std::move(out), {a, b}, [](detail::Node& self) {
      const Tensor& va = self.parents[0]->value;
      const Tensor& vb = self.parents[1]->value;
      if (auto* pa = grad_target(self, 0)) {
        Tensor& ga = pa->grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * vb[i];
      }
      if (auto* pb = grad_target(self, 1)) {
        Tensor& gb = pb->grad_buffer();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i] * va[i];
      }
    });
  }
  const bool row_broadcast = a.shape().size() == 2 && b.shape().size() == 2 &&
                             b.rows() == 1 && b.cols() == a.cols();
  if (!row_broadcast) {
    throw DimensionError("hadamard: incompatible shapes " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
  }
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out({r, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) = a.value()(i, j) * b.value()(0, j);
  return make_result(std::move(out), {a, b}, [r, c](detail::Node& self) {
    const Tensor& va = self.parents[0]->value;
    const Tensor& vb = self.parents[1]->value;
    if (auto* pa = grad_target(self, 0)) {
      Tensor& ga = pa->grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga(i, j) += self.grad(i, j) * vb(0, j);
    }
    if (auto* pb = grad_target(self, 1)) {
      Tensor& gb = pb->grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gb(0, j) += self.grad(i, j) * va(i, j);
    }
  });
}

Var add(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result(std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (auto* t = grad_target(self, p)) {
        Tensor& g = t->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Var add_bias(const Var& a, const Var& b) {
  require_matrix(a, "add_bias");
  require_matrix(b, "add_bias");
  const std::size_t r = a.rows(), c = a.cols();
  if (b.rows() != r || b.cols() != 1) {
    throw DimensionError("add_bias: bias " + shape_string(b.shape()) +
                         " does not match rows of " + shape_string(a.shape()));
  }
  Tensor out({r, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) = a.value()(i, j) + b.value()(i, 0);
  return make_result(std::move(out), {a, b}, [r, c](detail::Node& self) {
    if (auto* pa = grad_target(self, 0)) {
      Tensor& ga = pa->grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    }
    if (auto* pb = grad_target(self, 1)) {
      Tensor& gb = pb->grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gb(i, 0) += self.grad(i, j);
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * factor;
  return make_result(std::move(out), {a}, [factor](detail::Node& self) {
    Tensor& g = grad_target(self, 0)->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Var concat_rows(const Var& a, const Var& b) {
  require_matrix(a, "concat_rows");
  require_matrix(b, "concat_rows");
  if (a.cols() != b.cols()) {
    throw DimensionError("concat_rows: column counts differ between " +
                         shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  const std::size_t split = a.value().size();
  std::vector<double> data(a.value().values());
  data.insert(data.end(), b.value().values().begin(), b.value().values().end());
  Tensor out({a.rows() + b.rows(), a.cols()}, std::move(data));
  return make_result(std::move(out), {a, b}, [split](detail::Node& self) {
    if (auto* pa = grad_target(self, 0)) {
      Tensor& ga = pa->grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    }
    if (auto* pb = grad_target(self, 1)) {
      Tensor& gb = pb->grad_buffer();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[split + i];
    }
  });
}

Var tile_columns(const Var& column, std::size_t n) {
  require_matrix(column, "tile_columns");
  if (column.cols() != 1) {
    throw DimensionError("tile_columns: expected a column, got " +
                         shape_string(column.shape()));
  }
  const std::size_t r = column.rows();
  Tensor out({r, n});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = column.value()[i];
  return make_result(std::move(out), {column}, [r, n](detail::Node& self) {
    Tensor& g = grad_target(self, 0)->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i] += self.grad(i, j);
  });
}

Var reshape(const Var& a, Shape shape) {
  return make_result(a.value().reshaped(std::move(shape)), {a}, [](detail::Node& self) {
    Tensor& g = grad_target(self, 0)->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return make_result(Tensor::scalar(total), {a}, [](detail::Node& self) {
    Tensor& g = grad_target(self, 0)->grad_buffer();
    const double up = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += up;
  });
}

Var mean(std::span<const Var> items) {
  if (items.empty()) throw ContractError("mean: no inputs");
  if (items.size() == 1) return items.front();
  Var acc = items.front();
  for (std::size_t i = 1; i < items.size(); ++i) acc = add(acc, items[i]);
  return scale(acc, 1.0 / static_cast<double>(items.size()));
}

Var space_to_depth2(const Var& image) {
  const Shape& s = image.shape();
  if (s.size() != 3 || s[1] % 2 != 0 || s[2] % 2 != 0 || s[1] == 0 || s[2] == 0) {
    throw DimensionError("space_to_depth2: expected c×h×w with even h, w; got " +
                         shape_string(s));
  }
  const std::size_t c = s[0], h = s[1], w = s[2];
  const std::size_t oh = h / 2, ow = w / 2;
  // Flat source index for every output element.
  std::vector<std::size_t> gather(c * 4 * oh * ow);
  Tensor out({c * 4, oh * ow});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t dy = 0; dy < 2; ++dy)
      for (std::size_t dx = 0; dx < 2; ++dx)
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t x = 0; x < ow; ++x) {
            const std::size_t row = ch * 4 + dy * 2 + dx;
            const std::size_t dst = row * oh * ow + y * ow + x;
            const std::size_t src = (ch * h + 2 * y + dy) * w + 2 * x + dx;
            gather[dst] = src;
            out[dst] = image.value()[src];
          }
  return make_result(std::move(out), {image},
                     [gather = std::move(gather)](detail::Node& self) {
                       Tensor& g = grad_target(self, 0)->grad_buffer();
                       for (std::size_t i = 0; i < gather.size(); ++i)
                         g[gather[i]] += self.grad[i];
                     });
}

void backward(const Var& loss) {
  if (!loss.valid() || loss.value().size() != 1) {
    throw ContractError("backward: loss must be a single-element tensor, got " +
                        (loss.valid() ? shape_string(loss.shape()) : std::string("null")));
  }
  if (!loss.requires_grad()) return;

  // Post-order DFS: every node appears after all of its parents.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order)
    if (n->backward) n->grad = Tensor(n->value.shape());
  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

void zero_grad(std::span<Parameter> params) {
  for (auto& p : params) p.var.zero_grad();
}

}  // namespace coseg
