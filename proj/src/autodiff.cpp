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

#include "newsrec/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>

#include "newsrec/error.hpp"

namespace newsrec::autodiff {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::vector<double>& Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

namespace {

std::string shape_str(const Shape& s) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < s.size(); ++i) out << (i ? "," : "") << s[i];
  out << ')';
  return out.str();
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw Error(ErrorKind::ShapeMismatch,
              std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

using BackwardFn = std::function<void(Node&)>;

thread_local bool g_grad_enabled = true;

// Wraps a computed value into a tape node. The closure is only attached when
// some input needs a gradient.
Tensor make(Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs,
            BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled)
    for (const Tensor* t : inputs) needs = needs || t->requires_grad();
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const Tensor* t : inputs) node->inputs.push_back(t->node_ptr());
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

Tensor make_n(Shape shape, std::vector<double> value, std::span<const Tensor> inputs, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    for (const Tensor& t : inputs) node->inputs.push_back(t.node_ptr());
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace {

inline bool wants(const Node& self, std::size_t i) { return self.inputs[i]->requires_grad; }
inline std::vector<double>& grad_of(Node& self, std::size_t i) { return self.inputs[i]->ensure_grad(); }
inline const std::vector<double>& value_of(const Node& self, std::size_t i) { return self.inputs[i]->value; }

Shape matrix_shape(std::size_t r, std::size_t c) { return {r, c}; }

template <typename F, typename D>
Tensor unary(const Tensor& a, F f, D df) {
  std::vector<double> out(a.size());
  const auto in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make(a.shape(), std::move(out), {&a}, [df](Node& self) {
    auto& g = grad_of(self, 0);
    const auto& x = value_of(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(x[i], self.value[i]);
  });
}

}  // namespace

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw Error(ErrorKind::ShapeMismatch, "tensor data length does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return from({1, n}, std::move(values));
}

std::size_t Tensor::rows() const {
  const auto& s = node_->shape;
  return s.size() < 2 ? 1 : s[0];
}

std::size_t Tensor::cols() const {
  const auto& s = node_->shape;
  if (s.empty()) return 1;
  if (s.size() == 1) return s[0];
  return std::accumulate(s.begin() + 1, s.end(), std::size_t{1}, std::multiplies<>());
}

double Tensor::item() const {
  if (size() != 1) throw Error(ErrorKind::ShapeMismatch, "item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

Tensor Tensor::detach() const { return from(shape(), node_->value); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) shape_error("matmul", a, b);
  std::vector<double> out(n * m, 0.0);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = out.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
    }
  }
  return make(matrix_shape(n, m), std::move(out), {&a, &b}, [n, k, m](Node& self) {
    const auto& dc = self.grad;
    const auto& av = value_of(self, 0);
    const auto& bv = value_of(self, 1);
    if (wants(self, 0)) {
      auto& da = grad_of(self, 0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += dc[i * m + j] * bv[p * m + j];
          da[i * k + p] += acc;
        }
    }
    if (wants(self, 1)) {
      auto& db = grad_of(self, 1);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < m; ++j) db[p * m + j] += aip * dc[i * m + j];
        }
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  if (b.cols() != k) shape_error("matmul_nt", a, b);
  std::vector<double> out(n * m, 0.0);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += av[i * k + p] * bv[j * k + p];
      out[i * m + j] = acc;
    }
  return make(matrix_shape(n, m), std::move(out), {&a, &b}, [n, k, m](Node& self) {
    const auto& dc = self.grad;
    const auto& av = value_of(self, 0);
    const auto& bv = value_of(self, 1);
    if (wants(self, 0)) {
      auto& da = grad_of(self, 0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          const double g = dc[i * m + j];
          if (g == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) da[i * k + p] += g * bv[j * k + p];
        }
    }
    if (wants(self, 1)) {
      auto& db = grad_of(self, 1);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          const double g = dc[i * m + j];
          if (g == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) db[j * k + p] += g * av[i * k + p];
        }
    }
  });
}

Tensor transpose(const Tensor& a) {
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(n * m);
  const auto av = a.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = av[i * m + j];
  return make(matrix_shape(m, n), std::move(out), {&a}, [n, m](Node& self) {
    auto& da = grad_of(self, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) da[i * m + j] += self.grad[j * n + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) shape_error("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return make(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    for (std::size_t t = 0; t < 2; ++t) {
      if (!wants(self, t)) continue;
      auto& g = grad_of(self, t);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) shape_error("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return make(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    if (wants(self, 0)) {
      auto& g = grad_of(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      auto& g = grad_of(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) shape_error("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return make(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const auto& av = value_of(self, 0);
    const auto& bv = value_of(self, 1);
    if (wants(self, 0)) {
      auto& g = grad_of(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (wants(self, 1)) {
      auto& g = grad_of(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor one_minus(const Tensor& a) {
  return unary(
      a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
  const std::size_t n = a.rows(), m = a.cols();
  if (bias.size() != m) shape_error("add_row", a, bias);
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = bias.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += bv[j];
  return make(a.shape(), std::move(out), {&a, &bias}, [n, m](Node& self) {
    if (wants(self, 0)) {
      auto& g = grad_of(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      auto& g = grad_of(self, 1);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) g[j] += self.grad[i * m + j];
    }
  });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  return make({}, {acc}, {&a}, [](Node& self) {
    auto& g = grad_of(self, 0);
    for (double& gi : g) gi += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw Error(ErrorKind::ShapeMismatch, "reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return make(std::move(shape), std::move(out), {&a}, [](Node& self) {
    auto& g = grad_of(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw Error(ErrorKind::ShapeMismatch, "concat_cols of nothing");
  const std::size_t n = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != n) shape_error("concat_cols", parts[0], p);
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(p.values().data() + i * w, w, out.data() + i * total + offset);
    offset += w;
  }
  return make_n(matrix_shape(n, total), std::move(out), parts, [n, total, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t t = 0; t < widths.size(); ++t) {
      const std::size_t w = widths[t];
      if (wants(self, t)) {
        auto& g = grad_of(self, t);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * total + off + j];
      }
      off += w;
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw Error(ErrorKind::ShapeMismatch, "concat_rows of nothing");
  const std::size_t m = parts[0].cols();
  std::size_t total_rows = 0;
  std::vector<std::size_t> sizes;
  for (const Tensor& p : parts) {
    if (p.cols() != m) shape_error("concat_rows", parts[0], p);
    total_rows += p.rows();
    sizes.push_back(p.size());
  }
  std::vector<double> out;
  out.reserve(total_rows * m);
  for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return make_n(matrix_shape(total_rows, m), std::move(out), parts, [sizes](Node& self) {
    std::size_t off = 0;
    for (std::size_t t = 0; t < sizes.size(); ++t) {
      if (wants(self, t)) {
        auto& g = grad_of(self, t);
        for (std::size_t i = 0; i < sizes[t]; ++i) g[i] += self.grad[off + i];
      }
      off += sizes[t];
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  const std::size_t n = a.rows(), m = a.cols();
  if (begin + count > m) throw Error(ErrorKind::ShapeMismatch, "slice_cols out of range");
  std::vector<double> out(n * count);
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(a.values().data() + i * m + begin, count, out.data() + i * count);
  return make(matrix_shape(n, count), std::move(out), {&a}, [n, m, begin, count](Node& self) {
    auto& g = grad_of(self, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < count; ++j) g[i * m + begin + j] += self.grad[i * count + j];
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  const std::size_t n = a.rows(), m = a.cols();
  if (begin + count > n) throw Error(ErrorKind::ShapeMismatch, "slice_rows out of range");
  std::vector<double> out(a.values().begin() + begin * m, a.values().begin() + (begin + count) * m);
  return make(matrix_shape(count, m), std::move(out), {&a}, [m, begin](Node& self) {
    auto& g = grad_of(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * m + i] += self.grad[i];
  });
}

Tensor masked_softmax(const Tensor& logits, std::span<const std::uint8_t> mask) {
  const std::size_t n = logits.rows(), m = logits.cols();
  if (!mask.empty() && mask.size() != m) {
    throw Error(ErrorKind::ShapeMismatch, "mask length " + std::to_string(mask.size()) + " vs " + std::to_string(m));
  }
  const auto valid = [&](std::size_t j) { return mask.empty() || mask[j] != 0; };
  bool any = false;
  for (std::size_t j = 0; j < m; ++j) any = any || valid(j);
  if (!any) throw Error(ErrorKind::AllMasked, "softmax over fully masked input");

  std::vector<double> out(n * m, 0.0);
  const auto x = logits.values();
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < m; ++j)
      if (valid(j)) mx = std::max(mx, x[i * m + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j)
      if (valid(j)) z += (out[i * m + j] = std::exp(x[i * m + j] - mx));
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] /= z;
  }
  return make(logits.shape(), std::move(out), {&logits}, [n, m](Node& self) {
    auto& g = grad_of(self, 0);
    const auto& y = self.value;
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += y[i * m + j] * self.grad[i * m + j];
      for (std::size_t j = 0; j < m; ++j) g[i * m + j] += y[i * m + j] * (self.grad[i * m + j] - dot);
    }
  });
}

Tensor softmax(const Tensor& logits) { return masked_softmax(logits, {}); }

Tensor gather_rows(const Tensor& table, std::span<const int> ids, int frozen_id) {
  const std::size_t rows = table.rows(), d = table.cols();
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows) {
      throw Error(ErrorKind::IdOutOfRange, "id " + std::to_string(ids[i]) + " outside table of " + std::to_string(rows));
    }
    std::copy_n(table.values().data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return make(matrix_shape(ids.size(), d), std::move(out), {&table}, [idv, d, frozen_id](Node& self) {
    auto& g = grad_of(self, 0);
    for (std::size_t i = 0; i < idv.size(); ++i) {
      if (idv[i] == frozen_id) continue;
      double* dst = g.data() + static_cast<std::size_t>(idv[i]) * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += self.grad[i * d + j];
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t n = x.rows(), m = x.cols();
  if (gamma.size() != m || beta.size() != m) shape_error("layer_norm", x, gamma);
  std::vector<double> normed(n * m), out(n * m), inv_std(n);
  const auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < m; ++j) mu += xv[i * m + j];
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) var += (xv[i * m + j] - mu) * (xv[i * m + j] - mu);
    var /= static_cast<double>(m);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < m; ++j) {
      normed[i * m + j] = (xv[i * m + j] - mu) * inv_std[i];
      out[i * m + j] = gamma.values()[j] * normed[i * m + j] + beta.values()[j];
    }
  }
  return make(x.shape(), std::move(out), {&x, &gamma, &beta},
              [n, m, normed = std::move(normed), inv_std = std::move(inv_std)](Node& self) {
                const auto& gm = value_of(self, 1);
                if (wants(self, 1)) {
                  auto& g = grad_of(self, 1);
                  for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < m; ++j) g[j] += self.grad[i * m + j] * normed[i * m + j];
                }
                if (wants(self, 2)) {
                  auto& g = grad_of(self, 2);
                  for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < m; ++j) g[j] += self.grad[i * m + j];
                }
                if (wants(self, 0)) {
                  auto& g = grad_of(self, 0);
                  const double inv_m = 1.0 / static_cast<double>(m);
                  for (std::size_t i = 0; i < n; ++i) {
                    double mean_d = 0.0, mean_dx = 0.0;
                    for (std::size_t j = 0; j < m; ++j) {
                      const double dxhat = self.grad[i * m + j] * gm[j];
                      mean_d += dxhat;
                      mean_dx += dxhat * normed[i * m + j];
                    }
                    mean_d *= inv_m;
                    mean_dx *= inv_m;
                    for (std::size_t j = 0; j < m; ++j) {
                      const double dxhat = self.grad[i * m + j] * gm[j];
                      g[i * m + j] += inv_std[i] * (dxhat - mean_d - normed[i * m + j] * mean_dx);
                    }
                  }
                }
              });
}

Tensor conv1d(const Tensor& x, const Tensor& filters, const Tensor& bias) {
  if (filters.rank() != 3) throw Error(ErrorKind::ShapeMismatch, "conv1d filters must be (k, d, f)");
  const std::size_t k = filters.shape()[0], d = filters.shape()[1], f = filters.shape()[2];
  const std::size_t n = x.rows();
  if (x.cols() != d || bias.size() != f || k % 2 == 0) shape_error("conv1d", x, filters);
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
  std::vector<double> out(n * f);
  const auto xv = x.values();
  const auto wv = filters.values();
  for (std::size_t t = 0; t < n; ++t) {
    double* orow = out.data() + t * f;
    std::copy_n(bias.values().data(), f, orow);
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(j) - half;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
      const double* xrow = xv.data() + static_cast<std::size_t>(src) * d;
      for (std::size_t c = 0; c < d; ++c) {
        const double xc = xrow[c];
        if (xc == 0.0) continue;
        const double* w = wv.data() + (j * d + c) * f;
        for (std::size_t o = 0; o < f; ++o) orow[o] += xc * w[o];
      }
    }
  }
  return make(matrix_shape(n, f), std::move(out), {&x, &filters, &bias}, [n, k, d, f, half](Node& self) {
    const auto& xv = value_of(self, 0);
    const auto& wv = value_of(self, 1);
    const auto& dy = self.grad;
    std::vector<double>* dx = wants(self, 0) ? &grad_of(self, 0) : nullptr;
    std::vector<double>* dw = wants(self, 1) ? &grad_of(self, 1) : nullptr;
    if (wants(self, 2)) {
      auto& db = grad_of(self, 2);
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t o = 0; o < f; ++o) db[o] += dy[t * f + o];
    }
    for (std::size_t t = 0; t < n; ++t) {
      const double* grow = dy.data() + t * f;
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(j) - half;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
        const std::size_t s = static_cast<std::size_t>(src);
        for (std::size_t c = 0; c < d; ++c) {
          const double* w = wv.data() + (j * d + c) * f;
          if (dx) {
            double acc = 0.0;
            for (std::size_t o = 0; o < f; ++o) acc += grow[o] * w[o];
            (*dx)[s * d + c] += acc;
          }
          if (dw) {
            const double xc = xv[s * d + c];
            if (xc == 0.0) continue;
            double* gw = dw->data() + (j * d + c) * f;
            for (std::size_t o = 0; o < f; ++o) gw[o] += grow[o] * xc;
          }
        }
      }
    }
  });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> keep(x.size());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    keep[i] = uniform01(rng) >= rate ? keep_scale : 0.0;
    out[i] = x.values()[i] * keep[i];
  }
  return make(x.shape(), std::move(out), {&x}, [keep = std::move(keep)](Node& self) {
    auto& g = grad_of(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * keep[i];
  });
}

Tensor softmax_nll(const Tensor& scores, std::size_t target) {
  const auto s = scores.values();
  if (target >= s.size()) throw Error(ErrorKind::ShapeMismatch, "softmax_nll target out of range");
  for (double v : s)
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteScore, "non-finite click score");
  const double mx = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double v : s) z += std::exp(v - mx);
  const double loss = (mx + std::log(z)) - s[target];
  return make({}, {loss}, {&scores}, [mx, z, target](Node& self) {
    auto& g = grad_of(self, 0);
    const auto& sv = value_of(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double p = std::exp(sv[i] - mx) / z;
      g[i] += self.grad[0] * (p - (i == target ? 1.0 : 0.0));
    }
  });
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw Error(ErrorKind::NotScalarLoss, "backward requires a single-element loss");
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order without recursion depth limits.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(&loss.node(), 0);
  seen.insert(&loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node().ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

}  // namespace newsrec::autodiff
