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

// Conversions between library tensors and oracle matrices.
#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <random>

#include <unistd.h>

#include "newsrec/autodiff.hpp"
#include "newsrec/layers.hpp"
#include "oracles.hpp"

namespace support {

using newsrec::autodiff::Tensor;

inline Tensor tensor(const oracle::Mat& m, bool requires_grad = false) {
  return Tensor::from({m.size(), m[0].size()}, oracle::flatten(m), requires_grad);
}

inline Tensor vector_tensor(const oracle::Vec& v, bool requires_grad = false) {
  return Tensor::from({v.size()}, v, requires_grad);
}

inline oracle::Mat mat(const Tensor& t) {
  oracle::Mat m(t.rows(), oracle::Vec(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

inline oracle::Vec vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

inline oracle::Mat mat_of(const Tensor& t, std::size_t rows, std::size_t cols) {
  oracle::Mat m(rows, oracle::Vec(cols));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m[i][j] = t.values()[i * cols + j];
  return m;
}

inline oracle::Proj proj(const newsrec::autodiff::Dense& d) {
  return {mat_of(d.weight, d.in(), d.out()), vec(d.bias)};
}

/// Conv filters (k, d, f) as k matrices (d × f).
inline std::vector<oracle::Mat> filters(const Tensor& t) {
  const auto& s = t.shape();
  std::vector<oracle::Mat> out(s[0], oracle::Mat(s[1], oracle::Vec(s[2])));
  for (std::size_t j = 0; j < s[0]; ++j)
    for (std::size_t c = 0; c < s[1]; ++c)
      for (std::size_t o = 0; o < s[2]; ++o) out[j][c][o] = t.values()[(j * s[1] + c) * s[2] + o];
  return out;
}

inline oracle::Gru gru(const newsrec::autodiff::GruCell& g) {
  const std::size_t din = g.wz.rows(), dh = g.uz.rows();
  return {mat_of(g.wz, din, dh), mat_of(g.uz, dh, dh), mat_of(g.wr, din, dh), mat_of(g.ur, dh, dh),
          mat_of(g.wh, din, dh), mat_of(g.uh, dh, dh), vec(g.bz), vec(g.br), vec(g.bh)};
}

inline oracle::Block block(const newsrec::autodiff::TransformerBlock& b) {
  return {proj(b.attention.q), proj(b.attention.k), proj(b.attention.v), proj(b.attention.o),
          vec(b.attention_norm.gamma), vec(b.attention_norm.beta), proj(b.ffn_in), proj(b.ffn_out),
          vec(b.ffn_norm.gamma), vec(b.ffn_norm.beta), b.attention.heads};
}

inline void fill(Tensor t, double value) {
  auto v = t.mutable_values();
  std::fill(v.begin(), v.end(), value);
}

inline void randomize(Tensor t, std::mt19937_64& rng, double lo = -0.5, double hi = 0.5) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.mutable_values()) v = d(rng);
}

inline double max_abs_diff(const oracle::Mat& a, const oracle::Mat& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) m = std::max(m, std::abs(a[i][j] - b[i][j]));
  return m;
}

inline double max_abs_diff(const oracle::Vec& a, const oracle::Vec& b) { return max_abs_diff(oracle::Mat{a}, oracle::Mat{b}); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("newsrec-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace support
