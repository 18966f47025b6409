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

#include <cstddef>
#include <span>
#include <string>

#include "newsrec/autodiff.hpp"
#include "newsrec/params.hpp"

namespace newsrec::autodiff {

/// Training switch and dropout source threaded through a forward pass.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;

  Tensor apply_dropout(const Tensor& x) const {
    return (training && rng && dropout > 0.0) ? autodiff::dropout(x, dropout, *rng) : x;
  }
};

/// x·W + b.
Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct Dense {
  Tensor weight;  // (in, out)
  Tensor bias;    // (out)

  static Dense create(ParamGraph& graph, const std::string& prefix, std::size_t in, std::size_t out,
                      Component component, Rng& rng);
  Tensor operator()(const Tensor& x) const { return dense(x, weight, bias); }
  std::size_t in() const { return weight.rows(); }
  std::size_t out() const { return weight.cols(); }
};

struct AttentionPool {
  Tensor weights;  // (1, n)
  Tensor pooled;   // (1, d)
};

/// Additive attention: wᵢ = softmax_i(vᵀ tanh(W hᵢ + b)) over valid rows,
/// pooled = Σ wᵢ hᵢ.
struct AdditiveAttention {
  Tensor weight;  // (d, da)
  Tensor bias;    // (da)
  Tensor query;   // (da, 1)

  static AdditiveAttention create(ParamGraph& graph, const std::string& prefix, std::size_t d, std::size_t da,
                                  Component component, Rng& rng);
  AttentionPool operator()(const Tensor& h, std::span<const std::uint8_t> mask) const;
};

/// Scaled dot-product self-attention with `heads` heads over d_model =
/// heads · d_head, projections from d_in. Masked keys receive zero weight.
struct MultiHeadSelfAttention {
  Dense q, k, v, o;
  std::size_t heads = 1;

  static MultiHeadSelfAttention create(ParamGraph& graph, const std::string& prefix, std::size_t d_in,
                                       std::size_t d_model, std::size_t heads, Component component, Rng& rng);
  Tensor operator()(const Tensor& h, std::span<const std::uint8_t> mask) const;
  std::size_t d_model() const { return o.out(); }
};

/// h' = z ⊙ h + (1 − z) ⊙ ĥ with z = σ(x Wz + h Uz + bz), r = σ(x Wr + h Ur + br),
/// ĥ = tanh(x Wh + (r ⊙ h) Uh + bh).
struct GruCell {
  Tensor wz, uz, bz;
  Tensor wr, ur, br;
  Tensor wh, uh, bh;

  static GruCell create(ParamGraph& graph, const std::string& prefix, std::size_t d_in, std::size_t d_hidden,
                        Component component, Rng& rng);
  Tensor step(const Tensor& x, const Tensor& h) const;
};

struct Conv1d {
  Tensor filters;  // (k, d, f)
  Tensor bias;     // (f)

  static Conv1d create(ParamGraph& graph, const std::string& prefix, std::size_t width, std::size_t d,
                       std::size_t f, Component component, Rng& rng);
  Tensor operator()(const Tensor& x) const { return conv1d(x, filters, bias); }
};

struct LayerNorm {
  Tensor gamma, beta;
  double eps = 1e-12;

  static LayerNorm create(ParamGraph& graph, const std::string& prefix, std::size_t d, Component component,
                          Rng& rng);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
};

/// Post-norm encoder block: LN(H + MHSA(H)), then LN(H₁ + W₂ gelu(W₁ H₁)).
struct TransformerBlock {
  MultiHeadSelfAttention attention;
  LayerNorm attention_norm;
  Dense ffn_in, ffn_out;
  LayerNorm ffn_norm;

  static TransformerBlock create(ParamGraph& graph, const std::string& prefix, std::size_t d, std::size_t heads,
                                 std::size_t ffn_hidden, Component component, Rng& rng);
  Tensor operator()(const Tensor& h, std::span<const std::uint8_t> mask) const;

  /// Parameter count of one block.
  static std::size_t parameter_count(std::size_t d, std::size_t ffn_hidden);
};

}  // namespace newsrec::autodiff
