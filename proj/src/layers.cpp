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

#include "newsrec/layers.hpp"

#include <cmath>
#include <vector>

#include "newsrec/error.hpp"

namespace newsrec::autodiff {

Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.cols() != weight.rows()) {
    throw Error(ErrorKind::ShapeMismatch,
                "dense input width " + std::to_string(x.cols()) + " vs weight rows " + std::to_string(weight.rows()));
  }
  return add_row(matmul(x, weight), bias);
}

Dense Dense::create(ParamGraph& graph, const std::string& prefix, std::size_t in, std::size_t out,
                    Component component, Rng& rng) {
  Dense d;
  d.weight = graph.add(prefix + ".weight", {in, out}, component, Init::Xavier, rng);
  d.bias = graph.add(prefix + ".bias", {out}, component, Init::Zeros, rng);
  return d;
}

AdditiveAttention AdditiveAttention::create(ParamGraph& graph, const std::string& prefix, std::size_t d,
                                            std::size_t da, Component component, Rng& rng) {
  AdditiveAttention a;
  a.weight = graph.add(prefix + ".weight", {d, da}, component, Init::Xavier, rng);
  a.bias = graph.add(prefix + ".bias", {da}, component, Init::Zeros, rng);
  a.query = graph.add(prefix + ".query", {da, 1}, component, Init::Xavier, rng);
  return a;
}

AttentionPool AdditiveAttention::operator()(const Tensor& h, std::span<const std::uint8_t> mask) const {
  const Tensor hidden = tanh(dense(h, weight, bias));          // (n, da)
  const Tensor logits = reshape(matmul(hidden, query), {1, h.rows()});
  AttentionPool out;
  out.weights = masked_softmax(logits, mask);
  out.pooled = matmul(out.weights, h);
  return out;
}

MultiHeadSelfAttention MultiHeadSelfAttention::create(ParamGraph& graph, const std::string& prefix,
                                                      std::size_t d_in, std::size_t d_model, std::size_t heads,
                                                      Component component, Rng& rng) {
  if (heads == 0 || d_model % heads != 0) {
    throw Error(ErrorKind::ShapeMismatch,
                "d_model " + std::to_string(d_model) + " not divisible by " + std::to_string(heads) + " heads");
  }
  MultiHeadSelfAttention m;
  m.q = Dense::create(graph, prefix + ".query", d_in, d_model, component, rng);
  m.k = Dense::create(graph, prefix + ".key", d_in, d_model, component, rng);
  m.v = Dense::create(graph, prefix + ".value", d_in, d_model, component, rng);
  m.o = Dense::create(graph, prefix + ".output", d_model, d_model, component, rng);
  m.heads = heads;
  return m;
}

Tensor MultiHeadSelfAttention::operator()(const Tensor& h, std::span<const std::uint8_t> mask) const {
  const std::size_t dm = d_model();
  if (heads == 0 || dm % heads != 0) throw Error(ErrorKind::ShapeMismatch, "heads do not divide d_model");
  const std::size_t dh = dm / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor queries = q(h), keys = k(h), vals = v(h);
  std::vector<Tensor> per_head;
  per_head.reserve(heads);
  for (std::size_t i = 0; i < heads; ++i) {
    const Tensor qh = heads == 1 ? queries : slice_cols(queries, i * dh, dh);
    const Tensor kh = heads == 1 ? keys : slice_cols(keys, i * dh, dh);
    const Tensor vh = heads == 1 ? vals : slice_cols(vals, i * dh, dh);
    const Tensor weights = masked_softmax(scale(matmul_nt(qh, kh), scale_factor), mask);
    per_head.push_back(matmul(weights, vh));
  }
  const Tensor joined = heads == 1 ? per_head[0] : concat_cols(per_head);
  return o(joined);
}

GruCell GruCell::create(ParamGraph& graph, const std::string& prefix, std::size_t d_in, std::size_t d_hidden,
                        Component component, Rng& rng) {
  GruCell g;
  g.wz = graph.add(prefix + ".update.input", {d_in, d_hidden}, component, Init::Xavier, rng);
  g.uz = graph.add(prefix + ".update.hidden", {d_hidden, d_hidden}, component, Init::Xavier, rng);
  g.bz = graph.add(prefix + ".update.bias", {d_hidden}, component, Init::Zeros, rng);
  g.wr = graph.add(prefix + ".reset.input", {d_in, d_hidden}, component, Init::Xavier, rng);
  g.ur = graph.add(prefix + ".reset.hidden", {d_hidden, d_hidden}, component, Init::Xavier, rng);
  g.br = graph.add(prefix + ".reset.bias", {d_hidden}, component, Init::Zeros, rng);
  g.wh = graph.add(prefix + ".candidate.input", {d_in, d_hidden}, component, Init::Xavier, rng);
  g.uh = graph.add(prefix + ".candidate.hidden", {d_hidden, d_hidden}, component, Init::Xavier, rng);
  g.bh = graph.add(prefix + ".candidate.bias", {d_hidden}, component, Init::Zeros, rng);
  return g;
}

Tensor GruCell::step(const Tensor& x, const Tensor& h) const {
  if (x.cols() != wz.rows() || h.cols() != uz.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "gru step input/state width");
  }
  const Tensor z = sigmoid(add_row(add(matmul(x, wz), matmul(h, uz)), bz));
  const Tensor r = sigmoid(add_row(add(matmul(x, wr), matmul(h, ur)), br));
  const Tensor candidate = tanh(add_row(add(matmul(x, wh), matmul(mul(r, h), uh)), bh));
  return add(mul(z, h), mul(one_minus(z), candidate));
}

Conv1d Conv1d::create(ParamGraph& graph, const std::string& prefix, std::size_t width, std::size_t d,
                      std::size_t f, Component component, Rng& rng) {
  if (width % 2 == 0) throw Error(ErrorKind::ShapeMismatch, "conv width must be odd");
  Conv1d c;
  c.filters = graph.add(prefix + ".filters", {width, d, f}, component, Init::Xavier, rng);
  c.bias = graph.add(prefix + ".bias", {f}, component, Init::Zeros, rng);
  return c;
}

LayerNorm LayerNorm::create(ParamGraph& graph, const std::string& prefix, std::size_t d, Component component,
                            Rng& rng) {
  LayerNorm n;
  n.gamma = graph.add(prefix + ".gamma", {d}, component, Init::Ones, rng);
  n.beta = graph.add(prefix + ".beta", {d}, component, Init::Zeros, rng);
  return n;
}

TransformerBlock TransformerBlock::create(ParamGraph& graph, const std::string& prefix, std::size_t d,
                                          std::size_t heads, std::size_t ffn_hidden, Component component, Rng& rng) {
  TransformerBlock b;
  b.attention = MultiHeadSelfAttention::create(graph, prefix + ".attention", d, d, heads, component, rng);
  b.attention_norm = LayerNorm::create(graph, prefix + ".attention_norm", d, component, rng);
  b.ffn_in = Dense::create(graph, prefix + ".ffn_in", d, ffn_hidden, component, rng);
  b.ffn_out = Dense::create(graph, prefix + ".ffn_out", ffn_hidden, d, component, rng);
  b.ffn_norm = LayerNorm::create(graph, prefix + ".ffn_norm", d, component, rng);
  return b;
}

Tensor TransformerBlock::operator()(const Tensor& h, std::span<const std::uint8_t> mask) const {
  const Tensor mid = attention_norm(add(h, attention(h, mask)));
  return ffn_norm(add(mid, ffn_out(gelu(ffn_in(mid)))));
}

std::size_t TransformerBlock::parameter_count(std::size_t d, std::size_t ffn_hidden) {
  return 4 * (d * d + d) + 2 * d + (d * ffn_hidden + ffn_hidden) + (ffn_hidden * d + d) + 2 * d;
}

}  // namespace newsrec::autodiff
