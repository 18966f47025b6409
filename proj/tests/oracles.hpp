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

// Independent reference implementations used as test oracles. Written in the
// most direct nested-vector style, sharing no code with the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Mat random_mat(std::mt19937_64& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Mat m(r, Vec(c));
  for (auto& row : m)
    for (auto& v : row) v = d(rng);
  return m;
}

inline Vec random_vec(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  return random_mat(rng, 1, n, lo, hi)[0];
}

inline Vec flatten(const Mat& m) {
  Vec out;
  for (const auto& row : m) out.insert(out.end(), row.begin(), row.end());
  return out;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.size(), Vec(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t p = 0; p < b.size(); ++p) c[i][j] += a[i][p] * b[p][j];
  return c;
}

inline Mat transpose(const Mat& a) {
  Mat t(a[0].size(), Vec(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) t[j][i] = a[i][j];
  return t;
}

inline Vec vecmat(const Vec& x, const Mat& w) { return matmul(Mat{x}, w)[0]; }

inline Vec add(Vec a, const Vec& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

inline Mat dense(const Mat& x, const Mat& w, const Vec& b) {
  Mat y = matmul(x, w);
  for (auto& row : y) row = add(row, b);
  return y;
}

/// Softmax over entries with mask[i] == 1; masked entries are 0.
inline Vec softmax(const Vec& x, const std::vector<int>& mask = {}) {
  const auto valid = [&](std::size_t i) { return mask.empty() || mask[i] != 0; };
  double m = -INFINITY;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (valid(i)) m = std::max(m, x[i]);
  Vec e(x.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (valid(i)) z += (e[i] = std::exp(x[i] - m));
  for (auto& v : e) v /= z;
  return e;
}

struct Pooled {
  Vec weights;
  Vec pooled;
};

/// wᵢ ∝ exp(qᵀ tanh(Wᵀhᵢ + b)), pooled = Σ wᵢ hᵢ.
inline Pooled additive_attention(const Mat& h, const Mat& w, const Vec& b, const Vec& q,
                                 const std::vector<int>& mask = {}) {
  Vec logits;
  for (const auto& row : h) {
    const Vec proj = add(vecmat(row, w), b);
    double s = 0.0;
    for (std::size_t j = 0; j < proj.size(); ++j) s += q[j] * std::tanh(proj[j]);
    logits.push_back(s);
  }
  Pooled out{softmax(logits, mask), Vec(h[0].size(), 0.0)};
  for (std::size_t i = 0; i < h.size(); ++i)
    for (std::size_t j = 0; j < h[0].size(); ++j) out.pooled[j] += out.weights[i] * h[i][j];
  return out;
}

struct Proj {
  Mat w;
  Vec b;
};

/// Multi-head scaled dot-product self-attention with output projection.
inline Mat mhsa(const Mat& h, const Proj& q, const Proj& k, const Proj& v, const Proj& o, std::size_t heads,
                const std::vector<int>& mask = {}) {
  const Mat Q = dense(h, q.w, q.b), K = dense(h, k.w, k.b), V = dense(h, v.w, v.b);
  const std::size_t d = Q[0].size(), dh = d / heads, n = h.size();
  Mat concat(n, Vec(d, 0.0));
  for (std::size_t head = 0; head < heads; ++head) {
    for (std::size_t i = 0; i < n; ++i) {
      Vec logits(n);
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += Q[i][head * dh + c] * K[j][head * dh + c];
        logits[j] = s / std::sqrt(static_cast<double>(dh));
      }
      const Vec w = softmax(logits, mask);
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < dh; ++c) concat[i][head * dh + c] += w[j] * V[j][head * dh + c];
    }
  }
  return dense(concat, o.w, o.b);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Gru {
  Mat wz, uz, wr, ur, wh, uh;
  Vec bz, br, bh;
};

inline Vec gru_step(const Gru& g, const Vec& x, const Vec& h) {
  const std::size_t n = h.size();
  const Vec az = add(add(vecmat(x, g.wz), vecmat(h, g.uz)), g.bz);
  const Vec ar = add(add(vecmat(x, g.wr), vecmat(h, g.ur)), g.br);
  Vec z(n), r(n), rh(n);
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = sigmoid(az[i]);
    r[i] = sigmoid(ar[i]);
    rh[i] = r[i] * h[i];
  }
  const Vec ac = add(add(vecmat(x, g.wh), vecmat(rh, g.uh)), g.bh);
  Vec out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = z[i] * h[i] + (1.0 - z[i]) * std::tanh(ac[i]);
  return out;
}

/// Same-padded sliding window: y[t][o] = b[o] + Σ_j Σ_c x[t+j−k/2][c] · W[j][c][o].
inline Mat conv1d(const Mat& x, const std::vector<Mat>& filters, const Vec& b) {
  const std::size_t n = x.size(), k = filters.size(), f = b.size();
  Mat y(n, b);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t j = 0; j < k; ++j) {
      const long src = static_cast<long>(t + j) - static_cast<long>(k / 2);
      if (src < 0 || src >= static_cast<long>(n)) continue;
      for (std::size_t c = 0; c < x[0].size(); ++c)
        for (std::size_t o = 0; o < f; ++o) y[t][o] += x[static_cast<std::size_t>(src)][c] * filters[j][c][o];
    }
  return y;
}

inline Vec layer_norm(const Vec& x, const Vec& gamma, const Vec& beta, double eps = 1e-12) {
  double mu = 0.0;
  for (double v : x) mu += v;
  mu /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mu) * (v - mu);
  var /= static_cast<double>(x.size());
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = gamma[i] * (x[i] - mu) / std::sqrt(var + eps) + beta[i];
  return out;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

/// −log(e^{s_target} / Σ e^{s}), computed directly in long double.
inline double cross_entropy(const Vec& scores, std::size_t target) {
  long double z = 0.0L;
  for (double s : scores) z += std::exp(static_cast<long double>(s));
  return static_cast<double>(-std::log(std::exp(static_cast<long double>(scores[target])) / z));
}

/// Pairwise count: (wins + ties/2) / (P·N), returned as (2·wins + ties) / (2PN).
inline double brute_auc(const Vec& scores, const std::vector<int>& labels) {
  unsigned long long twice = 0, pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) twice += 2;
      else if (scores[i] == scores[j]) twice += 1;
    }
  }
  return static_cast<double>(twice) / static_cast<double>(2 * pairs);
}

/// Position of candidate c in descending order: higher scores first, then lower index.
inline std::size_t rank_of(const Vec& scores, std::size_t c) {
  std::size_t rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > scores[c] || (scores[j] == scores[c] && j < c)) ++rank;
  }
  return rank;
}

inline double brute_mrr(const Vec& scores, const std::vector<int>& labels) {
  double total = 0.0;
  std::size_t positives = 0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (labels[c] != 1) continue;
    total += 1.0 / static_cast<double>(rank_of(scores, c));
    ++positives;
  }
  return total / static_cast<double>(positives);
}

inline double brute_ndcg(const Vec& scores, const std::vector<int>& labels, std::size_t k) {
  double dcg = 0.0;
  std::size_t positives = 0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (labels[c] != 1) continue;
    ++positives;
    const std::size_t r = rank_of(scores, c);
    if (r <= k) dcg += 1.0 / std::log2(static_cast<double>(r) + 1.0);
  }
  double ideal = 0.0;
  for (std::size_t r = 1; r <= std::min(k, positives); ++r) ideal += 1.0 / std::log2(static_cast<double>(r) + 1.0);
  return dcg / ideal;
}

struct Block {
  Proj q, k, v, o;
  Vec norm1_gamma, norm1_beta;
  Proj ffn_in, ffn_out;
  Vec norm2_gamma, norm2_beta;
  std::size_t heads = 1;
};

/// Post-norm encoder block: LN(h + MHSA(h)), then LN(m + FFN(m)) with GELU.
inline Mat transformer_block(const Mat& h, const Block& b, const std::vector<int>& mask) {
  const Mat att = mhsa(h, b.q, b.k, b.v, b.o, b.heads, mask);
  Mat out;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const Vec mid = layer_norm(add(h[i], att[i]), b.norm1_gamma, b.norm1_beta);
    Vec hidden = dense({mid}, b.ffn_in.w, b.ffn_in.b)[0];
    for (auto& v : hidden) v = gelu(v);
    const Vec ffn = dense({hidden}, b.ffn_out.w, b.ffn_out.b)[0];
    out.push_back(layer_norm(add(mid, ffn), b.norm2_gamma, b.norm2_beta));
  }
  return out;
}

}  // namespace oracle
