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

// News and user encoders for NAML, NRMS and LSTUR under static-word (SLM),
// mini-transformer (PLM) and precomputed large-model (LLM) text pathways.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "newsrec/autodiff.hpp"
#include "newsrec/corpus.hpp"
#include "newsrec/embeddings.hpp"
#include "newsrec/layers.hpp"
#include "newsrec/params.hpp"

namespace newsrec::encoders {

using autodiff::AdditiveAttention;
using autodiff::Conv1d;
using autodiff::Dense;
using autodiff::ForwardContext;
using autodiff::GruCell;
using autodiff::MultiHeadSelfAttention;
using autodiff::ParamGraph;
using autodiff::Tensor;

enum class Architecture { Naml, Nrms, Lstur };

std::string_view to_string(Architecture a);
/// "naml", "nrms" or "lstur". Throws InvalidSpec.
Architecture parse_architecture(std::string_view text);

enum class LmKind { SlmFrozen, SlmTuned, Plm, Llm };

struct LmMode {
  LmKind kind = LmKind::SlmTuned;
  /// Number of top transformer blocks that train (PLM only).
  std::size_t freeze_depth = 0;
  /// Last-token count folded into each stored vector (LLM only).
  std::size_t last_tokens = 10;

  bool operator==(const LmMode&) const = default;
};

/// "slm", "slm-frozen", "plm:<k>", "plm-frozen" (= plm:0) or "llm". Throws InvalidSpec.
LmMode parse_lm_mode(std::string_view text);
std::string to_string(const LmMode& mode);

/// How SLM mode turns word vectors into the text vector.
enum class SlmTextEncoder {
  /// The architecture's own token encoder (CNN + attention or MHSA + attention).
  Architecture,
  /// Concatenation of all padded word vectors.
  Concat,
};

struct EncoderDims {
  std::size_t word_dim = 300;
  std::size_t d_news = 256;
  std::size_t news_heads = 16;
  std::size_t user_heads = 8;
  std::size_t conv_width = 3;
  std::size_t conv_filters = 256;
  std::size_t attention_hidden = 200;
  std::size_t category_dim = 100;
  std::size_t max_title = 20;
  std::size_t max_abstract = 50;
  std::size_t max_history = 50;
  std::size_t plm_layers = 4;
  std::size_t plm_dim = 128;
  std::size_t plm_heads = 4;
  std::size_t plm_ffn = 512;
  /// Per-token width of the large model; stored vectors are last_tokens · llm_dim wide.
  std::size_t llm_dim = 4096;
  SlmTextEncoder slm_text = SlmTextEncoder::Architecture;
  /// NRMS in PLM mode: run NRMS's own self-attention and pooling over all
  /// transformer outputs instead of taking the [CLS] vector.
  bool plm_nrms_mhsa = false;
};

/// Token + learned position embeddings, embedding layer norm, and a stack of
/// post-norm encoder blocks. Parameters live under "plm.".
struct MiniTransformer {
  Tensor token_embedding;     // (|V|, d)
  Tensor position_embedding;  // (max_positions, d)
  autodiff::LayerNorm embedding_norm;
  std::vector<autodiff::TransformerBlock> blocks;

  static MiniTransformer create(ParamGraph& graph, std::size_t vocab_size, std::size_t max_positions,
                                std::size_t d, std::size_t heads, std::size_t ffn_hidden, std::size_t layers,
                                Rng& rng);

  /// Hidden states for every position; pad ids are masked as keys.
  Tensor forward(std::span<const int> ids) const;
  /// Position-0 hidden state, (1, d).
  Tensor cls(std::span<const int> ids) const;

  /// Embedding-layer parameter count (token, position, norm).
  std::size_t embedding_parameter_count() const;
};

/// Marks the top `k` blocks trainable and everything else under "plm." frozen.
/// Throws BadFreezeDepth when k exceeds the block count.
void apply_freeze_depth(ParamGraph& graph, const MiniTransformer& transformer, std::size_t k);

/// [CLS] + non-pad prefix of `padded` + [SEP], padded back to padded.size() + 2.
std::vector<int> transformer_ids(std::span<const int> padded);

/// 1 for ids other than the pad id.
autodiff::Mask token_mask(std::span<const int> ids);

// ---- LM pathways: the text vector in each mode, followed by an FC layer ----

/// FC over the concatenation of the (padded) word vectors.
Tensor encode_news_slm(const Tensor& word_table, std::span<const int> ids, const Dense& fc,
                       const ForwardContext& ctx);
/// FC over the [CLS] state. `ids` must start with [CLS] and end with [SEP].
Tensor encode_news_plm(const MiniTransformer& transformer, std::span<const int> ids, const Dense& fc,
                       const ForwardContext& ctx);
/// FC over the stored last-l concatenation. Throws MissingEmbedding.
Tensor encode_news_llm(const embeddings::PrecomputedStore& store, std::string_view key, const Dense& fc,
                       const ForwardContext& ctx);

/// Stored vector as a constant (1, dim) row. Throws MissingEmbedding.
Tensor stored_vector(const embeddings::PrecomputedStore& store, std::string_view key);

// ---- Architecture news encoders ----

/// ReLU(conv) then additive-attention pooling over valid tokens, (1, filters).
/// All-pad input pools to zero.
Tensor cnn_text_view(const Tensor& token_reps, std::span<const std::uint8_t> mask, const Conv1d& conv,
                     const AdditiveAttention& attention, const ForwardContext& ctx);

/// View-level attention over the title view and, when present, the abstract view.
Tensor naml_news(const Tensor& title_view, const std::optional<Tensor>& abstract_view,
                 const AdditiveAttention& view_attention);

/// MHSA over title tokens, additive pooling, FC to d_news.
Tensor nrms_news(const Tensor& token_reps, std::span<const std::uint8_t> mask, const MultiHeadSelfAttention& mhsa,
                 const AdditiveAttention& attention, const Dense& fc, const ForwardContext& ctx);
/// The pooled post-MHSA vector before the FC layer.
Tensor nrms_pooled(const Tensor& token_reps, std::span<const std::uint8_t> mask, const MultiHeadSelfAttention& mhsa,
                   const AdditiveAttention& attention, const ForwardContext& ctx);

/// FC(title vector ∥ category embedding ∥ subcategory embedding).
Tensor lstur_news(const Tensor& title_vec, int category_id, int subcategory_id, const Tensor& category_table,
                  const Tensor& subcategory_table, const Dense& fc, const ForwardContext& ctx);

// ---- User encoders. `history` holds one news vector per row. ----

/// Additive attention over valid rows; zero vector when none are valid.
Tensor naml_user(const Tensor& history, std::span<const std::uint8_t> mask, const AdditiveAttention& attention);
/// MHSA then additive attention; zero vector when no row is valid.
Tensor nrms_user(const Tensor& history, std::span<const std::uint8_t> mask, const MultiHeadSelfAttention& mhsa,
                 const AdditiveAttention& attention, const ForwardContext& ctx);
/// GRU over valid rows oldest to newest starting from the user's long-term row.
Tensor lstur_user(const Tensor& history, std::span<const std::uint8_t> mask, const Tensor& user_table,
                  int user_index, const GruCell& gru);

// ---- Composed model ----

struct ModelConfig {
  Architecture architecture = Architecture::Naml;
  LmMode lm;
  EncoderDims dims;
  std::uint64_t seed = 1;
};

/// Inputs a model may draw on. Only the ones its mode needs must be set.
struct ModelResources {
  std::size_t vocab_size = 0;
  std::size_t num_categories = 1;
  std::size_t num_subcategories = 1;
  /// Known users; index 0 is the shared cold-start row.
  std::size_t num_users = 1;
  /// SLM word vectors; a seeded random table is used when null.
  const embeddings::StaticTable* word_table = nullptr;
  /// LLM title-view store (required in LLM mode).
  const embeddings::PrecomputedStore* title_store = nullptr;
  /// LLM abstract-view store for NAML; without it NAML uses the title view only.
  const embeddings::PrecomputedStore* abstract_store = nullptr;
  /// Mini-transformer weights ("plm.*" tensors); native init when null.
  const autodiff::TensorFile* plm_weights = nullptr;
};

class NewsRecModel {
 public:
  NewsRecModel(ModelConfig config, ModelResources resources);
  NewsRecModel(const NewsRecModel&) = delete;
  NewsRecModel& operator=(const NewsRecModel&) = delete;

  /// q_v, shape (1, d_news).
  Tensor encode_news(const corpus::NewsArticle& article, const ForwardContext& ctx) const;
  /// p_u from history news vectors (rows, oldest first), shape (1, d_news).
  Tensor encode_user(std::span<const Tensor> history, int user_index, const ForwardContext& ctx) const;
  /// Dot-product click scores of one user against candidate rows, (1, m).
  static Tensor score(const Tensor& user, std::span<const Tensor> candidates);

  ParamGraph& params() { return params_; }
  const ParamGraph& params() const { return params_; }
  const ModelConfig& config() const { return config_; }
  const std::optional<MiniTransformer>& transformer() const { return transformer_; }

 private:
  Tensor text_vector(const corpus::NewsArticle& article, bool abstract_view, const ForwardContext& ctx) const;

  ModelConfig config_;
  ModelResources resources_;
  ParamGraph params_;

  Tensor word_table_;
  std::optional<MiniTransformer> transformer_;
  // SLM architecture-specific token encoders, indexed by view (0 title, 1 abstract).
  Conv1d conv_[2];
  AdditiveAttention word_attention_[2];
  MultiHeadSelfAttention news_mhsa_;
  Dense view_fc_[2];
  AdditiveAttention view_attention_;
  Tensor category_table_, subcategory_table_;
  Dense lstur_fc_;
  AdditiveAttention user_attention_;
  MultiHeadSelfAttention user_mhsa_;
  Tensor user_table_;
  GruCell gru_;
};

}  // namespace newsrec::encoders
