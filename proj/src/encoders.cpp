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

#include "newsrec/encoders.hpp"

#include <algorithm>
#include <charconv>

#include "newsrec/error.hpp"

namespace newsrec::encoders {

using autodiff::Component;
using autodiff::Init;
using corpus::Vocabulary;
namespace ad = newsrec::autodiff;

std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::Naml: return "naml";
    case Architecture::Nrms: return "nrms";
    case Architecture::Lstur: return "lstur";
  }
  return "unknown";
}

Architecture parse_architecture(std::string_view text) {
  if (text == "naml") return Architecture::Naml;
  if (text == "nrms") return Architecture::Nrms;
  if (text == "lstur") return Architecture::Lstur;
  throw Error(ErrorKind::InvalidSpec, "unknown architecture '" + std::string(text) + "'");
}

LmMode parse_lm_mode(std::string_view text) {
  LmMode mode;
  if (text == "slm") {
    mode.kind = LmKind::SlmTuned;
  } else if (text == "slm-frozen") {
    mode.kind = LmKind::SlmFrozen;
  } else if (text == "plm-frozen") {
    mode.kind = LmKind::Plm;
    mode.freeze_depth = 0;
  } else if (text == "llm") {
    mode.kind = LmKind::Llm;
  } else if (text.starts_with("plm:")) {
    mode.kind = LmKind::Plm;
    const auto digits = text.substr(4);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), mode.freeze_depth);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || digits.empty()) {
      throw Error(ErrorKind::InvalidSpec, "bad fine-tune depth in '" + std::string(text) + "'");
    }
  } else {
    throw Error(ErrorKind::InvalidSpec, "unknown LM mode '" + std::string(text) + "'");
  }
  return mode;
}

std::string to_string(const LmMode& mode) {
  switch (mode.kind) {
    case LmKind::SlmFrozen: return "slm-frozen";
    case LmKind::SlmTuned: return "slm";
    case LmKind::Plm: return mode.freeze_depth == 0 ? "plm-frozen" : "plm:" + std::to_string(mode.freeze_depth);
    case LmKind::Llm: return "llm";
  }
  return "unknown";
}

MiniTransformer MiniTransformer::create(ParamGraph& graph, std::size_t vocab_size, std::size_t max_positions,
                                        std::size_t d, std::size_t heads, std::size_t ffn_hidden, std::size_t layers,
                                        Rng& rng) {
  MiniTransformer t;
  t.token_embedding = graph.add("plm.token_embedding", {vocab_size, d}, Component::LanguageModel, Init::Uniform01, rng);
  t.position_embedding =
      graph.add("plm.position_embedding", {max_positions, d}, Component::LanguageModel, Init::Uniform01, rng);
  t.embedding_norm = ad::LayerNorm::create(graph, "plm.embedding_norm", d, Component::LanguageModel, rng);
  for (std::size_t i = 0; i < layers; ++i) {
    t.blocks.push_back(ad::TransformerBlock::create(graph, "plm.block" + std::to_string(i), d, heads, ffn_hidden,
                                                    Component::LanguageModel, rng));
  }
  return t;
}

Tensor MiniTransformer::forward(std::span<const int> ids) const {
  if (ids.size() > position_embedding.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "sequence of " + std::to_string(ids.size()) + " exceeds " +
                                              std::to_string(position_embedding.rows()) + " positions");
  }
  const ad::Mask mask = token_mask(ids);
  Tensor h = ad::add(ad::gather_rows(token_embedding, ids), ad::slice_rows(position_embedding, 0, ids.size()));
  h = embedding_norm(h);
  for (const auto& block : blocks) h = block(h, mask);
  return h;
}

Tensor MiniTransformer::cls(std::span<const int> ids) const { return ad::slice_rows(forward(ids), 0, 1); }

std::size_t MiniTransformer::embedding_parameter_count() const {
  return token_embedding.size() + position_embedding.size() + embedding_norm.gamma.size() +
         embedding_norm.beta.size();
}

void apply_freeze_depth(ParamGraph& graph, const MiniTransformer& transformer, std::size_t k) {
  const std::size_t layers = transformer.blocks.size();
  if (k > layers) {
    throw Error(ErrorKind::BadFreezeDepth,
                "cannot fine-tune " + std::to_string(k) + " of " + std::to_string(layers) + " blocks");
  }
  graph.set_trainable_prefix("plm.", false);
  for (std::size_t i = layers - k; i < layers; ++i) graph.set_trainable_prefix("plm.block" + std::to_string(i) + ".", true);
}

std::vector<int> transformer_ids(std::span<const int> padded) {
  std::vector<int> ids(padded.size() + 2, Vocabulary::kPad);
  std::size_t m = 0;
  while (m < padded.size() && padded[m] != Vocabulary::kPad) ++m;
  ids[0] = Vocabulary::kCls;
  std::copy_n(padded.begin(), m, ids.begin() + 1);
  ids[m + 1] = Vocabulary::kSep;
  return ids;
}

ad::Mask token_mask(std::span<const int> ids) {
  ad::Mask mask(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) mask[i] = ids[i] != Vocabulary::kPad;
  return mask;
}

namespace {

bool any_valid(std::span<const std::uint8_t> mask, std::size_t rows) {
  if (rows == 0) return false;
  if (mask.empty()) return true;
  return std::any_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; });
}

}  // namespace

Tensor encode_news_slm(const Tensor& word_table, std::span<const int> ids, const Dense& fc,
                       const ForwardContext& ctx) {
  const Tensor words = ad::gather_rows(word_table, ids, Vocabulary::kPad);
  const Tensor flat = ad::reshape(words, {1, words.size()});
  if (flat.cols() != fc.in()) {
    throw Error(ErrorKind::ShapeMismatch, "concatenated width " + std::to_string(flat.cols()) + " vs FC input " +
                                              std::to_string(fc.in()));
  }
  return fc(ctx.apply_dropout(flat));
}

Tensor encode_news_plm(const MiniTransformer& transformer, std::span<const int> ids, const Dense& fc,
                       const ForwardContext& ctx) {
  if (ids.empty() || ids.front() != Vocabulary::kCls ||
      std::find(ids.begin(), ids.end(), Vocabulary::kSep) == ids.end()) {
    throw Error(ErrorKind::ShapeMismatch, "transformer input must be [CLS] ... [SEP]");
  }
  return fc(ctx.apply_dropout(transformer.cls(ids)));
}

Tensor stored_vector(const embeddings::PrecomputedStore& store, std::string_view key) {
  const auto v = store.lookup(key);
  return Tensor::from({1, v.size()}, std::vector<double>(v.begin(), v.end()));
}

Tensor encode_news_llm(const embeddings::PrecomputedStore& store, std::string_view key, const Dense& fc,
                       const ForwardContext& ctx) {
  return fc(ctx.apply_dropout(stored_vector(store, key)));
}

Tensor cnn_text_view(const Tensor& token_reps, std::span<const std::uint8_t> mask, const Conv1d& conv,
                     const AdditiveAttention& attention, const ForwardContext& ctx) {
  const std::size_t filters = conv.bias.size();
  if (!any_valid(mask, token_reps.rows())) return Tensor::zeros({1, filters});
  const Tensor features = ctx.apply_dropout(ad::relu(conv(token_reps)));
  return attention(features, mask).pooled;
}

Tensor naml_news(const Tensor& title_view, const std::optional<Tensor>& abstract_view,
                 const AdditiveAttention& view_attention) {
  if (!abstract_view) return title_view;
  if (abstract_view->cols() != title_view.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "title and abstract views differ in width");
  }
  const Tensor views[] = {title_view, *abstract_view};
  return view_attention(ad::concat_rows(views), {}).pooled;
}

Tensor nrms_pooled(const Tensor& token_reps, std::span<const std::uint8_t> mask, const MultiHeadSelfAttention& mhsa,
                   const AdditiveAttention& attention, const ForwardContext& ctx) {
  if (!any_valid(mask, token_reps.rows())) return Tensor::zeros({1, mhsa.d_model()});
  const Tensor contextual = ctx.apply_dropout(mhsa(token_reps, mask));
  return attention(contextual, mask).pooled;
}

Tensor nrms_news(const Tensor& token_reps, std::span<const std::uint8_t> mask, const MultiHeadSelfAttention& mhsa,
                 const AdditiveAttention& attention, const Dense& fc, const ForwardContext& ctx) {
  return fc(ctx.apply_dropout(nrms_pooled(token_reps, mask, mhsa, attention, ctx)));
}

Tensor lstur_news(const Tensor& title_vec, int category_id, int subcategory_id, const Tensor& category_table,
                  const Tensor& subcategory_table, const Dense& fc, const ForwardContext& ctx) {
  const int cat[] = {category_id};
  const int sub[] = {subcategory_id};
  const Tensor parts[] = {title_vec, ad::gather_rows(category_table, cat), ad::gather_rows(subcategory_table, sub)};
  const Tensor joined = ad::concat_cols(parts);
  if (joined.cols() != fc.in()) throw Error(ErrorKind::ShapeMismatch, "LSTUR news FC input width");
  return fc(ctx.apply_dropout(joined));
}

Tensor naml_user(const Tensor& history, std::span<const std::uint8_t> mask, const AdditiveAttention& attention) {
  if (!any_valid(mask, history.rows())) return Tensor::zeros({1, history.cols()});
  return attention(history, mask).pooled;
}

Tensor nrms_user(const Tensor& history, std::span<const std::uint8_t> mask, const MultiHeadSelfAttention& mhsa,
                 const AdditiveAttention& attention, const ForwardContext& ctx) {
  if (!any_valid(mask, history.rows())) return Tensor::zeros({1, mhsa.d_model()});
  const Tensor contextual = ctx.apply_dropout(mhsa(history, mask));
  return attention(contextual, mask).pooled;
}

Tensor lstur_user(const Tensor& history, std::span<const std::uint8_t> mask, const Tensor& user_table,
                  int user_index, const GruCell& gru) {
  const int row[] = {user_index};
  Tensor state = ad::gather_rows(user_table, row);
  if (history.rows() > 0 && history.cols() != gru.wz.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "LSTUR history width");
  }
  for (std::size_t i = 0; i < history.rows(); ++i) {
    if (!mask.empty() && mask[i] == 0) continue;
    state = gru.step(ad::slice_rows(history, i, 1), state);
  }
  return state;
}

NewsRecModel::NewsRecModel(ModelConfig config, ModelResources resources)
    : config_(std::move(config)), resources_(resources) {
  EncoderDims& dims = config_.dims;
  const Architecture arch = config_.architecture;
  const LmKind kind = config_.lm.kind;
  Rng rng(derive_seed(config_.seed, 0x5eed));
  const bool slm = kind == LmKind::SlmFrozen || kind == LmKind::SlmTuned;
  const bool slm_arch = slm && dims.slm_text == SlmTextEncoder::Architecture;
  const std::size_t views = arch == Architecture::Naml ? 2 : 1;

  if (kind == LmKind::Plm && config_.lm.freeze_depth > dims.plm_layers) {
    throw Error(ErrorKind::BadFreezeDepth, "fine-tune depth " + std::to_string(config_.lm.freeze_depth) +
                                               " exceeds " + std::to_string(dims.plm_layers) + " blocks");
  }
  if (kind == LmKind::Llm && config_.lm.last_tokens < 1) throw Error(ErrorKind::InvalidSpec, "last-token count < 1");

  // Text pathway parameters.
  std::size_t raw_width[2] = {0, 0};
  if (slm) {
    const bool trainable = kind == LmKind::SlmTuned;
    if (resources_.word_table) {
      if (resources_.vocab_size && resources_.word_table->rows != resources_.vocab_size) {
        throw Error(ErrorKind::DimMismatch, "word table rows differ from vocabulary size");
      }
      dims.word_dim = resources_.word_table->dim;
      word_table_ = params_.add("news.word_embedding", resources_.word_table->as_tensor(), Component::LanguageModel,
                                trainable);
    } else {
      const auto table = embeddings::random_static_table(resources_.vocab_size, dims.word_dim, trainable,
                                                         derive_seed(config_.seed, 0x7ab1e));
      word_table_ = params_.add("news.word_embedding", table.as_tensor(), Component::LanguageModel, trainable);
    }
    for (std::size_t v = 0; v < views; ++v) {
      const std::string prefix = v == 0 ? "news.title" : "news.abstract";
      const std::size_t max_len = v == 0 ? dims.max_title : dims.max_abstract;
      if (!slm_arch) {
        raw_width[v] = max_len * dims.word_dim;
      } else if (arch == Architecture::Nrms) {
        news_mhsa_ = MultiHeadSelfAttention::create(params_, prefix + ".mhsa", dims.word_dim, dims.d_news,
                                                    dims.news_heads, Component::Architecture, rng);
        word_attention_[v] = AdditiveAttention::create(params_, prefix + ".word_attention", dims.d_news,
                                                       dims.attention_hidden, Component::Architecture, rng);
        raw_width[v] = dims.d_news;
      } else {
        conv_[v] = Conv1d::create(params_, prefix + ".conv", dims.conv_width, dims.word_dim, dims.conv_filters,
                                  Component::Architecture, rng);
        word_attention_[v] = AdditiveAttention::create(params_, prefix + ".word_attention", dims.conv_filters,
                                                       dims.attention_hidden, Component::Architecture, rng);
        raw_width[v] = dims.conv_filters;
      }
    }
  } else if (kind == LmKind::Plm) {
    const std::size_t positions = std::max(dims.max_title, dims.max_abstract) + 2;
    transformer_ = MiniTransformer::create(params_, resources_.vocab_size, positions, dims.plm_dim, dims.plm_heads,
                                           dims.plm_ffn, dims.plm_layers, rng);
    if (resources_.plm_weights) {
      for (auto& p : params_.parameters()) {
        if (!p.name.starts_with("plm.")) continue;
        const Tensor* src = resources_.plm_weights->find(p.name);
        if (!src) throw Error(ErrorKind::DataMissing, "transformer weights lack " + p.name);
        if (src->shape() != p.tensor.shape()) throw Error(ErrorKind::ShapeMismatch, "transformer weight " + p.name);
        std::copy(src->values().begin(), src->values().end(), p.tensor.mutable_values().begin());
      }
    }
    raw_width[0] = raw_width[1] = dims.plm_dim;
    if (arch == Architecture::Nrms && dims.plm_nrms_mhsa) {
      news_mhsa_ = MultiHeadSelfAttention::create(params_, "news.title.mhsa", dims.plm_dim, dims.d_news,
                                                  dims.news_heads, Component::Architecture, rng);
      word_attention_[0] = AdditiveAttention::create(params_, "news.title.word_attention", dims.d_news,
                                                     dims.attention_hidden, Component::Architecture, rng);
      raw_width[0] = dims.d_news;
    }
  } else {
    if (!resources_.title_store) throw Error(ErrorKind::DataMissing, "LLM mode needs a precomputed news store");
    const std::size_t expected = config_.lm.last_tokens * dims.llm_dim;
    for (const auto* store : {resources_.title_store, resources_.abstract_store}) {
      if (!store) continue;
      if (store->dim() != expected) {
        throw Error(ErrorKind::DimMismatch, "store width " + std::to_string(store->dim()) + " but l·d_llm = " +
                                                std::to_string(expected));
      }
      embeddings::validate_prompt(*store);
    }
    raw_width[0] = raw_width[1] = expected;
  }

  // Architecture heads.
  if (arch == Architecture::Lstur) {
    category_table_ = params_.add("news.category_embedding", {std::max<std::size_t>(resources_.num_categories, 1),
                                                              dims.category_dim},
                                  Component::Architecture, Init::Uniform01, rng);
    subcategory_table_ = params_.add("news.subcategory_embedding",
                                     {std::max<std::size_t>(resources_.num_subcategories, 1), dims.category_dim},
                                     Component::Architecture, Init::Uniform01, rng);
    lstur_fc_ = Dense::create(params_, "news.fc", raw_width[0] + 2 * dims.category_dim, dims.d_news,
                              Component::FullyConnected, rng);
  } else {
    for (std::size_t v = 0; v < views; ++v) {
      view_fc_[v] = Dense::create(params_, v == 0 ? "news.title.fc" : "news.abstract.fc", raw_width[v], dims.d_news,
                                  Component::FullyConnected, rng);
    }
    if (arch == Architecture::Naml) {
      view_attention_ = AdditiveAttention::create(params_, "news.view_attention", dims.d_news, dims.attention_hidden,
                                                  Component::Architecture, rng);
    }
  }

  // User encoder.
  switch (arch) {
    case Architecture::Naml:
      user_attention_ = AdditiveAttention::create(params_, "user.attention", dims.d_news, dims.attention_hidden,
                                                  Component::Architecture, rng);
      break;
    case Architecture::Nrms:
      user_mhsa_ = MultiHeadSelfAttention::create(params_, "user.mhsa", dims.d_news, dims.d_news, dims.user_heads,
                                                  Component::Architecture, rng);
      user_attention_ = AdditiveAttention::create(params_, "user.attention", dims.d_news, dims.attention_hidden,
                                                  Component::Architecture, rng);
      break;
    case Architecture::Lstur:
      user_table_ = params_.add("user.embedding", {std::max<std::size_t>(resources_.num_users, 1), dims.d_news},
                                Component::UserTable, Init::Uniform01, rng);
      gru_ = GruCell::create(params_, "user.gru", dims.d_news, dims.d_news, Component::Architecture, rng);
      break;
  }

  if (transformer_) apply_freeze_depth(params_, *transformer_, config_.lm.freeze_depth);
}

Tensor NewsRecModel::text_vector(const corpus::NewsArticle& article, bool abstract_view,
                                 const ForwardContext& ctx) const {
  const std::size_t v = abstract_view ? 1 : 0;
  const std::vector<int>& ids = abstract_view ? article.abstract_tokens : article.title_tokens;
  switch (config_.lm.kind) {
    case LmKind::SlmFrozen:
    case LmKind::SlmTuned: {
      if (config_.dims.slm_text == SlmTextEncoder::Concat) {
        const Tensor words = ad::gather_rows(word_table_, ids, Vocabulary::kPad);
        return ad::reshape(words, {1, words.size()});
      }
      const Tensor words = ctx.apply_dropout(ad::gather_rows(word_table_, ids, Vocabulary::kPad));
      const ad::Mask mask = token_mask(ids);
      if (config_.architecture == Architecture::Nrms) {
        return nrms_pooled(words, mask, news_mhsa_, word_attention_[v], ctx);
      }
      return cnn_text_view(words, mask, conv_[v], word_attention_[v], ctx);
    }
    case LmKind::Plm:
      return transformer_->cls(transformer_ids(ids));
    case LmKind::Llm: {
      const auto* store = abstract_view ? resources_.abstract_store : resources_.title_store;
      return stored_vector(*store, article.news_id);
    }
  }
  throw Error(ErrorKind::InvalidSpec, "unhandled LM mode");
}

Tensor NewsRecModel::encode_news(const corpus::NewsArticle& article, const ForwardContext& ctx) const {
  const auto& dims = config_.dims;
  if (article.title_tokens.size() != dims.max_title ||
      (config_.architecture == Architecture::Naml && article.abstract_tokens.size() != dims.max_abstract)) {
    throw Error(ErrorKind::ShapeMismatch, "article " + article.news_id + " is not padded to the configured lengths");
  }
  if (config_.architecture == Architecture::Lstur) {
    return lstur_news(text_vector(article, false, ctx), article.category_id, article.subcategory_id, category_table_,
                      subcategory_table_, lstur_fc_, ctx);
  }

  const auto view = [&](std::size_t v) -> Tensor {
    const bool abstract_view = v == 1;
    const std::vector<int>& ids = abstract_view ? article.abstract_tokens : article.title_tokens;
    switch (config_.lm.kind) {
      case LmKind::SlmFrozen:
      case LmKind::SlmTuned:
        if (dims.slm_text == SlmTextEncoder::Concat) return encode_news_slm(word_table_, ids, view_fc_[v], ctx);
        if (config_.architecture == Architecture::Nrms) {
          const Tensor words = ctx.apply_dropout(ad::gather_rows(word_table_, ids, Vocabulary::kPad));
          return nrms_news(words, token_mask(ids), news_mhsa_, word_attention_[v], view_fc_[v], ctx);
        }
        return view_fc_[v](ctx.apply_dropout(text_vector(article, abstract_view, ctx)));
      case LmKind::Plm: {
        const auto tids = transformer_ids(ids);
        if (config_.architecture == Architecture::Nrms && dims.plm_nrms_mhsa) {
          return nrms_news(transformer_->forward(tids), token_mask(tids), news_mhsa_, word_attention_[0],
                           view_fc_[0], ctx);
        }
        return encode_news_plm(*transformer_, tids, view_fc_[v], ctx);
      }
      case LmKind::Llm:
        return encode_news_llm(abstract_view ? *resources_.abstract_store : *resources_.title_store, article.news_id,
                               view_fc_[v], ctx);
    }
    throw Error(ErrorKind::InvalidSpec, "unhandled LM mode");
  };

  const Tensor title = view(0);
  if (config_.architecture == Architecture::Nrms) return title;

  bool has_abstract = article.abstract_tokens.empty() ? false : article.abstract_tokens[0] != Vocabulary::kPad;
  if (config_.lm.kind == LmKind::Llm) has_abstract = resources_.abstract_store != nullptr && has_abstract;
  return naml_news(title, has_abstract ? std::optional<Tensor>(view(1)) : std::nullopt, view_attention_);
}

Tensor NewsRecModel::encode_user(std::span<const Tensor> history, int user_index, const ForwardContext& ctx) const {
  const std::size_t d = config_.dims.d_news;
  if (user_index < 0 || (user_table_.defined() && static_cast<std::size_t>(user_index) >= user_table_.rows())) {
    user_index = 0;
  }
  if (history.empty()) {
    if (config_.architecture == Architecture::Lstur) {
      const int row[] = {user_index};
      return ad::gather_rows(user_table_, row);
    }
    return Tensor::zeros({1, d});
  }
  const Tensor stacked = ad::concat_rows(history);
  switch (config_.architecture) {
    case Architecture::Naml: return naml_user(stacked, {}, user_attention_);
    case Architecture::Nrms: return nrms_user(stacked, {}, user_mhsa_, user_attention_, ctx);
    case Architecture::Lstur: return lstur_user(stacked, {}, user_table_, user_index, gru_);
  }
  throw Error(ErrorKind::InvalidSpec, "unhandled architecture");
}

Tensor NewsRecModel::score(const Tensor& user, std::span<const Tensor> candidates) {
  const Tensor stacked = ad::concat_rows(candidates);
  if (stacked.cols() != user.cols()) throw Error(ErrorKind::ShapeMismatch, "user and news widths differ");
  return ad::matmul_nt(user, stacked);
}

}  // namespace newsrec::encoders
