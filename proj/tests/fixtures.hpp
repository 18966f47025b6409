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

// A synthetic corpus with everything a training run needs.

#include <memory>

#include "newsrec/encoders.hpp"
#include "newsrec/synthetic.hpp"
#include "newsrec/training.hpp"

namespace fixtures {

using namespace newsrec;

struct World {
  synthetic::SyntheticCorpus corpus;
  corpus::Vocabulary vocab;
  training::Dataset data;
  encoders::EncoderDims dims;

  encoders::ModelResources resources() const {
    encoders::ModelResources r;
    r.vocab_size = vocab.size();
    r.num_categories = corpus.catalog.categories.size();
    r.num_subcategories = corpus.catalog.subcategories.size();
    r.num_users = data.users.rows();
    return r;
  }

  std::unique_ptr<encoders::NewsRecModel> model(encoders::Architecture arch, std::string_view lm,
                                                std::uint64_t seed = 1) const {
    encoders::ModelConfig c;
    c.architecture = arch;
    c.lm = encoders::parse_lm_mode(lm);
    c.dims = dims;
    c.seed = seed;
    return std::make_unique<encoders::NewsRecModel>(c, resources());
  }

  training::RunConfig run(encoders::Architecture arch, std::string_view lm) const {
    training::RunConfig rc;
    rc.architecture = arch;
    rc.lm = encoders::parse_lm_mode(lm);
    return rc;
  }
};

/// Small widths that keep a full epoch on the default corpus to seconds.
inline encoders::EncoderDims compact_dims() {
  encoders::EncoderDims d;
  d.word_dim = 16;
  d.d_news = 32;
  d.news_heads = 4;
  d.user_heads = 4;
  d.conv_filters = 32;
  d.attention_hidden = 16;
  d.category_dim = 8;
  d.max_title = 10;
  d.max_abstract = 16;
  d.max_history = 30;
  d.plm_layers = 2;
  d.plm_dim = 16;
  d.plm_heads = 2;
  d.plm_ffn = 32;
  return d;
}

inline std::unique_ptr<World> make_world(const synthetic::SyntheticConfig& config,
                                         encoders::EncoderDims dims = compact_dims()) {
  auto w = std::make_unique<World>();
  w->corpus = synthetic::generate(config);
  w->vocab = corpus::build_vocabulary(w->corpus.catalog, 1);
  w->dims = dims;
  corpus::encode_catalog(w->corpus.catalog, w->vocab, dims.max_title, dims.max_abstract);
  auto [train, validation] = training::split_validation(w->corpus.train);
  w->data.catalog = &w->corpus.catalog;
  w->data.users = training::UserIndex(train);
  w->data.train = std::move(train);
  w->data.validation = std::move(validation);
  return w;
}

/// A few hundred impressions for unit tests.
inline synthetic::SyntheticConfig small_config(std::uint64_t seed = 7) {
  synthetic::SyntheticConfig c;
  c.articles = 200;
  c.impressions = 240;
  c.users = 40;
  c.words_per_topic = 30;
  c.generic_words = 40;
  c.seed = seed;
  return c;
}

}  // namespace fixtures
