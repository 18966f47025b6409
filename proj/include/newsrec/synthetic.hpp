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
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "newsrec/corpus.hpp"

namespace newsrec::synthetic {

/// A corpus whose clicks follow latent topic match. Titles mix a few words
/// from the article's topic pool with generic filler; categories are drawn
/// independently of topic so they carry no signal.
struct SyntheticConfig {
  std::size_t topics = 5;
  std::size_t articles = 2000;
  std::size_t impressions = 5000;
  std::size_t users = 600;
  std::size_t words_per_topic = 200;
  std::size_t generic_words = 300;
  std::size_t title_words = 8;
  std::size_t title_topic_words = 3;
  std::size_t abstract_words = 14;
  std::size_t abstract_topic_words = 4;
  double empty_abstract_rate = 0.1;
  std::size_t categories = 6;
  std::size_t subcategories = 12;
  std::size_t min_history = 1;
  std::size_t max_history = 15;
  double history_noise = 0.1;  // share of history clicks off the user's topic
  std::size_t min_negatives = 4;
  std::size_t max_negatives = 9;
  double test_fraction = 0.2;  // latest impressions
  std::uint64_t seed = 2024;
};

struct SyntheticCorpus {
  corpus::NewsCatalog catalog;
  std::vector<corpus::Impression> train;
  std::vector<corpus::Impression> test;
  std::vector<std::size_t> article_topic;  // by catalog index
};

SyntheticCorpus generate(const SyntheticConfig& config);

/// "M/D/YYYY h:mm:ss AM" for a time `seconds` after 11/9/2019 12:00:00 AM.
std::string format_time(std::int64_t seconds);

/// Writes <dir>/train and <dir>/dev, each with news.tsv and behaviors.tsv.
void write_mind_layout(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

}  // namespace newsrec::synthetic
