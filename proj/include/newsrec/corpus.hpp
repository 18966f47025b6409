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

// MIND-layout ingestion: news catalogs, behavior logs, vocabularies and
// sampled training examples.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "newsrec/random.hpp"

namespace newsrec::corpus {

/// Dense ids for category names. Id 0 is reserved for unknown names.
class Interner {
 public:
  Interner();
  int intern(std::string_view name);
  /// 0 when absent.
  int find(std::string_view name) const;
  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return names_.size(); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> ids_;
};

struct NewsArticle {
  std::string news_id;
  std::string category;
  std::string subcategory;
  int category_id = 0;
  int subcategory_id = 0;
  std::string raw_title;
  std::string raw_abstract;
  // Filled by encode_catalog.
  std::vector<int> title_tokens;
  std::vector<int> abstract_tokens;
};

struct NewsCatalog {
  std::vector<NewsArticle> articles;
  std::unordered_map<std::string, std::size_t> by_id;
  Interner categories;
  Interner subcategories;

  std::optional<std::size_t> index_of(std::string_view news_id) const;
  const NewsArticle& at(std::string_view news_id) const;
  std::size_t size() const { return articles.size(); }

  /// Appends with a fresh interned category id; throws DuplicateId.
  void add(NewsArticle article);
};

/// Lines "id\tcategory\tsubcategory\ttitle\tabstract[\t...]". Throws
/// MalformedLine(line_no) and DuplicateId.
NewsCatalog parse_news(std::istream& in);
NewsCatalog parse_news_file(const std::filesystem::path& path);

/// Adds every article of `extra` whose id is not already present.
void merge_catalog(NewsCatalog& into, const NewsCatalog& extra);

struct Candidate {
  std::string news_id;
  int label = 0;
};

struct Impression {
  std::string impression_id;
  std::string user_id;
  std::string raw_time;
  std::int64_t timestamp = 0;  // seconds since epoch, parsed from raw_time
  std::vector<std::string> history;
  std::vector<Candidate> candidates;
};

/// Parses "M/D/YYYY h:mm:ss AM|PM". Returns nullopt on malformed input.
std::optional<std::int64_t> parse_timestamp(std::string_view text);

/// Lines "impression\tuser\ttime\thistory\tcandidates". Throws MalformedLine
/// and MalformedLabel.
std::vector<Impression> parse_behaviors(std::istream& in);
std::vector<Impression> parse_behaviors_file(const std::filesystem::path& path);

/// Inverse of parse_behaviors for one impression.
std::string format_behaviors_line(const Impression& imp);

/// Lowercases and splits at whitespace; ASCII punctuation characters become
/// single-character tokens.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnknown = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kReserved = 4;

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& words);

  int id(std::string_view word) const;
  bool contains(std::string_view word) const;
  const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> ids_;
};

/// Keeps words with count ≥ min_count (min_count ≥ 1), ordered by count
/// descending then lexicographically.
Vocabulary build_vocabulary(const std::map<std::string, std::size_t>& counts, std::size_t min_count);
/// Counts tokens of titles and abstracts.
Vocabulary build_vocabulary(const NewsCatalog& catalog, std::size_t min_count);

/// Truncates to max_len and right-pads with the pad id.
std::vector<int> encode_text(const std::vector<std::string>& words, const Vocabulary& vocab, std::size_t max_len);
/// [CLS] w₁ … w_m [SEP] with m ≤ max_words, right-padded to max_words + 2.
std::vector<int> encode_for_transformer(const std::vector<std::string>& words, const Vocabulary& vocab,
                                        std::size_t max_words);

/// Fills title_tokens / abstract_tokens for every article.
void encode_catalog(NewsCatalog& catalog, const Vocabulary& vocab, std::size_t max_title, std::size_t max_abstract);

/// Most recent `max_history` clicks, left-padded with empty ids to exactly
/// max_history entries.
std::vector<std::string> padded_history(const std::vector<std::string>& history, std::size_t max_history);

struct TrainingSample {
  std::string impression_id;
  std::string user_id;
  std::vector<std::string> history;  // padded_history; "" marks a pad slot
  std::string positive;
  std::vector<std::string> negatives;
};

/// K negatives from the impression's label-0 candidates: without replacement
/// when at least K exist, with replacement otherwise. Throws
/// NoNegativesAvailable and MalformedLabel (positive not clicked).
TrainingSample sample_negatives(const Impression& imp, std::string_view positive, std::size_t k, Rng& rng,
                                std::size_t max_history = 50);

/// One sample per clicked candidate. Impression i uses a stream derived from
/// (seed, i) so the output does not depend on call order. Impressions without
/// negatives are skipped.
std::vector<TrainingSample> build_training_samples(const std::vector<Impression>& impressions, std::size_t k,
                                                   std::uint64_t seed, std::size_t max_history = 50);

struct CorpusStats {
  std::size_t users = 0;
  std::size_t news = 0;
  double mean_title_words = 0.0;
  double mean_abstract_words = 0.0;
  std::size_t positive_clicks = 0;
  std::size_t negative_clicks = 0;
  std::size_t impressions = 0;
};

/// Word counts are whitespace-delimited over the raw text.
CorpusStats corpus_stats(const NewsCatalog& catalog, const std::vector<Impression>& impressions);

/// Fraction of `test` articles whose id is absent from `train`.
double unseen_fraction(const NewsCatalog& train, const NewsCatalog& test);

std::string stats_json(const CorpusStats& stats, std::optional<double> unseen);

/// "id\tcategory_id\tsubcategory_id\ttitle ids\tabstract ids", one row per article.
void write_normalized_news(const NewsCatalog& catalog, std::ostream& out);

}  // namespace newsrec::corpus
