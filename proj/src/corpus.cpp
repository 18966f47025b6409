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

#include "newsrec/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "newsrec/error.hpp"

namespace newsrec::corpus {

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ') ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

std::size_t whitespace_word_count(std::string_view s) {
  std::size_t n = 0;
  bool in_word = false;
  for (unsigned char c : s) {
    const bool space = std::isspace(c) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::DataMissing, "cannot open " + path.string());
  return in;
}

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

}  // namespace

Interner::Interner() {
  names_.emplace_back("<unk>");
  ids_.emplace("<unk>", 0);
}

int Interner::intern(std::string_view name) {
  auto it = ids_.find(std::string(name));
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(names_.size());
  names_.emplace_back(name);
  ids_.emplace(std::string(name), id);
  return id;
}

int Interner::find(std::string_view name) const {
  auto it = ids_.find(std::string(name));
  return it == ids_.end() ? 0 : it->second;
}

std::optional<std::size_t> NewsCatalog::index_of(std::string_view news_id) const {
  auto it = by_id.find(std::string(news_id));
  if (it == by_id.end()) return std::nullopt;
  return it->second;
}

const NewsArticle& NewsCatalog::at(std::string_view news_id) const {
  auto idx = index_of(news_id);
  if (!idx) throw Error(ErrorKind::DataMissing, "unknown news id " + std::string(news_id));
  return articles[*idx];
}

void NewsCatalog::add(NewsArticle article) {
  if (by_id.count(article.news_id)) throw Error(ErrorKind::DuplicateId, article.news_id);
  article.category_id = categories.intern(article.category);
  article.subcategory_id = subcategories.intern(article.subcategory);
  by_id.emplace(article.news_id, articles.size());
  articles.push_back(std::move(article));
}

NewsCatalog parse_news(std::istream& in) {
  NewsCatalog catalog;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = strip_cr(line);
    if (view.empty()) continue;
    const auto fields = split(view, '\t');
    if (fields.size() < 5) {
      throw Error(ErrorKind::MalformedLine, "news line " + std::to_string(line_no) + " has " +
                                                std::to_string(fields.size()) + " fields");
    }
    NewsArticle a;
    a.news_id = std::string(fields[0]);
    a.category = std::string(fields[1]);
    a.subcategory = std::string(fields[2]);
    a.raw_title = std::string(fields[3]);
    a.raw_abstract = std::string(fields[4]);
    if (catalog.by_id.count(a.news_id)) {
      throw Error(ErrorKind::DuplicateId, a.news_id + " (line " + std::to_string(line_no) + ")");
    }
    catalog.add(std::move(a));
  }
  return catalog;
}

NewsCatalog parse_news_file(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return parse_news(in);
}

void merge_catalog(NewsCatalog& into, const NewsCatalog& extra) {
  for (const NewsArticle& a : extra.articles) {
    if (into.by_id.count(a.news_id)) continue;
    NewsArticle copy = a;
    into.add(std::move(copy));
  }
}

std::optional<std::int64_t> parse_timestamp(std::string_view text) {
  // M/D/YYYY h:mm:ss AM
  int month = 0, day = 0, year = 0, hour = 0, minute = 0, second = 0;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  auto number = [&](int& out, char terminator) {
    auto [next, ec] = std::from_chars(p, end, out);
    if (ec != std::errc() || next == end || *next != terminator) return false;
    p = next + 1;
    return true;
  };
  if (!number(month, '/') || !number(day, '/') || !number(year, ' ') || !number(hour, ':') ||
      !number(minute, ':') || !number(second, ' ')) {
    return std::nullopt;
  }
  const std::string_view suffix(p, static_cast<std::size_t>(end - p));
  if (suffix != "AM" && suffix != "PM") return std::nullopt;
  if (month < 1 || month > 12 || day < 1 || day > 31 || hour < 1 || hour > 12 || minute > 59 || second > 60) {
    return std::nullopt;
  }
  int h24 = hour % 12 + (suffix == "PM" ? 12 : 0);
  const std::int64_t days = days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day));
  return days * 86400 + h24 * 3600 + minute * 60 + second;
}

std::vector<Impression> parse_behaviors(std::istream& in) {
  std::vector<Impression> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = strip_cr(line);
    if (view.empty()) continue;
    const auto fields = split(view, '\t');
    const std::string where = "behaviors line " + std::to_string(line_no);
    if (fields.size() != 5) {
      throw Error(ErrorKind::MalformedLine, where + " has " + std::to_string(fields.size()) + " fields");
    }
    Impression imp;
    imp.impression_id = std::string(fields[0]);
    imp.user_id = std::string(fields[1]);
    imp.raw_time = std::string(fields[2]);
    const auto ts = parse_timestamp(imp.raw_time);
    if (!ts) throw Error(ErrorKind::MalformedLine, where + ": bad time '" + imp.raw_time + "'");
    imp.timestamp = *ts;
    imp.history = split_words(fields[3]);
    for (const std::string& token : split_words(fields[4])) {
      const std::size_t dash = token.rfind('-');
      if (dash == std::string::npos || dash == 0) {
        throw Error(ErrorKind::MalformedLine, where + ": candidate '" + token + "' lacks a label");
      }
      const std::string label = token.substr(dash + 1);
      if (label != "0" && label != "1") {
        throw Error(ErrorKind::MalformedLabel, where + ": candidate '" + token + "'");
      }
      imp.candidates.push_back(Candidate{token.substr(0, dash), label == "1" ? 1 : 0});
    }
    if (imp.candidates.empty()) throw Error(ErrorKind::MalformedLine, where + " has no candidates");
    out.push_back(std::move(imp));
  }
  return out;
}

std::vector<Impression> parse_behaviors_file(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return parse_behaviors(in);
}

std::string format_behaviors_line(const Impression& imp) {
  std::string out = imp.impression_id + '\t' + imp.user_id + '\t' + imp.raw_time + '\t';
  for (std::size_t i = 0; i < imp.history.size(); ++i) {
    if (i) out += ' ';
    out += imp.history[i];
  }
  out += '\t';
  for (std::size_t i = 0; i < imp.candidates.size(); ++i) {
    if (i) out += ' ';
    out += imp.candidates[i].news_id;
    out += imp.candidates[i].label ? "-1" : "-0";
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      current += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
    }
  }
  flush();
  return out;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& words) {
  words_ = {"<pad>", "<unk>", "[CLS]", "[SEP]"};
  for (std::size_t i = 0; i < words_.size(); ++i) ids_.emplace(words_[i], static_cast<int>(i));
  for (const std::string& w : words) {
    if (ids_.count(w)) continue;
    ids_.emplace(w, static_cast<int>(words_.size()));
    words_.push_back(w);
  }
}

int Vocabulary::id(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  return it == ids_.end() ? kUnknown : it->second;
}

bool Vocabulary::contains(std::string_view word) const { return ids_.count(std::string(word)) != 0; }

Vocabulary build_vocabulary(const std::map<std::string, std::size_t>& counts, std::size_t min_count) {
  if (min_count < 1) min_count = 1;
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [w, c] : counts)
    if (c >= min_count) kept.emplace_back(w, c);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> words;
  words.reserve(kept.size());
  for (auto& [w, c] : kept) words.push_back(w);
  return Vocabulary(words);
}

Vocabulary build_vocabulary(const NewsCatalog& catalog, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const NewsArticle& a : catalog.articles) {
    for (auto& w : tokenize(a.raw_title)) ++counts[w];
    for (auto& w : tokenize(a.raw_abstract)) ++counts[w];
  }
  return build_vocabulary(counts, min_count);
}

std::vector<int> encode_text(const std::vector<std::string>& words, const Vocabulary& vocab, std::size_t max_len) {
  std::vector<int> ids(max_len, Vocabulary::kPad);
  for (std::size_t i = 0; i < std::min(max_len, words.size()); ++i) ids[i] = vocab.id(words[i]);
  return ids;
}

std::vector<int> encode_for_transformer(const std::vector<std::string>& words, const Vocabulary& vocab,
                                        std::size_t max_words) {
  std::vector<int> ids(max_words + 2, Vocabulary::kPad);
  const std::size_t m = std::min(max_words, words.size());
  ids[0] = Vocabulary::kCls;
  for (std::size_t i = 0; i < m; ++i) ids[i + 1] = vocab.id(words[i]);
  ids[m + 1] = Vocabulary::kSep;
  return ids;
}

void encode_catalog(NewsCatalog& catalog, const Vocabulary& vocab, std::size_t max_title, std::size_t max_abstract) {
  for (NewsArticle& a : catalog.articles) {
    a.title_tokens = encode_text(tokenize(a.raw_title), vocab, max_title);
    a.abstract_tokens = encode_text(tokenize(a.raw_abstract), vocab, max_abstract);
  }
}

std::vector<std::string> padded_history(const std::vector<std::string>& history, std::size_t max_history) {
  std::vector<std::string> out(max_history);
  const std::size_t n = std::min(max_history, history.size());
  const std::size_t skip = history.size() - n;
  for (std::size_t i = 0; i < n; ++i) out[max_history - n + i] = history[skip + i];
  return out;
}

TrainingSample sample_negatives(const Impression& imp, std::string_view positive, std::size_t k, Rng& rng,
                                std::size_t max_history) {
  const bool clicked = std::any_of(imp.candidates.begin(), imp.candidates.end(),
                                   [&](const Candidate& c) { return c.news_id == positive && c.label == 1; });
  if (!clicked) {
    throw Error(ErrorKind::MalformedLabel,
                std::string(positive) + " is not a clicked candidate of impression " + imp.impression_id);
  }
  std::vector<std::string> pool;
  for (const Candidate& c : imp.candidates)
    if (c.label == 0) pool.push_back(c.news_id);
  if (pool.empty()) throw Error(ErrorKind::NoNegativesAvailable, "impression " + imp.impression_id);

  TrainingSample s;
  s.impression_id = imp.impression_id;
  s.user_id = imp.user_id;
  s.history = padded_history(imp.history, max_history);
  s.positive = std::string(positive);
  if (pool.size() >= k) {
    // Partial Fisher-Yates: first k slots are a uniform draw without replacement.
    for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
    s.negatives.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  } else {
    for (std::size_t i = 0; i < k; ++i) s.negatives.push_back(pool[uniform_index(rng, pool.size())]);
  }
  return s;
}

std::vector<TrainingSample> build_training_samples(const std::vector<Impression>& impressions, std::size_t k,
                                                   std::uint64_t seed, std::size_t max_history) {
  std::vector<TrainingSample> out;
  for (std::size_t i = 0; i < impressions.size(); ++i) {
    const Impression& imp = impressions[i];
    const bool has_negative = std::any_of(imp.candidates.begin(), imp.candidates.end(),
                                          [](const Candidate& c) { return c.label == 0; });
    if (!has_negative) continue;
    Rng rng(derive_seed(seed, i));
    for (const Candidate& c : imp.candidates)
      if (c.label == 1) out.push_back(sample_negatives(imp, c.news_id, k, rng, max_history));
  }
  return out;
}

CorpusStats corpus_stats(const NewsCatalog& catalog, const std::vector<Impression>& impressions) {
  CorpusStats s;
  s.news = catalog.size();
  s.impressions = impressions.size();
  std::unordered_set<std::string> users;
  for (const Impression& imp : impressions) {
    users.insert(imp.user_id);
    for (const Candidate& c : imp.candidates) (c.label ? s.positive_clicks : s.negative_clicks) += 1;
  }
  s.users = users.size();
  if (!catalog.articles.empty()) {
    std::size_t title_words = 0, abstract_words = 0;
    for (const NewsArticle& a : catalog.articles) {
      title_words += whitespace_word_count(a.raw_title);
      abstract_words += whitespace_word_count(a.raw_abstract);
    }
    s.mean_title_words = static_cast<double>(title_words) / static_cast<double>(catalog.size());
    s.mean_abstract_words = static_cast<double>(abstract_words) / static_cast<double>(catalog.size());
  }
  return s;
}

double unseen_fraction(const NewsCatalog& train, const NewsCatalog& test) {
  if (test.articles.empty()) return 0.0;
  std::size_t unseen = 0;
  for (const NewsArticle& a : test.articles)
    if (!train.by_id.count(a.news_id)) ++unseen;
  return static_cast<double>(unseen) / static_cast<double>(test.size());
}

std::string stats_json(const CorpusStats& stats, std::optional<double> unseen) {
  nlohmann::ordered_json j;
  j["users"] = stats.users;
  j["news"] = stats.news;
  j["mean_title_words"] = stats.mean_title_words;
  j["mean_abstract_words"] = stats.mean_abstract_words;
  j["positive_clicks"] = stats.positive_clicks;
  j["negative_clicks"] = stats.negative_clicks;
  j["impressions"] = stats.impressions;
  if (unseen) j["unseen_test_news_fraction"] = *unseen;
  return j.dump(2);
}

void write_normalized_news(const NewsCatalog& catalog, std::ostream& out) {
  auto ids = [&](const std::vector<int>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << v[i];
  };
  for (const NewsArticle& a : catalog.articles) {
    out << a.news_id << '\t' << a.category_id << '\t' << a.subcategory_id << '\t';
    ids(a.title_tokens);
    out << '\t';
    ids(a.abstract_tokens);
    out << '\n';
  }
}

}  // namespace newsrec::corpus
