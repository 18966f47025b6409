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

#include "newsrec/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "newsrec/error.hpp"
#include "newsrec/random.hpp"

namespace newsrec::synthetic {

using corpus::Candidate;
using corpus::Impression;
using corpus::NewsArticle;

namespace {

std::string words_text(Rng& rng, std::size_t topic, std::size_t total, std::size_t from_topic,
                       const SyntheticConfig& c) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < total; ++i) {
    if (i < from_topic) {
      words.push_back("t" + std::to_string(topic) + "w" + std::to_string(uniform_index(rng, c.words_per_topic)));
    } else {
      words.push_back("g" + std::to_string(uniform_index(rng, c.generic_words)));
    }
  }
  shuffle(std::span<std::string>(words), rng);
  std::string text;
  for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
  return text;
}

std::size_t pick(Rng& rng, const std::vector<std::size_t>& pool) { return pool[uniform_index(rng, pool.size())]; }

void write_split(const corpus::NewsCatalog& catalog, const std::vector<Impression>& impressions,
                 const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream news(dir / "news.tsv");
  for (const auto& a : catalog.articles) {
    news << a.news_id << '\t' << a.category << '\t' << a.subcategory << '\t' << a.raw_title << '\t' << a.raw_abstract
         << "\t\t[]\t[]\n";
  }
  std::ofstream behaviors(dir / "behaviors.tsv");
  for (const auto& imp : impressions) behaviors << corpus::format_behaviors_line(imp) << '\n';
  if (!news || !behaviors) throw Error(ErrorKind::Io, "failed writing " + dir.string());
}

}  // namespace

std::string format_time(std::int64_t seconds) {
  const std::int64_t day = 9 + seconds / 86400;
  const std::int64_t in_day = seconds % 86400;
  const std::int64_t h24 = in_day / 3600;
  const std::int64_t h12 = h24 % 12 == 0 ? 12 : h24 % 12;
  char buf[40];
  std::snprintf(buf, sizeof buf, "11/%lld/2019 %lld:%02lld:%02lld %s", static_cast<long long>(day),
                static_cast<long long>(h12), static_cast<long long>(in_day / 60 % 60),
                static_cast<long long>(in_day % 60), h24 < 12 ? "AM" : "PM");
  return buf;
}

SyntheticCorpus generate(const SyntheticConfig& c) {
  if (c.topics < 2 || c.articles < c.topics || c.users == 0 || c.impressions < 2 || c.min_negatives == 0 ||
      c.min_negatives > c.max_negatives || c.title_topic_words > c.title_words ||
      c.abstract_topic_words > c.abstract_words || c.min_history > c.max_history) {
    throw Error(ErrorKind::InvalidSpec, "inconsistent synthetic corpus settings");
  }
  Rng rng(c.seed);
  SyntheticCorpus out;
  std::vector<std::vector<std::size_t>> by_topic(c.topics);
  for (std::size_t i = 0; i < c.articles; ++i) {
    const std::size_t topic = i % c.topics;
    NewsArticle a;
    a.news_id = "N" + std::to_string(i + 1);
    a.category = "cat" + std::to_string(uniform_index(rng, c.categories));
    a.subcategory = "sub" + std::to_string(uniform_index(rng, c.subcategories));
    a.raw_title = words_text(rng, topic, c.title_words, c.title_topic_words, c);
    if (uniform01(rng) >= c.empty_abstract_rate) {
      a.raw_abstract = words_text(rng, topic, c.abstract_words, c.abstract_topic_words, c);
    }
    by_topic[topic].push_back(out.catalog.size());
    out.article_topic.push_back(topic);
    out.catalog.add(std::move(a));
  }

  struct User {
    std::size_t topic;
    std::vector<std::string> history;
  };
  std::vector<User> users(c.users);
  for (auto& u : users) {
    u.topic = uniform_index(rng, c.topics);
    const std::size_t len = c.min_history + uniform_index(rng, c.max_history - c.min_history + 1);
    for (std::size_t i = 0; i < len; ++i) {
      std::size_t topic = u.topic;
      if (uniform01(rng) < c.history_noise) topic = uniform_index(rng, c.topics);
      u.history.push_back(out.catalog.articles[pick(rng, by_topic[topic])].news_id);
    }
  }

  std::vector<Impression> all;
  for (std::size_t i = 0; i < c.impressions; ++i) {
    const std::size_t uid = uniform_index(rng, c.users);
    const User& u = users[uid];
    Impression imp;
    imp.impression_id = std::to_string(i + 1);
    imp.user_id = "U" + std::to_string(uid + 1);
    imp.raw_time = format_time(static_cast<std::int64_t>(i) * 60);
    imp.timestamp = corpus::parse_timestamp(imp.raw_time).value();
    imp.history = u.history;
    const std::size_t positives = 1 + uniform_index(rng, 2);
    for (std::size_t p = 0; p < positives; ++p) {
      imp.candidates.push_back({out.catalog.articles[pick(rng, by_topic[u.topic])].news_id, 1});
    }
    const std::size_t negatives = c.min_negatives + uniform_index(rng, c.max_negatives - c.min_negatives + 1);
    for (std::size_t n = 0; n < negatives; ++n) {
      std::size_t topic = uniform_index(rng, c.topics - 1);
      if (topic >= u.topic) ++topic;
      imp.candidates.push_back({out.catalog.articles[pick(rng, by_topic[topic])].news_id, 0});
    }
    shuffle(std::span<Candidate>(imp.candidates), rng);
    all.push_back(std::move(imp));
  }
  const std::size_t test = static_cast<std::size_t>(static_cast<double>(all.size()) * c.test_fraction);
  out.test.assign(all.end() - static_cast<std::ptrdiff_t>(test), all.end());
  all.resize(all.size() - test);
  out.train = std::move(all);
  return out;
}

void write_mind_layout(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  write_split(corpus.catalog, corpus.train, dir / "train");
  write_split(corpus.catalog, corpus.test, dir / "dev");
}

}  // namespace newsrec::synthetic
