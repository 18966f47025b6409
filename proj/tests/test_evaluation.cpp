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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "newsrec/error.hpp"
#include "newsrec/evaluation.hpp"
#include "newsrec/layers.hpp"
#include "oracles.hpp"

namespace {

using namespace newsrec;
using namespace newsrec::evaluation;
using oracle::Vec;

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no exception";
  return ErrorKind::Io;
}

double auc(Vec s, std::vector<int> l) { return metric_auc(s, l); }
double mrr(Vec s, std::vector<int> l) { return metric_mrr(s, l); }
double ndcg(Vec s, std::vector<int> l, std::size_t k) { return metric_ndcg(s, l, k); }

TEST(Auc, Examples) {
  EXPECT_EQ(auc({0.9, 0.3, 0.5}, {1, 0, 0}), 1.0);
  EXPECT_EQ(auc({0.2, 0.8}, {1, 0}), 0.0);
  EXPECT_EQ(auc({0.5, 0.5}, {1, 0}), 0.5);
  EXPECT_EQ(kind_of([] { auc({0.1, 0.2}, {1, 1}); }), ErrorKind::DegenerateImpression);
  EXPECT_EQ(kind_of([] { auc({0.1, 0.2}, {0, 0}); }), ErrorKind::DegenerateImpression);
}

TEST(Mrr, Examples) {
  EXPECT_EQ(mrr({0.9, 0.1, 0.2}, {1, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(mrr({0.1, 0.9, 0.2}, {1, 0, 0}), 1.0 / 3);
  EXPECT_DOUBLE_EQ(mrr({0.5, 0.5}, {0, 1}), 0.5);  // tie: earlier candidate ranks first
  EXPECT_EQ(kind_of([] { mrr({0.1}, {0}); }), ErrorKind::NoPositive);
}

TEST(Ndcg, Examples) {
  EXPECT_NEAR(ndcg({0.9, 0.5, 0.1}, {0, 1, 0}, 5), 1.0 / std::log2(3.0), 1e-15);
  EXPECT_NEAR(ndcg({0.9, 0.5, 0.1}, {0, 1, 0}, 5), 0.63093, 1e-5);
  EXPECT_EQ(ndcg({6, 5, 4, 3, 2, 1}, {0, 0, 0, 0, 0, 1}, 5), 0.0);
  EXPECT_GT(ndcg({6, 5, 4, 3, 2, 1}, {0, 0, 0, 0, 0, 1}, 10), 0.0);
  EXPECT_EQ(kind_of([] { ndcg({0.1}, {0}, 5); }), ErrorKind::NoPositive);
}

struct Instance {
  Vec scores;
  std::vector<int> labels;
};

Instance random_instance(std::mt19937_64& rng, std::size_t max_n = 50, bool ties = true) {
  const std::size_t n = 2 + rng() % (max_n - 1);
  Instance in;
  for (std::size_t i = 0; i < n; ++i) {
    // Coarse grid so ties are common.
    in.scores.push_back(ties ? static_cast<double>(rng() % 7) / 7.0 : oracle::random_vec(rng, 1)[0]);
    in.labels.push_back(rng() % 4 == 0);
  }
  in.labels[0] = 1;
  in.labels[1] = 0;
  return in;
}

TEST(Auc, EqualsPairwiseCountExactly) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 2000; ++t) {
    const auto in = random_instance(rng, 50, t % 2 == 0);
    EXPECT_EQ(metric_auc(in.scores, in.labels), oracle::brute_auc(in.scores, in.labels));
  }
}

TEST(Ranking, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 1000; ++t) {
    auto in = random_instance(rng, 20, t % 2 == 0);
    // One positive: a single reciprocal rank, so equality is exact. More
    // positives differ only in the order the reciprocals are summed.
    if (t % 3 == 0) std::fill(in.labels.begin() + 1, in.labels.end(), 0);
    if (std::count(in.labels.begin(), in.labels.end(), 1) == 1)
      EXPECT_EQ(metric_mrr(in.scores, in.labels), oracle::brute_mrr(in.scores, in.labels));
    else
      EXPECT_NEAR(metric_mrr(in.scores, in.labels), oracle::brute_mrr(in.scores, in.labels), 1e-15);
    for (std::size_t k : {5u, 10u})
      EXPECT_NEAR(metric_ndcg(in.scores, in.labels, k), oracle::brute_ndcg(in.scores, in.labels, k), 1e-12);
  }
}

TEST(Ranking, StrictlyIncreasingTransformInvariance) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 500; ++t) {
    const auto in = random_instance(rng, 30, t % 2 == 0);
    Vec warped;
    for (double s : in.scores) warped.push_back(std::exp(3.0 * s) - 7.0);
    EXPECT_EQ(metric_auc(in.scores, in.labels), metric_auc(warped, in.labels));
    EXPECT_EQ(metric_mrr(in.scores, in.labels), metric_mrr(warped, in.labels));
    EXPECT_EQ(metric_ndcg(in.scores, in.labels, 5), metric_ndcg(warped, in.labels, 5));
    EXPECT_EQ(metric_ndcg(in.scores, in.labels, 10), metric_ndcg(warped, in.labels, 10));
  }
}

TEST(PairwiseSum, IndependentOfChunking) {
  std::vector<double> v;
  std::mt19937_64 rng(4);
  for (int i = 0; i < 1000; ++i) v.push_back(oracle::random_vec(rng, 1, -1e6, 1e6)[0]);
  long double exact = 0;
  for (double x : v) exact += x;
  EXPECT_NEAR(pairwise_sum(v), static_cast<double>(exact), 1e-6);
  EXPECT_EQ(pairwise_mean({}), 0.0);
  EXPECT_EQ(pairwise_mean(std::vector<double>{2.0, 4.0}), 3.0);
}

corpus::Impression imp(std::string id, std::string user, std::vector<int> labels, std::size_t history = 0) {
  corpus::Impression i;
  i.impression_id = std::move(id);
  i.user_id = std::move(user);
  for (std::size_t h = 0; h < history; ++h) i.history.push_back("H" + std::to_string(h));
  for (std::size_t c = 0; c < labels.size(); ++c) i.candidates.push_back({"N" + std::to_string(c), labels[c]});
  return i;
}

TEST(EvaluateRun, PerfectRanker) {
  const std::vector<corpus::Impression> imps{imp("1", "U", {1, 0, 0}), imp("2", "U", {0, 0, 1, 0})};
  const Predictions preds{{"1", {3, 2, 1}}, {"2", {0, 1, 5, 4}}};
  const MetricReport r = evaluate_run(preds, imps);
  EXPECT_EQ(r.auc, 100.0);
  EXPECT_EQ(r.mrr, 100.0);
  EXPECT_EQ(r.ndcg5, 100.0);
  EXPECT_EQ(r.ndcg10, 100.0);
  EXPECT_EQ(r.impressions, 2u);
}

TEST(EvaluateRun, PerfectRankingOfTwoClicksAveragesReciprocalRanks) {
  const MetricReport r = evaluate_run({{"1", {0, 5, 4, 1}}}, {imp("1", "U", {0, 1, 1, 0})});
  EXPECT_EQ(r.auc, 100.0);
  EXPECT_EQ(r.mrr, 75.0);
  EXPECT_EQ(r.ndcg5, 100.0);
}

TEST(EvaluateRun, TwoImpressionHandAverage) {
  const std::vector<corpus::Impression> imps{imp("1", "U1", {1, 0, 0}), imp("2", "U2", {0, 1})};
  // Impression 1: positive ranked 2nd of 3 → AUC 0.5, MRR 0.5, nDCG 1/log2(3).
  // Impression 2: positive ranked 1st → all 1.
  const Predictions preds{{"2", {0.1, 0.9}}, {"1", {0.5, 0.9, 0.1}}};
  const MetricReport r = evaluate_run(preds, imps);
  EXPECT_DOUBLE_EQ(r.auc, 75.0);
  EXPECT_DOUBLE_EQ(r.mrr, 75.0);
  EXPECT_NEAR(r.ndcg5, 50.0 * (1.0 + 1.0 / std::log2(3.0)), 1e-12);
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.records[0].user_id, "U1");
}

TEST(EvaluateRun, SingleClassImpressionSkippedForAucButCounted) {
  const std::vector<corpus::Impression> imps{imp("1", "U", {1, 0}), imp("2", "U", {1, 1})};
  const MetricReport r = evaluate_run({{"1", {1, 0}}, {"2", {0.3, 0.2}}}, imps);
  EXPECT_EQ(r.auc_skipped, 1u);
  EXPECT_EQ(r.auc, 100.0);
  EXPECT_FALSE(r.records[1].auc.has_value());
  EXPECT_TRUE(r.records[1].mrr.has_value());
}

TEST(EvaluateRun, MissingScores) {
  const std::vector<corpus::Impression> imps{imp("1", "U", {1, 0})};
  EXPECT_EQ(kind_of([&] { evaluate_run({}, imps); }), ErrorKind::MissingScores);
  EXPECT_EQ(kind_of([&] { evaluate_run({{"1", {0.5}}}, imps); }), ErrorKind::MissingScores);
}

TEST(EvaluateRun, RandomRankerNearHalf) {
  std::mt19937_64 rng(5);
  std::vector<corpus::Impression> imps;
  Predictions preds;
  for (int i = 0; i < 40000; ++i) {
    std::vector<int> labels(2 + rng() % 20, 0);
    labels[rng() % labels.size()] = 1;
    imps.push_back(imp(std::to_string(i), "U", labels));
    preds.push_back({std::to_string(i), oracle::random_vec(rng, labels.size())});
  }
  EXPECT_NEAR(evaluate_run(preds, imps).auc, 50.0, 0.5);
}

TEST(Dump, RoundTripAndQuantization) {
  const Predictions preds{{"7", {quantize_score(1.0 / 3), quantize_score(-2.5e-12)}}, {"8", {quantize_score(1e9 + 0.5)}}};
  std::stringstream buf;
  write_predictions(preds, buf);
  EXPECT_EQ(buf.str(), "7\t0.333333333,-2.5e-12\n8\t1e+09\n");
  const Predictions back = read_predictions(buf);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].scores, preds[0].scores);
  EXPECT_EQ(back[1].scores, preds[1].scores);
  EXPECT_EQ(quantize_score(quantize_score(0.1234567891234)), quantize_score(0.1234567891234));
  EXPECT_EQ(kind_of([] { quantize_score(NAN); }), ErrorKind::NonFiniteScore);
  std::istringstream bad("7\t0.1,abc\n");
  EXPECT_EQ(kind_of([&] { read_predictions(bad); }), ErrorKind::MalformedLine);
}

TEST(Dump, DumpedScoresEvaluateIdentically) {
  std::mt19937_64 rng(6);
  std::vector<corpus::Impression> imps;
  Predictions raw, quantized;
  for (int i = 0; i < 300; ++i) {
    std::vector<int> labels(3 + rng() % 10, 0);
    labels[rng() % labels.size()] = 1;
    imps.push_back(imp(std::to_string(i), "U", labels));
    const Vec s = oracle::random_vec(rng, labels.size(), -20, 20);
    Vec q;
    for (double v : s) q.push_back(quantize_score(v));
    quantized.push_back({std::to_string(i), q});
  }
  std::stringstream buf;
  write_predictions(quantized, buf);
  const MetricReport a = evaluate_run(quantized, imps), b = evaluate_run(read_predictions(buf), imps);
  EXPECT_EQ(a.auc, b.auc);
  EXPECT_EQ(a.mrr, b.mrr);
  EXPECT_EQ(a.ndcg5, b.ndcg5);
  EXPECT_EQ(a.ndcg10, b.ndcg10);
}

TEST(Buckets, TenUsersInPairs) {
  std::vector<corpus::Impression> imps;
  for (int u = 0; u < 10; ++u) imps.push_back(imp(std::to_string(u), "U" + std::to_string(9 - u), {1, 0}, u + 1));
  const auto groups = bucket_users(imps);
  for (std::size_t g = 0; g < 5; ++g) {
    ASSERT_EQ(groups[g].users.size(), 2u);
    EXPECT_DOUBLE_EQ(groups[g].mean_history, 2.0 * g + 1.5);
  }
  EXPECT_EQ(groups[0].users, (std::vector<std::string>{"U9", "U8"}));
}

TEST(Buckets, EqualLengthsSplitBySize) {
  std::vector<corpus::Impression> imps;
  for (int u = 0; u < 12; ++u) imps.push_back(imp(std::to_string(u), "U" + std::to_string(u + 10), {1, 0}, 3));
  const auto groups = bucket_users(imps);
  std::vector<std::size_t> sizes;
  for (const auto& g : groups) sizes.push_back(g.users.size());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 2, 3, 2, 2}));  // cuts at ⌈2.4⌉, ⌈4.8⌉, ⌈7.2⌉, ⌈9.6⌉
  EXPECT_EQ(groups[0].users[0], "U10");
}

TEST(Buckets, PartitionProperty) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<corpus::Impression> imps;
    const std::size_t n = 1 + rng() % 200;
    for (std::size_t i = 0; i < n; ++i)
      imps.push_back(imp(std::to_string(i), "U" + std::to_string(rng() % 60), {1, 0}, rng() % 80));
    const auto groups = bucket_users(imps, 50);
    std::set<std::string> seen, expected;
    for (const auto& i : imps) expected.insert(i.user_id);
    std::size_t total = 0;
    for (std::size_t g = 0; g < 5; ++g) {
      for (const auto& u : groups[g].users) EXPECT_TRUE(seen.insert(u).second);
      total += groups[g].users.size();
      if (g > 0 && !groups[g].users.empty() && !groups[g - 1].users.empty())
        EXPECT_LE(groups[g - 1].mean_history, groups[g].mean_history);
      EXPECT_LE(groups[g].mean_history, 50.0);
    }
    EXPECT_EQ(seen, expected);
    EXPECT_EQ(total, expected.size());
  }
}

TEST(Buckets, LongestHistoryPerUserAndCap) {
  const auto groups = bucket_users({imp("1", "A", {1, 0}, 3), imp("2", "A", {1, 0}, 70), imp("3", "B", {1, 0}, 1)}, 50);
  // n = 2: cuts at ⌈0.4⌉, ⌈0.8⌉, ⌈1.2⌉, ⌈1.6⌉.
  EXPECT_EQ(groups[0].users, (std::vector<std::string>{"B"}));
  EXPECT_EQ(groups[2].users, (std::vector<std::string>{"A"}));
  EXPECT_EQ(groups[2].mean_history, 50.0);
  EXPECT_TRUE(groups[4].users.empty());
}

MetricReport records(std::vector<std::pair<std::string, double>> per_user_auc) {
  MetricReport r;
  int i = 0;
  for (const auto& [user, a] : per_user_auc) r.records.push_back({std::to_string(i++), user, a, 1.0, 1.0, 1.0});
  return r;
}

TEST(GroupReport, ThreeEncoderToySweep) {
  std::array<UserGroup, 5> groups;
  for (int g = 0; g < 5; ++g) groups[g] = {{"U" + std::to_string(2 * g), "U" + std::to_string(2 * g + 1)}, 1.0 + g};
  std::vector<std::pair<std::string, double>> base, better, mixed;
  for (int u = 0; u < 10; ++u) {
    base.emplace_back("U" + std::to_string(u), 0.5);
    better.emplace_back("U" + std::to_string(u), 0.55);
    mixed.emplace_back("U" + std::to_string(u), u % 2 ? 0.6 : 0.4);
  }
  const MetricReport rb = records(base), re = records(better), rm = records(mixed);
  const NamedReport named[] = {{"glove", &rb}, {"bert", &re}, {"llm", &rm}};
  const GroupReport r = group_report(groups, named, "glove");
  for (const auto& row : r.groups) {
    EXPECT_EQ(row.users, 2u);
    EXPECT_DOUBLE_EQ(*row.auc[0], 50.0);
    EXPECT_DOUBLE_EQ(*row.auc[1], 55.0);
    EXPECT_DOUBLE_EQ(*row.auc[2], 50.0);
    EXPECT_EQ(*row.relative_change[0], 0.0);
    EXPECT_NEAR(*row.relative_change[1], 0.10, 1e-12);
    EXPECT_NEAR(*row.relative_change[2], 0.0, 1e-12);
  }
  const std::string table = group_report_table(r);
  EXPECT_NE(table.find("bert vs glove"), std::string::npos);
  EXPECT_NE(table.find("+10.00%"), std::string::npos);
  const std::string csv = group_report_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "group,users,mean_history,encoder,auc,relative_change");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 16);
  EXPECT_EQ(kind_of([&] { group_report(groups, named, "roberta"); }), ErrorKind::BaselineMissing);
}

TEST(ParamCount, DenseArithmeticAndComponents) {
  autodiff::ParamGraph g;
  Rng rng(1);
  autodiff::Dense::create(g, "fc", 20 * 300, 256, autodiff::Component::FullyConnected, rng);
  g.add("table", {1000, 300}, autodiff::Component::LanguageModel, autodiff::Init::Zeros, rng, false);
  g.add("users", {10, 4}, autodiff::Component::UserTable, autodiff::Init::Zeros, rng);
  const ParamAccount a = count_params(g);
  EXPECT_EQ(a.by_component[static_cast<std::size_t>(autodiff::Component::FullyConnected)].total, 1536256u);
  EXPECT_EQ(a.total, 1536256u + 300000u + 40u);
  EXPECT_EQ(a.trainable, 1536256u + 40u);
  EXPECT_EQ(a.by_component[static_cast<std::size_t>(autodiff::Component::LanguageModel)].trainable, 0u);
  std::size_t sum_total = 0, sum_trainable = 0;
  for (const auto& c : a.by_component) {
    sum_total += c.total;
    sum_trainable += c.trainable;
  }
  EXPECT_EQ(sum_total, a.total);
  EXPECT_EQ(sum_trainable, a.trainable);
}

}  // namespace
