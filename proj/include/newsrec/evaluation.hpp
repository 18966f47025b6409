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

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "newsrec/corpus.hpp"
#include "newsrec/params.hpp"

namespace newsrec::evaluation {

/// Probability that a random positive outranks a random negative, ties 0.5.
/// Throws DegenerateImpression for single-class input.
double metric_auc(std::span<const double> scores, std::span<const int> labels);
/// Mean reciprocal rank of the positives; ties keep candidate order. Throws NoPositive.
double metric_mrr(std::span<const double> scores, std::span<const int> labels);
/// nDCG@k with gain 2^label − 1. Throws NoPositive.
double metric_ndcg(std::span<const double> scores, std::span<const int> labels, std::size_t k);

/// Pairwise (cascade) summation, so the result does not depend on how
/// callers chunk the input.
double pairwise_sum(std::span<const double> values);
double pairwise_mean(std::span<const double> values);

/// Scores for one impression, in candidate order.
struct ScoredImpression {
  std::string impression_id;
  std::vector<double> scores;
};
using Predictions = std::vector<ScoredImpression>;

/// Rounds to the 9 significant digits the dump format carries.
double quantize_score(double score);
/// "impression_id\tscore,score,..." per line.
void write_predictions(const Predictions& predictions, std::ostream& out);
void write_predictions_file(const Predictions& predictions, const std::filesystem::path& path);
Predictions read_predictions(std::istream& in);
Predictions read_predictions_file(const std::filesystem::path& path);

struct ImpressionMetrics {
  std::string impression_id;
  std::string user_id;
  std::optional<double> auc;  // absent for single-class impressions
  std::optional<double> mrr;  // absent without a positive
  std::optional<double> ndcg5;
  std::optional<double> ndcg10;
};

/// Impression means, as percentages.
struct MetricReport {
  double auc = 0.0;
  double mrr = 0.0;
  double ndcg5 = 0.0;
  double ndcg10 = 0.0;
  std::size_t impressions = 0;
  std::size_t auc_skipped = 0;  // single-class impressions left out of the AUC mean
  std::vector<ImpressionMetrics> records;
};

/// Throws MissingScores when an impression lacks scores for its candidates.
MetricReport evaluate_run(const Predictions& predictions, const std::vector<corpus::Impression>& impressions);
std::string report_json(const MetricReport& report);

struct UserGroup {
  std::vector<std::string> users;
  double mean_history = 0.0;
};

/// Users sorted by history length (truncated at max_history, ties by user id),
/// cut at ⌈0.2n⌉, ⌈0.4n⌉, … into five contiguous groups. A user's length is the
/// longest history seen across their impressions.
std::array<UserGroup, 5> bucket_users(const std::vector<corpus::Impression>& impressions,
                                      std::size_t max_history = 50);

struct NamedReport {
  std::string encoder;
  const MetricReport* report = nullptr;
};

struct GroupRow {
  std::size_t users = 0;
  double mean_history = 0.0;
  std::vector<std::optional<double>> auc;              // per encoder, percent
  std::vector<std::optional<double>> relative_change;  // (auc − base) / base
};

struct GroupReport {
  std::vector<std::string> encoders;
  std::string baseline;
  std::array<GroupRow, 5> groups;
};

/// Throws BaselineMissing when `baseline` names none of the reports.
GroupReport group_report(const std::array<UserGroup, 5>& groups, std::span<const NamedReport> reports,
                         const std::string& baseline);
std::string group_report_table(const GroupReport& report);
/// One row per (group, encoder) for plotting.
std::string group_report_csv(const GroupReport& report);

struct ComponentCount {
  std::size_t total = 0;
  std::size_t trainable = 0;
};

struct ParamAccount {
  std::size_t total = 0;
  std::size_t trainable = 0;
  std::array<ComponentCount, 4> by_component;  // indexed by autodiff::Component
};

ParamAccount count_params(const autodiff::ParamGraph& graph);

}  // namespace newsrec::evaluation
