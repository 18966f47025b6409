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

#include "newsrec/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "newsrec/error.hpp"

namespace newsrec::evaluation {

namespace {

void check_sizes(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorKind::ShapeMismatch,
                std::to_string(scores.size()) + " scores for " + std::to_string(labels.size()) + " labels");
  }
}

/// Candidate indices by descending score, ties in candidate order.
std::vector<std::size_t> ranking(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

double metric_auc(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores, labels);
  const std::size_t n = scores.size();
  std::uint64_t positives = 0;
  for (int l : labels) positives += l > 0;
  const std::uint64_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw Error(ErrorKind::DegenerateImpression, "AUC needs both a positive and a negative");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the positives' rank sum, with tied blocks at their midrank.
  std::uint64_t doubled_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const std::uint64_t doubled_rank = (i + 1) + (j + 1);
    for (std::size_t t = i; t <= j; ++t) {
      if (labels[order[t]] > 0) doubled_rank_sum += doubled_rank;
    }
    i = j + 1;
  }
  const std::uint64_t doubled_u = doubled_rank_sum - positives * (positives + 1);
  return static_cast<double>(doubled_u) / static_cast<double>(2 * positives * negatives);
}

double metric_mrr(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores, labels);
  const auto order = ranking(scores);
  std::vector<double> reciprocal;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (labels[order[r]] > 0) reciprocal.push_back(1.0 / static_cast<double>(r + 1));
  }
  if (reciprocal.empty()) throw Error(ErrorKind::NoPositive, "MRR needs a positive");
  return pairwise_mean(reciprocal);
}

double metric_ndcg(std::span<const double> scores, std::span<const int> labels, std::size_t k) {
  check_sizes(scores, labels);
  if (std::none_of(labels.begin(), labels.end(), [](int l) { return l > 0; })) {
    throw Error(ErrorKind::NoPositive, "nDCG needs a positive");
  }
  const auto order = ranking(scores);
  const auto gain = [](int label) { return std::exp2(static_cast<double>(label)) - 1.0; };
  double dcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, order.size()); ++r) {
    dcg += gain(labels[order[r]]) / std::log2(static_cast<double>(r + 2));
  }
  std::vector<int> ideal(labels.begin(), labels.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, ideal.size()); ++r) {
    idcg += gain(ideal[r]) / std::log2(static_cast<double>(r + 2));
  }
  return dcg / idcg;
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double pairwise_mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return pairwise_sum(values) / static_cast<double>(values.size());
}

double quantize_score(double score) {
  if (!std::isfinite(score)) throw Error(ErrorKind::NonFiniteScore, "non-finite prediction score");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", score);
  return std::strtod(buf, nullptr);
}

void write_predictions(const Predictions& predictions, std::ostream& out) {
  char buf[32];
  for (const auto& p : predictions) {
    out << p.impression_id << '\t';
    for (std::size_t i = 0; i < p.scores.size(); ++i) {
      if (!std::isfinite(p.scores[i])) throw Error(ErrorKind::NonFiniteScore, "impression " + p.impression_id);
      std::snprintf(buf, sizeof buf, "%.9g", p.scores[i]);
      if (i) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

void write_predictions_file(const Predictions& predictions, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  write_predictions(predictions, out);
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

Predictions read_predictions(std::istream& in) {
  Predictions out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error(ErrorKind::MalformedLine, "prediction line " + std::to_string(line_no) + " has no tab");
    }
    ScoredImpression p{line.substr(0, tab), {}};
    std::stringstream fields(line.substr(tab + 1));
    std::string field;
    while (std::getline(fields, field, ',')) {
      char* end = nullptr;
      const double v = std::strtod(field.c_str(), &end);
      if (field.empty() || *end != '\0') {
        throw Error(ErrorKind::MalformedLine, "bad score '" + field + "' on prediction line " + std::to_string(line_no));
      }
      p.scores.push_back(v);
    }
    out.push_back(std::move(p));
  }
  return out;
}

Predictions read_predictions_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::DataMissing, "cannot open " + path.string());
  return read_predictions(in);
}

MetricReport evaluate_run(const Predictions& predictions, const std::vector<corpus::Impression>& impressions) {
  std::unordered_map<std::string_view, const ScoredImpression*> by_id;
  for (const auto& p : predictions) by_id.emplace(p.impression_id, &p);

  MetricReport report;
  std::vector<double> aucs, mrrs, n5s, n10s;
  for (const auto& imp : impressions) {
    const auto it = by_id.find(imp.impression_id);
    if (it == by_id.end() || it->second->scores.size() != imp.candidates.size()) {
      throw Error(ErrorKind::MissingScores, imp.impression_id);
    }
    const auto& scores = it->second->scores;
    std::vector<int> labels;
    for (const auto& c : imp.candidates) labels.push_back(c.label);
    const std::size_t positives = std::count_if(labels.begin(), labels.end(), [](int l) { return l > 0; });

    ImpressionMetrics m{imp.impression_id, imp.user_id, std::nullopt, std::nullopt, std::nullopt, std::nullopt};
    if (positives > 0 && positives < labels.size()) {
      m.auc = metric_auc(scores, labels);
      aucs.push_back(*m.auc);
    } else {
      ++report.auc_skipped;
    }
    if (positives > 0) {
      m.mrr = metric_mrr(scores, labels);
      m.ndcg5 = metric_ndcg(scores, labels, 5);
      m.ndcg10 = metric_ndcg(scores, labels, 10);
      mrrs.push_back(*m.mrr);
      n5s.push_back(*m.ndcg5);
      n10s.push_back(*m.ndcg10);
    }
    report.records.push_back(std::move(m));
  }
  report.impressions = impressions.size();
  report.auc = 100.0 * pairwise_mean(aucs);
  report.mrr = 100.0 * pairwise_mean(mrrs);
  report.ndcg5 = 100.0 * pairwise_mean(n5s);
  report.ndcg10 = 100.0 * pairwise_mean(n10s);
  return report;
}

std::string report_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["auc"] = report.auc;
  j["mrr"] = report.mrr;
  j["ndcg5"] = report.ndcg5;
  j["ndcg10"] = report.ndcg10;
  j["impressions"] = report.impressions;
  j["auc_skipped"] = report.auc_skipped;
  return j.dump(2) + "\n";
}

std::array<UserGroup, 5> bucket_users(const std::vector<corpus::Impression>& impressions, std::size_t max_history) {
  std::map<std::string, std::size_t> lengths;
  for (const auto& imp : impressions) {
    auto& len = lengths[imp.user_id];
    len = std::max(len, std::min(imp.history.size(), max_history));
  }
  std::vector<std::pair<std::size_t, std::string>> users;
  for (const auto& [user, len] : lengths) users.emplace_back(len, user);
  std::sort(users.begin(), users.end());

  std::array<UserGroup, 5> groups;
  const std::size_t n = users.size();
  std::size_t begin = 0;
  for (std::size_t g = 0; g < 5; ++g) {
    const std::size_t end = g == 4 ? n : ((g + 1) * n + 4) / 5;
    std::vector<double> lens;
    for (std::size_t i = begin; i < end; ++i) {
      groups[g].users.push_back(users[i].second);
      lens.push_back(static_cast<double>(users[i].first));
    }
    groups[g].mean_history = pairwise_mean(lens);
    begin = end;
  }
  return groups;
}

GroupReport group_report(const std::array<UserGroup, 5>& groups, std::span<const NamedReport> reports,
                         const std::string& baseline) {
  GroupReport out;
  out.baseline = baseline;
  std::optional<std::size_t> base;
  for (std::size_t e = 0; e < reports.size(); ++e) {
    out.encoders.push_back(reports[e].encoder);
    if (reports[e].encoder == baseline) base = e;
  }
  if (!base) throw Error(ErrorKind::BaselineMissing, "no report for baseline '" + baseline + "'");

  std::unordered_map<std::string_view, std::size_t> group_of;
  for (std::size_t g = 0; g < 5; ++g) {
    for (const auto& u : groups[g].users) group_of.emplace(u, g);
  }
  for (std::size_t g = 0; g < 5; ++g) {
    out.groups[g].users = groups[g].users.size();
    out.groups[g].mean_history = groups[g].mean_history;
  }
  for (const auto& named : reports) {
    std::array<std::vector<double>, 5> per_group;
    for (const auto& rec : named.report->records) {
      const auto it = group_of.find(rec.user_id);
      if (it != group_of.end() && rec.auc) per_group[it->second].push_back(*rec.auc);
    }
    for (std::size_t g = 0; g < 5; ++g) {
      out.groups[g].auc.push_back(per_group[g].empty() ? std::nullopt
                                                       : std::optional<double>(100.0 * pairwise_mean(per_group[g])));
    }
  }
  for (auto& row : out.groups) {
    const auto& b = row.auc[*base];
    for (const auto& a : row.auc) {
      row.relative_change.push_back(a && b && *b != 0.0 ? std::optional<double>((*a - *b) / *b) : std::nullopt);
    }
  }
  return out;
}

namespace {

std::string fixed(std::optional<double> v, int precision) {
  if (!v) return "-";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", precision, *v);
  return buf;
}

}  // namespace

std::string group_report_table(const GroupReport& report) {
  std::ostringstream out;
  out << "group\tusers\tmean_history";
  for (const auto& e : report.encoders) out << '\t' << e << " AUC\t" << e << " vs " << report.baseline;
  out << '\n';
  for (std::size_t g = 0; g < 5; ++g) {
    const auto& row = report.groups[g];
    out << g + 1 << '\t' << row.users << '\t' << fixed(row.mean_history, 2);
    for (std::size_t e = 0; e < report.encoders.size(); ++e) {
      const auto change = row.relative_change[e] ? std::optional<double>(100.0 * *row.relative_change[e]) : std::nullopt;
      out << '\t' << fixed(row.auc[e], 2) << '\t' << (change ? (*change >= 0 ? "+" : "") + fixed(change, 2) + "%" : "-");
    }
    out << '\n';
  }
  return out.str();
}

std::string group_report_csv(const GroupReport& report) {
  std::ostringstream out;
  out << "group,users,mean_history,encoder,auc,relative_change\n";
  for (std::size_t g = 0; g < 5; ++g) {
    const auto& row = report.groups[g];
    for (std::size_t e = 0; e < report.encoders.size(); ++e) {
      out << g + 1 << ',' << row.users << ',' << fixed(row.mean_history, 4) << ',' << report.encoders[e] << ','
          << (row.auc[e] ? fixed(row.auc[e], 4) : "") << ','
          << (row.relative_change[e] ? fixed(row.relative_change[e], 6) : "") << '\n';
    }
  }
  return out.str();
}

ParamAccount count_params(const autodiff::ParamGraph& graph) {
  ParamAccount account;
  for (const auto& p : graph.parameters()) {
    const std::size_t n = p.tensor.size();
    auto& c = account.by_component[static_cast<std::size_t>(p.component)];
    c.total += n;
    account.total += n;
    if (p.trainable) {
      c.trainable += n;
      account.trainable += n;
    }
  }
  return account;
}

}  // namespace newsrec::evaluation
