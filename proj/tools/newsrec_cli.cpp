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

// newsrec: ingest MIND-layout data, train and sweep news recommenders,
// evaluate prediction dumps and emit comparison reports.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "newsrec/corpus.hpp"
#include "newsrec/error.hpp"
#include "newsrec/evaluation.hpp"
#include "newsrec/experiment.hpp"
#include "newsrec/synthetic.hpp"

namespace fs = std::filesystem;
using namespace newsrec;

namespace {

struct SpecFlags {
  std::string config;
  std::string data_dir, output_dir;
  std::string architectures, lm, negatives, dropout, lr, seeds;
  std::string static_vectors, news_embeddings, abstract_embeddings, plm_weights;
  std::optional<std::size_t> max_title, max_abstract, max_history;
  std::vector<std::string> settings;
  bool force = false;

  void add_to(CLI::App* cmd, bool grid_flags) {
    cmd->add_option("--config", config, "Experiment config (key = value)");
    cmd->add_option("--data-dir", data_dir, "Directory with train/ and dev/ (relative to $NEWSREC_DATA_ROOT)");
    cmd->add_option("--output-dir", output_dir, "Run artifact directory");
    cmd->add_option("--max-title", max_title, "Title tokens kept");
    cmd->add_option("--max-abstract", max_abstract, "Abstract tokens kept");
    cmd->add_option("--max-history", max_history, "History clicks kept");
    cmd->add_option("--set", settings, "Extra key=value config setting")->take_all();
    if (!grid_flags) return;
    cmd->add_option("--arch", architectures, "naml, nrms, lstur (comma list)");
    cmd->add_option("--lm", lm, "slm, slm-frozen, plm:k, plm-frozen, llm (comma list)");
    cmd->add_option("--negatives", negatives, "K values (comma list)");
    cmd->add_option("--dropout", dropout, "Dropout values (comma list)");
    cmd->add_option("--lr", lr, "Learning rates (comma list)");
    cmd->add_option("--seed,--seeds", seeds, "Seeds (comma list); replicas are averaged in reports");
    cmd->add_option("--static-vectors", static_vectors, "GloVe-style word vectors for SLM modes");
    cmd->add_option("--news-embeddings", news_embeddings, "NRE1 store for LLM mode");
    cmd->add_option("--abstract-embeddings", abstract_embeddings, "NRE1 abstract store for NAML in LLM mode");
    cmd->add_option("--plm-weights", plm_weights, "Mini-transformer weights (checkpoint container)");
    cmd->add_flag("--force", force, "Retrain runs that already completed");
  }

  experiment::ExperimentSpec build() const {
    experiment::ExperimentSpec spec;
    if (!config.empty()) spec = experiment::parse_spec_file(config);
    const auto set = [&](const char* key, const std::string& v) {
      if (!v.empty()) experiment::set_option(spec, key, v);
    };
    set("data_dir", data_dir);
    set("output_dir", output_dir);
    set("architectures", architectures);
    set("lm", lm);
    set("negatives", negatives);
    set("dropout", dropout);
    set("learning_rate", lr);
    set("seeds", seeds);
    set("static_vectors", static_vectors);
    set("news_embeddings", news_embeddings);
    set("abstract_embeddings", abstract_embeddings);
    set("plm_weights", plm_weights);
    if (max_title) spec.dims.max_title = *max_title;
    if (max_abstract) spec.dims.max_abstract = *max_abstract;
    if (max_history) spec.dims.max_history = *max_history;
    for (const auto& s : settings) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw Error(ErrorKind::InvalidSpec, "--set expects key=value, got '" + s + "'");
      experiment::set_option(spec, s.substr(0, eq), s.substr(eq + 1));
    }
    if (spec.data_dir.empty()) throw Error(ErrorKind::InvalidSpec, "no data directory given");
    if (spec.output_dir.empty()) spec.output_dir = "runs";
    return spec;
  }
};

int cmd_ingest(const fs::path& data_dir_arg, std::size_t max_title, std::size_t max_abstract, const std::string& out) {
  const fs::path dir = experiment::resolve_data_dir(data_dir_arg);
  const auto data = experiment::load_data(dir, 1, max_title, max_abstract);
  const auto train_news = corpus::parse_news_file(dir / "train" / "news.tsv");
  const auto dev_news = corpus::parse_news_file(dir / "dev" / "news.tsv");
  std::vector<corpus::Impression> all = data.train;
  all.insert(all.end(), data.dev.begin(), data.dev.end());
  const auto stats = corpus::corpus_stats(data.catalog, all);
  const std::string json = corpus::stats_json(stats, corpus::unseen_fraction(train_news, dev_news));
  std::cout << json;
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream(fs::path(out) / "stats.json") << json;
    std::ofstream normalized(fs::path(out) / "news_normalized.tsv");
    corpus::write_normalized_news(data.catalog, normalized);
    std::ofstream vocab(fs::path(out) / "vocab.txt");
    for (const auto& w : data.vocab.words()) vocab << w << '\n';
  }
  return 0;
}

int cmd_run(const SpecFlags& flags, bool write_report) {
  const auto spec = flags.build();
  const auto runs = experiment::run_experiment(spec, {.force = flags.force, .log = &std::cout});
  if (write_report) {
    const auto grid = experiment::expand_grid(spec);
    const auto data = experiment::load_data(grid.front().data_dir, grid.front().min_word_count, spec.dims.max_title,
                                            spec.dims.max_abstract);
    const auto report = experiment::emit_report(spec, runs, data.dev);
    experiment::write_report(report, spec.output_dir / "report");
    std::ofstream best(spec.output_dir / "best.txt");
    for (const auto& cell : experiment::grid_search(spec, runs)) {
      best << encoders::to_string(cell.architecture) << ' ' << encoders::to_string(cell.lm) << " mean_val_auc "
           << cell.best.mean_validation_auc << " runs";
      for (const auto* r : cell.best.runs) best << ' ' << r->id;
      best << '\n';
    }
    std::cout << report.table;
  }
  return 0;
}

int cmd_report(const SpecFlags& flags, const std::string& baseline) {
  const auto spec = flags.build();
  const auto grid = experiment::expand_grid(spec);
  const auto data = experiment::load_data(grid.front().data_dir, grid.front().min_word_count, spec.dims.max_title,
                                          spec.dims.max_abstract);
  std::vector<experiment::RunOutcome> runs;
  for (const auto& r : grid) {
    const fs::path dir = spec.output_dir / "runs" / experiment::run_id(r);
    if (fs::exists(dir / "metrics.json")) runs.push_back(experiment::load_outcome(dir, data.dev));
  }
  const auto report = experiment::emit_report(spec, runs, data.dev, baseline);
  experiment::write_report(report, spec.output_dir / "report");
  std::cout << report.table << '\n' << report.groups_table;
  return 0;
}

int cmd_evaluate(const std::string& predictions, const std::string& behaviors, bool json) {
  const auto report = evaluation::evaluate_run(evaluation::read_predictions_file(predictions),
                                               corpus::parse_behaviors_file(behaviors));
  if (json) {
    std::cout << evaluation::report_json(report);
  } else {
    std::printf("AUC %.2f  MRR %.2f  nDCG@5 %.2f  nDCG@10 %.2f  (%zu impressions, %zu single-class)\n", report.auc,
                report.mrr, report.ndcg5, report.ndcg10, report.impressions, report.auc_skipped);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"News recommendation experiments with static, pretrained and large language model encoders"};
  app.require_subcommand(1);

  std::string data_dir, out;
  std::size_t max_title = 20, max_abstract = 50;
  auto* ingest = app.add_subcommand("ingest", "Parse a MIND-layout directory and print corpus statistics");
  ingest->add_option("--data-dir", data_dir, "Directory with train/ and dev/")->required();
  ingest->add_option("--max-title", max_title, "Title tokens kept");
  ingest->add_option("--max-abstract", max_abstract, "Abstract tokens kept");
  ingest->add_option("--out", out, "Write stats.json, vocab.txt and news_normalized.tsv here");

  SpecFlags train_flags, sweep_flags, report_flags;
  auto* train = app.add_subcommand("train", "Train and evaluate the configured run(s)");
  train_flags.add_to(train, true);
  auto* sweep = app.add_subcommand("sweep", "Run a whole grid, then report the best configuration per cell");
  sweep_flags.add_to(sweep, true);
  auto* report = app.add_subcommand("report", "Rebuild tables and plot data from completed runs");
  report_flags.add_to(report, false);
  std::string baseline = "slm";
  report->add_option("--baseline", baseline, "LM mode the engagement groups compare against");

  std::string predictions, behaviors;
  bool json = false;
  auto* evaluate = app.add_subcommand("evaluate", "Score a prediction dump against a behaviors file");
  evaluate->add_option("--predictions", predictions, "impression_id<TAB>scores dump")->required();
  evaluate->add_option("--behaviors", behaviors, "behaviors.tsv with labels")->required();
  evaluate->add_flag("--json", json, "Print the report as JSON");

  synthetic::SyntheticConfig synth_config;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write a topic-driven synthetic corpus in MIND layout");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_config.seed, "Generator seed");
  synth->add_option("--articles", synth_config.articles, "Article count");
  synth->add_option("--impressions", synth_config.impressions, "Impression count");
  synth->add_option("--users", synth_config.users, "User count");
  synth->add_option("--topics", synth_config.topics, "Latent topic count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*ingest) return cmd_ingest(data_dir, max_title, max_abstract, out);
    if (*train) return cmd_run(train_flags, false);
    if (*sweep) return cmd_run(sweep_flags, true);
    if (*report) return cmd_report(report_flags, baseline);
    if (*evaluate) return cmd_evaluate(predictions, behaviors, json);
    if (*synth) {
      synthetic::write_mind_layout(synthetic::generate(synth_config), synth_out);
      std::cout << "wrote " << synth_out << "\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "newsrec: " << e.what() << "\n";
    return e.is_data_error() ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "newsrec: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
