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
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "newsrec/corpus.hpp"
#include "newsrec/embeddings.hpp"
#include "newsrec/encoders.hpp"
#include "newsrec/evaluation.hpp"
#include "newsrec/training.hpp"

namespace newsrec::experiment {

inline constexpr int kSchemaVersion = 1;

/// Environment variable that relative data directories resolve against.
inline constexpr const char* kDataRootEnv = "NEWSREC_DATA_ROOT";

/// A grid of runs plus everything they share.
struct ExperimentSpec {
  std::filesystem::path data_dir;  // holds train/ and dev/ in MIND layout
  std::filesystem::path output_dir;
  std::vector<encoders::Architecture> architectures{encoders::Architecture::Naml};
  std::vector<encoders::LmMode> lm_modes{encoders::LmMode{}};
  std::vector<std::size_t> negatives{4};
  std::vector<double> dropouts{0.2};
  std::vector<double> learning_rates{1e-4};
  std::vector<std::uint64_t> seeds{1};
  std::size_t batch_size = 32;
  std::size_t max_epochs = 10;
  std::size_t patience = 2;
  encoders::EncoderDims dims;
  std::size_t min_word_count = 1;
  double validation_fraction = 0.1;
  std::optional<std::filesystem::path> static_vectors;
  std::optional<std::filesystem::path> news_embeddings;
  std::optional<std::filesystem::path> abstract_embeddings;
  std::optional<std::filesystem::path> plm_weights;
};

/// Flat "key = value" lines; '#' starts a comment; grid axes take comma lists.
/// `schema_version = 1` is required. Throws InvalidSpec.
ExperimentSpec parse_spec(std::istream& in);
ExperimentSpec parse_spec_file(const std::filesystem::path& path);
/// Applies one "key = value" setting, as the CLI does for overrides.
void set_option(ExperimentSpec& spec, const std::string& key, const std::string& value);
/// Inverse of parse_spec.
std::string format_spec(const ExperimentSpec& spec);

/// Resolves a relative data directory against NEWSREC_DATA_ROOT when set.
std::filesystem::path resolve_data_dir(const std::filesystem::path& dir);

/// One grid point.
struct RunSpec {
  training::RunConfig run;
  encoders::EncoderDims dims;
  std::filesystem::path data_dir;
  std::size_t min_word_count = 1;
  double validation_fraction = 0.1;
  std::optional<std::filesystem::path> static_vectors;
  std::optional<std::filesystem::path> news_embeddings;
  std::optional<std::filesystem::path> abstract_embeddings;
  std::optional<std::filesystem::path> plm_weights;
};

/// Sorted "key=value" lines naming everything that influences the run.
std::string canonical_config(const RunSpec& run);
/// Same, with the seed left out; runs that share it are replicas.
std::string replica_key(const RunSpec& run);
/// FNV-1a of the canonical config, 16 hex digits.
std::string run_id(const RunSpec& run);
/// Cartesian product in axis order. Throws InvalidSpec on an empty axis or a
/// run-id collision.
std::vector<RunSpec> expand_grid(const ExperimentSpec& spec);

/// Parsed and encoded corpus shared by a sweep.
struct LoadedData {
  corpus::NewsCatalog catalog;  // train and dev news
  corpus::Vocabulary vocab;
  std::vector<corpus::Impression> train;
  std::vector<corpus::Impression> dev;
};

/// Reads <dir>/train and <dir>/dev. The vocabulary comes from training news.
/// Throws DataMissing.
LoadedData load_data(const std::filesystem::path& data_dir, std::size_t min_word_count, std::size_t max_title,
                     std::size_t max_abstract);

/// Model resources loaded from a run's paths.
struct Resources {
  std::optional<embeddings::StaticTable> word_table;
  std::optional<embeddings::PrecomputedStore> title_store;
  std::optional<embeddings::PrecomputedStore> abstract_store;
  std::optional<autodiff::TensorFile> plm_weights;
};

std::unique_ptr<encoders::NewsRecModel> build_model(const RunSpec& run, const LoadedData& data,
                                                    const training::UserIndex& users, Resources& resources);

struct RunOutcome {
  RunSpec spec;
  std::string id;
  std::filesystem::path dir;
  bool reused = false;  // artifacts already present, no training
  double validation_auc = 0.0;
  evaluation::MetricReport test;
  evaluation::ParamAccount params;
};

struct RunOptions {
  bool force = false;
  std::ostream* log = nullptr;
};

/// Trains and evaluates one grid point into <output>/runs/<id>/: config.txt,
/// train.log, checkpoint.nrck, predictions.tsv, metrics.json. Completed runs
/// are reused unless forced; an interrupted run resumes from state.nrck.
RunOutcome run_one(const RunSpec& run, const LoadedData& data, const std::filesystem::path& output_dir,
                   const RunOptions& options = {});
std::vector<RunOutcome> run_experiment(const ExperimentSpec& spec, const RunOptions& options = {});

/// Reads a completed run directory back.
RunOutcome load_outcome(const std::filesystem::path& run_dir, const std::vector<corpus::Impression>& test);

/// Seed replicas of one configuration.
struct ReplicaGroup {
  std::string key;
  std::vector<const RunOutcome*> runs;
  double mean_validation_auc = 0.0;
};

struct CellBest {
  encoders::Architecture architecture;
  encoders::LmMode lm;
  ReplicaGroup best;
};

/// For each (architecture, LM mode) cell of the spec, the replica group with
/// the highest mean validation AUC; ties go to the lexicographically smallest
/// configuration. Throws EmptyCell.
std::vector<CellBest> grid_search(const ExperimentSpec& spec, const std::vector<RunOutcome>& runs);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample deviation, 0 for a single run
};
MeanStd mean_std(const std::vector<double>& values);

/// (tuned − frozen) / frozen, in percent.
double change_percent(double frozen_auc, double tuned_auc);

struct Report {
  std::string table;         // text matrix, best per architecture in **bold**
  std::string table_csv;
  std::string params_csv;    // per cell parameter accounting
  std::string depth_csv;     // fine-tune depth vs AUC, PLM cells
  std::string groups_table;  // engagement groups per architecture
  std::string groups_csv;
};

/// Pure function of run artifacts. The group report uses `baseline` (an LM
/// mode string, "slm" by default) per architecture when that cell exists.
Report emit_report(const ExperimentSpec& spec, const std::vector<RunOutcome>& runs,
                   const std::vector<corpus::Impression>& test, const std::string& baseline = "slm");
void write_report(const Report& report, const std::filesystem::path& dir);

}  // namespace newsrec::experiment
