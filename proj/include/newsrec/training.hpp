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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "newsrec/corpus.hpp"
#include "newsrec/encoders.hpp"
#include "newsrec/evaluation.hpp"
#include "newsrec/params.hpp"

namespace newsrec::training {

using autodiff::Tensor;
using encoders::NewsRecModel;

struct RunConfig {
  encoders::Architecture architecture = encoders::Architecture::Naml;
  encoders::LmMode lm;
  std::size_t negatives = 4;  // K
  double dropout = 0.2;
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 10;
  std::size_t patience = 2;
  std::uint64_t seed = 1;
};

/// Throws InvalidSpec for out-of-range fields. The learning rate is free.
void validate(const RunConfig& config);

/// ⟨p, q⟩. Throws ShapeMismatch.
double score_click(std::span<const double> p, std::span<const double> q);
/// −log softmax(pos; pos, negs), max-shifted. Throws NonFiniteScore.
double loss_nll(double positive, std::span<const double> negatives);

/// Dense user rows: training users get 1..n in id order, everyone else 0.
class UserIndex {
 public:
  UserIndex() = default;
  explicit UserIndex(const std::vector<corpus::Impression>& impressions);
  int index(std::string_view user_id) const;
  /// Row count including the cold-start row.
  std::size_t rows() const { return ids_.size() + 1; }

 private:
  std::map<std::string, int, std::less<>> ids_;
};

/// Stable sort by timestamp; the last ⌈fraction·n⌉ impressions (at least one
/// when n ≥ 2) form the validation part.
std::pair<std::vector<corpus::Impression>, std::vector<corpus::Impression>> split_validation(
    std::vector<corpus::Impression> impressions, double fraction = 0.1);

struct Dataset {
  const corpus::NewsCatalog* catalog = nullptr;  // token-encoded
  std::vector<corpus::Impression> train;
  std::vector<corpus::Impression> validation;
  UserIndex users;
};

/// Forward, loss, backward and one Adam update over a batch. Returns the
/// pre-update mean loss.
double train_step(NewsRecModel& model, const corpus::NewsCatalog& catalog, const UserIndex& users,
                  std::span<const corpus::TrainingSample> batch, autodiff::Adam& adam,
                  const autodiff::ForwardContext& ctx);

/// Scores for every candidate with dropout off. Histories skip ids missing
/// from the catalog; a missing candidate throws MissingEmbedding.
std::vector<double> predict_impression(const NewsRecModel& model, const corpus::NewsCatalog& catalog,
                                       const UserIndex& users, const corpus::Impression& imp);
/// All impressions, scores quantized to the dump precision.
evaluation::Predictions predict(const NewsRecModel& model, const corpus::NewsCatalog& catalog,
                                const UserIndex& users, const std::vector<corpus::Impression>& impressions);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double validation_auc = 0.0;  // fraction, not percent
  std::size_t steps = 0;
};

struct TrainOptions {
  /// Per-epoch resumable state; nothing is written when empty.
  std::filesystem::path state_path;
  bool resume = false;
  /// Stops after this many epochs in total, as if interrupted.
  std::optional<std::size_t> stop_after_epochs;
  std::ostream* log = nullptr;
};

struct Checkpoint {
  autodiff::TensorFile parameters;
  std::size_t epoch = 0;
  double validation_auc = 0.0;
  std::vector<EpochRecord> history;
  /// False when stopped by stop_after_epochs before the schedule finished.
  bool completed = true;
};

/// Epoch loop with per-epoch validation AUC and early stopping after
/// `patience` non-improving epochs. Leaves the best parameters in the model.
/// Throws NoTrainingData.
Checkpoint train_run(const RunConfig& config, NewsRecModel& model, const Dataset& data,
                     const TrainOptions& options = {});

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace newsrec::training
