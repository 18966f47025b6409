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

#include "newsrec/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "newsrec/error.hpp"
#include "newsrec/random.hpp"

namespace newsrec::training {

namespace ad = newsrec::autodiff;
using corpus::Impression;
using corpus::NewsCatalog;

void validate(const RunConfig& c) {
  const auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidSpec, what); };
  if (c.negatives < 1 || c.negatives > 4) fail("K must be in 1..4, got " + std::to_string(c.negatives));
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) fail("learning rate must be finite and ≥ 0");
  if (c.batch_size < 1) fail("batch size must be ≥ 1");
  if (c.max_epochs < 1) fail("max epochs must be ≥ 1");
}

double score_click(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw Error(ErrorKind::ShapeMismatch, "user width " + std::to_string(p.size()) + " vs news width " +
                                              std::to_string(q.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * q[i];
  return s;
}

double loss_nll(double positive, std::span<const double> negatives) {
  if (negatives.empty()) throw Error(ErrorKind::InvalidSpec, "loss needs at least one negative");
  double m = positive;
  for (double n : negatives) {
    if (!std::isfinite(n)) throw Error(ErrorKind::NonFiniteScore, "non-finite negative score");
    m = std::max(m, n);
  }
  if (!std::isfinite(positive)) throw Error(ErrorKind::NonFiniteScore, "non-finite positive score");
  double z = std::exp(positive - m);
  for (double n : negatives) z += std::exp(n - m);
  return std::log(z) - (positive - m);
}

UserIndex::UserIndex(const std::vector<Impression>& impressions) {
  for (const auto& imp : impressions) ids_.emplace(imp.user_id, 0);
  int next = 1;
  for (auto& [id, row] : ids_) row = next++;
}

int UserIndex::index(std::string_view user_id) const {
  const auto it = ids_.find(user_id);
  return it == ids_.end() ? 0 : it->second;
}

std::pair<std::vector<Impression>, std::vector<Impression>> split_validation(std::vector<Impression> impressions,
                                                                             double fraction) {
  std::stable_sort(impressions.begin(), impressions.end(),
                   [](const Impression& a, const Impression& b) { return a.timestamp < b.timestamp; });
  const std::size_t n = impressions.size();
  std::size_t held = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  if (n >= 2) held = std::clamp<std::size_t>(held, 1, n - 1);
  else held = 0;
  std::vector<Impression> validation(std::make_move_iterator(impressions.end() - static_cast<std::ptrdiff_t>(held)),
                                     std::make_move_iterator(impressions.end()));
  impressions.resize(n - held);
  return {std::move(impressions), std::move(validation)};
}

namespace {

/// Lazily encoded news vectors for one forward pass. Detached when the
/// vectors will not be differentiated.
class NewsCache {
 public:
  NewsCache(const NewsRecModel& model, const NewsCatalog& catalog, const ad::ForwardContext& ctx)
      : model_(model), catalog_(catalog), ctx_(ctx) {}

  const Tensor* maybe(std::string_view news_id) {
    const auto idx = catalog_.index_of(news_id);
    if (!idx) return nullptr;
    auto it = cache_.find(*idx);
    if (it == cache_.end()) it = cache_.emplace(*idx, model_.encode_news(catalog_.articles[*idx], ctx_)).first;
    return &it->second;
  }

  const Tensor& at(std::string_view news_id) {
    const Tensor* t = maybe(news_id);
    if (!t) throw Error(ErrorKind::MissingEmbedding, "news " + std::string(news_id) + " is not in the catalog");
    return *t;
  }

 private:
  const NewsRecModel& model_;
  const NewsCatalog& catalog_;
  const ad::ForwardContext& ctx_;
  std::unordered_map<std::size_t, Tensor> cache_;
};

std::vector<Tensor> encode_history(NewsCache& cache, const std::vector<std::string>& history, std::size_t cap) {
  std::vector<Tensor> rows;
  const std::size_t start = history.size() > cap ? history.size() - cap : 0;
  for (std::size_t i = start; i < history.size(); ++i) {
    if (history[i].empty()) continue;
    if (const Tensor* t = cache.maybe(history[i])) rows.push_back(*t);
  }
  return rows;
}

std::string hex(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double unhex(const std::string& s) { return std::strtod(s.c_str(), nullptr); }

const std::string& meta_at(const ad::TensorFile& file, const std::string& key) {
  const auto it = file.meta.find(key);
  if (it == file.meta.end()) throw Error(ErrorKind::CountMismatch, "checkpoint lacks '" + key + "'");
  return it->second;
}

void put_history(ad::TensorFile& file, const std::vector<EpochRecord>& history) {
  file.meta["history.size"] = std::to_string(history.size());
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& r = history[i];
    file.meta["history." + std::to_string(i)] =
        std::to_string(r.epoch) + " " + hex(r.train_loss) + " " + hex(r.validation_auc) + " " + std::to_string(r.steps);
  }
}

std::vector<EpochRecord> get_history(const ad::TensorFile& file) {
  std::vector<EpochRecord> history(std::stoull(meta_at(file, "history.size")));
  for (std::size_t i = 0; i < history.size(); ++i) {
    char loss[40], auc[40];
    unsigned long long epoch = 0, steps = 0;
    if (std::sscanf(meta_at(file, "history." + std::to_string(i)).c_str(), "%llu %39s %39s %llu", &epoch, loss, auc,
                    &steps) != 4) {
      throw Error(ErrorKind::CountMismatch, "bad history record " + std::to_string(i));
    }
    history[i] = {static_cast<std::size_t>(epoch), unhex(loss), unhex(auc), static_cast<std::size_t>(steps)};
  }
  return history;
}

double validation_auc(const NewsRecModel& model, const Dataset& data) {
  std::vector<double> aucs;
  const auto predictions = predict(model, *data.catalog, data.users, data.validation);
  for (std::size_t i = 0; i < data.validation.size(); ++i) {
    std::vector<int> labels;
    for (const auto& c : data.validation[i].candidates) labels.push_back(c.label);
    const auto pos = std::count(labels.begin(), labels.end(), 1);
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size())) continue;
    aucs.push_back(evaluation::metric_auc(predictions[i].scores, labels));
  }
  return evaluation::pairwise_mean(aucs);
}

}  // namespace

double train_step(NewsRecModel& model, const NewsCatalog& catalog, const UserIndex& users,
                  std::span<const corpus::TrainingSample> batch, ad::Adam& adam, const ad::ForwardContext& ctx) {
  if (batch.empty()) throw Error(ErrorKind::NoTrainingData, "empty batch");
  ad::ParamGraph& graph = model.params();
  graph.zero_grad();
  NewsCache cache(model, catalog, ctx);
  const std::size_t cap = model.config().dims.max_history;
  std::vector<Tensor> losses;
  losses.reserve(batch.size());
  for (const auto& s : batch) {
    const auto history = encode_history(cache, s.history, cap);
    const Tensor user = model.encode_user(history, users.index(s.user_id), ctx);
    std::vector<Tensor> candidates{cache.at(s.positive)};
    for (const auto& n : s.negatives) candidates.push_back(cache.at(n));
    losses.push_back(ad::softmax_nll(NewsRecModel::score(user, candidates), 0));
  }
  const Tensor loss = ad::mean(ad::concat_cols(losses));
  const double value = loss.item();
  ad::backward(loss);
  adam.step(graph);
  return value;
}

std::vector<double> predict_impression(const NewsRecModel& model, const NewsCatalog& catalog, const UserIndex& users,
                                       const Impression& imp) {
  const ad::NoGradGuard no_grad;
  const ad::ForwardContext ctx{};
  NewsCache cache(model, catalog, ctx);
  const auto history = encode_history(cache, imp.history, model.config().dims.max_history);
  const Tensor user = model.encode_user(history, users.index(imp.user_id), ctx);
  std::vector<Tensor> candidates;
  for (const auto& c : imp.candidates) candidates.push_back(cache.at(c.news_id));
  const Tensor scores = NewsRecModel::score(user, candidates);
  return {scores.values().begin(), scores.values().end()};
}

evaluation::Predictions predict(const NewsRecModel& model, const NewsCatalog& catalog, const UserIndex& users,
                                const std::vector<Impression>& impressions) {
  const ad::NoGradGuard no_grad;
  const ad::ForwardContext ctx{};
  NewsCache cache(model, catalog, ctx);
  const std::size_t cap = model.config().dims.max_history;
  evaluation::Predictions out;
  out.reserve(impressions.size());
  for (const auto& imp : impressions) {
    const auto history = encode_history(cache, imp.history, cap);
    const Tensor user = model.encode_user(history, users.index(imp.user_id), ctx);
    std::vector<Tensor> candidates;
    for (const auto& c : imp.candidates) candidates.push_back(cache.at(c.news_id));
    const Tensor scores = NewsRecModel::score(user, candidates);
    evaluation::ScoredImpression row{imp.impression_id, {}};
    for (double v : scores.values()) row.scores.push_back(evaluation::quantize_score(v));
    out.push_back(std::move(row));
  }
  return out;
}

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  ad::TensorFile file = checkpoint.parameters;
  file.meta["epoch"] = std::to_string(checkpoint.epoch);
  file.meta["validation_auc"] = hex(checkpoint.validation_auc);
  file.meta["completed"] = checkpoint.completed ? "1" : "0";
  put_history(file, checkpoint.history);
  ad::write_tensor_file(file, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  ad::TensorFile file = ad::read_tensor_file(path);
  Checkpoint c;
  c.epoch = std::stoull(meta_at(file, "epoch"));
  c.validation_auc = unhex(meta_at(file, "validation_auc"));
  c.completed = meta_at(file, "completed") == "1";
  c.history = get_history(file);
  for (const char* key : {"epoch", "validation_auc", "completed"}) file.meta.erase(key);
  for (auto it = file.meta.begin(); it != file.meta.end();) {
    it = it->first.starts_with("history.") ? file.meta.erase(it) : std::next(it);
  }
  c.parameters = std::move(file);
  return c;
}

Checkpoint train_run(const RunConfig& config, NewsRecModel& model, const Dataset& data, const TrainOptions& options) {
  validate(config);
  const auto& mc = model.config();
  if (mc.architecture != config.architecture || mc.lm.kind != config.lm.kind ||
      mc.lm.freeze_depth != config.lm.freeze_depth) {
    throw Error(ErrorKind::InvalidSpec, "model was built for a different architecture or LM mode");
  }
  if (!data.catalog || data.train.empty()) throw Error(ErrorKind::NoTrainingData, "no training impressions");
  if (data.validation.empty()) throw Error(ErrorKind::NoTrainingData, "no validation impressions");

  ad::ParamGraph& graph = model.params();
  ad::Adam adam(ad::AdamConfig{.learning_rate = config.learning_rate});

  std::vector<EpochRecord> history;
  std::size_t stale = 0;
  Checkpoint best;
  best.validation_auc = -1.0;

  if (options.resume && !options.state_path.empty() && std::filesystem::exists(options.state_path)) {
    const ad::TensorFile state = ad::read_tensor_file(options.state_path);
    ad::load_parameters(graph, state, true);
    ad::load_adam(adam, state);
    history = get_history(state);
    stale = std::stoull(meta_at(state, "stale"));
    best.epoch = std::stoull(meta_at(state, "best_epoch"));
    best.validation_auc = unhex(meta_at(state, "best_auc"));
    for (const auto& [name, t] : state.tensors) {
      if (name.starts_with("best/")) best.parameters.tensors.emplace_back(name.substr(5), t);
    }
    if (options.log) *options.log << "resumed after epoch " << history.size() << "\n";
  }

  bool stopped_early = !history.empty() && stale >= config.patience;
  const std::size_t max_history = mc.dims.max_history;
  for (std::size_t epoch = history.size() + 1; epoch <= config.max_epochs && !stopped_early; ++epoch) {
    if (options.stop_after_epochs && epoch > *options.stop_after_epochs) break;
    const std::uint64_t epoch_seed = derive_seed(config.seed, epoch);
    const auto samples =
        corpus::build_training_samples(data.train, config.negatives, derive_seed(epoch_seed, 1), max_history);
    if (samples.empty()) throw Error(ErrorKind::NoTrainingData, "no impression has both a click and a negative");
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(epoch_seed, 2));
    shuffle(std::span<std::size_t>(order), shuffle_rng);

    std::vector<double> losses;
    std::size_t step = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size, ++step) {
      std::vector<corpus::TrainingSample> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + config.batch_size); ++i) batch.push_back(samples[order[i]]);
      Rng dropout_rng(derive_seed(epoch_seed, 1000 + step));
      const ad::ForwardContext ctx{true, config.dropout, &dropout_rng};
      losses.push_back(train_step(model, *data.catalog, data.users, batch, adam, ctx));
    }

    const double auc = validation_auc(model, data);
    EpochRecord record{epoch, evaluation::pairwise_mean(losses), auc, step};
    history.push_back(record);
    if (auc > best.validation_auc) {
      best.validation_auc = auc;
      best.epoch = epoch;
      best.parameters = ad::snapshot(graph);
      stale = 0;
    } else {
      ++stale;
    }
    if (options.log) {
      char line[160];
      std::snprintf(line, sizeof line, "epoch %zu steps %zu loss %.6f val_auc %.6f%s\n", epoch, step,
                    record.train_loss, auc, stale == 0 ? " *" : "");
      *options.log << line << std::flush;
    }
    stopped_early = stale >= config.patience;

    if (!options.state_path.empty()) {
      ad::TensorFile state = ad::snapshot(graph, &adam);
      put_history(state, history);
      state.meta["stale"] = std::to_string(stale);
      state.meta["best_epoch"] = std::to_string(best.epoch);
      state.meta["best_auc"] = hex(best.validation_auc);
      for (const auto& [name, t] : best.parameters.tensors) state.tensors.emplace_back("best/" + name, t);
      ad::write_tensor_file(state, options.state_path);
    }
  }

  best.history = history;
  best.completed = stopped_early || history.size() >= config.max_epochs;
  if (!best.parameters.tensors.empty()) ad::load_parameters(graph, best.parameters, true);
  return best;
}

}  // namespace newsrec::training
