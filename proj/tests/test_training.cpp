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

#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "newsrec/error.hpp"
#include "newsrec/evaluation.hpp"
#include "newsrec/training.hpp"
#include "support.hpp"

namespace {

using namespace newsrec;
using namespace newsrec::training;
using encoders::Architecture;

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no exception";
  return ErrorKind::Io;
}

std::vector<std::vector<double>> values_of(const autodiff::ParamGraph& g) {
  std::vector<std::vector<double>> out;
  for (const auto& p : g.parameters()) out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

const fixtures::World& small_world() {
  static const auto world = fixtures::make_world(fixtures::small_config());
  return *world;
}

TEST(ScoreClick, Examples) {
  const double e1[] = {1, 0, 0}, e2[] = {0, 1, 0};
  EXPECT_EQ(score_click(e1, e1), 1.0);
  EXPECT_EQ(score_click(e1, e2), 0.0);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto p = oracle::random_vec(rng, 64), q = oracle::random_vec(rng, 64);
    long double dot = 0;
    for (std::size_t j = 0; j < 64; ++j) dot += static_cast<long double>(p[j]) * q[j];
    EXPECT_NEAR(score_click(p, q), static_cast<double>(dot), 1e-12);
  }
  EXPECT_EQ(kind_of([&] { score_click(e1, std::span<const double>(e2, 2)); }), ErrorKind::ShapeMismatch);
}

TEST(LossNll, UniformScoresGiveLogKPlusOne) {
  for (std::size_t k = 1; k <= 8; ++k) {
    const std::vector<double> negs(k, 0.37);
    EXPECT_NEAR(loss_nll(0.37, negs), std::log(static_cast<double>(k + 1)), 1e-12) << k;
  }
}

TEST(LossNll, SaturationAndOracle) {
  const double negs[] = {-3.0, 1.0, 0.5, 0.0};
  EXPECT_LT(loss_nll(21.0, negs), 1e-8);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const auto s = oracle::random_vec(rng, 5, -10, 10);
    const double l = loss_nll(s[0], std::span<const double>(s).subspan(1));
    EXPECT_NEAR(l, oracle::cross_entropy(s, 0), 1e-12);
    EXPECT_GT(l, 0.0);
  }
  EXPECT_EQ(kind_of([] { const double n[] = {NAN}; loss_nll(0.0, n); }), ErrorKind::NonFiniteScore);
  EXPECT_EQ(kind_of([] { const double n[] = {0.0}; loss_nll(INFINITY, n); }), ErrorKind::NonFiniteScore);
}

TEST(RunConfig, Validation) {
  RunConfig ok;
  EXPECT_NO_THROW(validate(ok));
  const auto bad = [&](auto mutate) {
    RunConfig c;
    mutate(c);
    return kind_of([&] { validate(c); });
  };
  EXPECT_EQ(bad([](RunConfig& c) { c.negatives = 0; }), ErrorKind::InvalidSpec);
  EXPECT_EQ(bad([](RunConfig& c) { c.negatives = 5; }), ErrorKind::InvalidSpec);
  EXPECT_EQ(bad([](RunConfig& c) { c.dropout = 1.0; }), ErrorKind::InvalidSpec);
  EXPECT_EQ(bad([](RunConfig& c) { c.learning_rate = -1e-4; }), ErrorKind::InvalidSpec);
  EXPECT_EQ(bad([](RunConfig& c) { c.batch_size = 0; }), ErrorKind::InvalidSpec);
  EXPECT_EQ(bad([](RunConfig& c) { c.max_epochs = 0; }), ErrorKind::InvalidSpec);
}

corpus::Impression imp(std::string id, std::string user, std::int64_t t) {
  corpus::Impression i;
  i.impression_id = std::move(id);
  i.user_id = std::move(user);
  i.timestamp = t;
  i.candidates = {{"A", 1}, {"B", 0}};
  return i;
}

TEST(UserIndex, SortedIdsAndColdRow) {
  const UserIndex idx({imp("1", "U9", 0), imp("2", "U1", 0), imp("3", "U9", 0), imp("4", "U5", 0)});
  EXPECT_EQ(idx.rows(), 4u);
  EXPECT_EQ(idx.index("U1"), 1);
  EXPECT_EQ(idx.index("U5"), 2);
  EXPECT_EQ(idx.index("U9"), 3);
  EXPECT_EQ(idx.index("U404"), 0);
}

TEST(SplitValidation, LatestTenthHeldOut) {
  std::vector<corpus::Impression> imps;
  for (int i = 0; i < 11; ++i) imps.push_back(imp(std::to_string(i), "U", (i * 7) % 11));
  const auto [train, val] = split_validation(imps);
  ASSERT_EQ(val.size(), 2u);  // ⌈1.1⌉
  EXPECT_EQ(train.size(), 9u);
  EXPECT_EQ(val[0].timestamp, 9);
  EXPECT_EQ(val[1].timestamp, 10);
  for (std::size_t i = 1; i < train.size(); ++i) EXPECT_LE(train[i - 1].timestamp, train[i].timestamp);
}

TEST(SplitValidation, StableOnTiesAndClamped) {
  const auto [train, val] = split_validation({imp("a", "U", 5), imp("b", "U", 5), imp("c", "U", 5)});
  EXPECT_EQ(train[0].impression_id, "a");
  EXPECT_EQ(train[1].impression_id, "b");
  EXPECT_EQ(val[0].impression_id, "c");
  EXPECT_EQ(split_validation({imp("a", "U", 1), imp("b", "U", 2)}, 0.9).second.size(), 1u);
  EXPECT_TRUE(split_validation({imp("a", "U", 1)}).second.empty());
}

TEST(TrainStep, ZeroLearningRateLeavesParametersBitwiseUnchanged) {
  const auto& w = small_world();
  auto model = w.model(Architecture::Nrms, "slm");
  const auto before = values_of(model->params());
  const auto samples = corpus::build_training_samples(w.data.train, 4, 3, w.dims.max_history);
  autodiff::Adam adam(autodiff::AdamConfig{.learning_rate = 0.0});
  Rng rng(1);
  const autodiff::ForwardContext ctx{.training = true, .dropout = 0.2, .rng = &rng};
  for (std::size_t s = 0; s < 3; ++s)
    train_step(*model, w.corpus.catalog, w.data.users, std::span(samples).subspan(s * 8, 8), adam, ctx);
  EXPECT_EQ(values_of(model->params()), before);
}

TEST(TrainStep, PadRowStaysZeroUnderFineTuning) {
  const auto& w = small_world();
  auto model = w.model(Architecture::Naml, "slm");
  const auto samples = corpus::build_training_samples(w.data.train, 4, 3, w.dims.max_history);
  autodiff::Adam adam(autodiff::AdamConfig{.learning_rate = 1e-2});
  const autodiff::ForwardContext ctx{};
  for (std::size_t s = 0; s < 5; ++s)
    train_step(*model, w.corpus.catalog, w.data.users, std::span(samples).subspan(s * 8, 8), adam, ctx);
  const auto& table = model->params().at("news.word_embedding").tensor;
  for (std::size_t c = 0; c < table.cols(); ++c) EXPECT_EQ(table.values()[c], 0.0);
  const auto fresh = w.model(Architecture::Naml, "slm");
  const auto& initial = fresh->params().at("news.word_embedding").tensor;
  EXPECT_NE(support::vec(table), support::vec(initial));
}

// Two disjoint topics, titles made only of topic words, users who click
// only their own topic: a linear separator exists in news space.
TEST(TrainStep, SeparableDataDrivesLossBelowLn2) {
  synthetic::SyntheticConfig c = fixtures::small_config(11);
  c.topics = 2;
  c.title_topic_words = c.title_words;
  c.abstract_topic_words = c.abstract_words;
  c.history_noise = 0.0;
  const auto w = fixtures::make_world(c);
  auto model = w->model(Architecture::Nrms, "slm");
  autodiff::Adam adam(autodiff::AdamConfig{.learning_rate = 1e-3});
  Rng rng(5);
  const autodiff::ForwardContext ctx{};
  std::vector<double> losses;
  for (std::size_t epoch = 0; losses.size() < 200; ++epoch) {
    auto samples = corpus::build_training_samples(w->data.train, 1, epoch, w->dims.max_history);
    shuffle(std::span(samples), rng);
    for (std::size_t s = 0; s + 8 <= samples.size() && losses.size() < 200; s += 8)
      losses.push_back(train_step(*model, w->corpus.catalog, w->data.users, std::span(samples).subspan(s, 8), adam, ctx));
  }
  double tail = 0.0;
  for (std::size_t i = 180; i < 200; ++i) tail += losses[i] / 20;
  EXPECT_NEAR(losses[0], std::log(2.0), 0.2);
  EXPECT_LT(tail, std::log(2.0)) << "first " << losses[0];
}

TEST(TrainRun, SameSeedSameTrajectory) {
  const auto& w = small_world();
  RunConfig rc = w.run(Architecture::Lstur, "slm");
  rc.max_epochs = 2;
  rc.learning_rate = 1e-3;
  auto a = w.model(Architecture::Lstur, "slm", 4), b = w.model(Architecture::Lstur, "slm", 4);
  const Checkpoint ca = train_run(rc, *a, w.data), cb = train_run(rc, *b, w.data);
  ASSERT_EQ(ca.history.size(), cb.history.size());
  for (std::size_t i = 0; i < ca.history.size(); ++i) {
    EXPECT_EQ(ca.history[i].train_loss, cb.history[i].train_loss);
    EXPECT_EQ(ca.history[i].validation_auc, cb.history[i].validation_auc);
  }
  EXPECT_EQ(values_of(a->params()), values_of(b->params()));
  rc.seed = 2;
  auto c = w.model(Architecture::Lstur, "slm", 4);
  EXPECT_NE(train_run(rc, *c, w.data).history[0].train_loss, ca.history[0].train_loss);
}

TEST(TrainRun, PatienceZeroRunsOneEpoch) {
  const auto& w = small_world();
  RunConfig rc = w.run(Architecture::Naml, "slm-frozen");
  rc.patience = 0;
  auto m = w.model(Architecture::Naml, "slm-frozen");
  const Checkpoint c = train_run(rc, *m, w.data);
  EXPECT_EQ(c.history.size(), 1u);
  EXPECT_EQ(c.epoch, 1u);
  EXPECT_TRUE(c.completed);
}

TEST(TrainRun, ResumedRunMatchesUninterrupted) {
  const auto& w = small_world();
  support::TempDir dir("resume");
  RunConfig rc = w.run(Architecture::Nrms, "slm");
  rc.max_epochs = 4;
  rc.patience = 10;
  rc.learning_rate = 1e-3;
  auto full = w.model(Architecture::Nrms, "slm", 9);
  const Checkpoint reference = train_run(rc, *full, w.data);

  auto part = w.model(Architecture::Nrms, "slm", 9);
  TrainOptions opts{.state_path = dir / "state.nrck", .resume = false, .stop_after_epochs = 2, .log = nullptr};
  const Checkpoint first = train_run(rc, *part, w.data, opts);
  EXPECT_FALSE(first.completed);
  EXPECT_EQ(first.history.size(), 2u);

  auto resumed = w.model(Architecture::Nrms, "slm", 9);
  opts.resume = true;
  opts.stop_after_epochs = std::nullopt;
  const Checkpoint rest = train_run(rc, *resumed, w.data, opts);
  ASSERT_EQ(rest.history.size(), reference.history.size());
  for (std::size_t i = 0; i < rest.history.size(); ++i) {
    EXPECT_EQ(rest.history[i].train_loss, reference.history[i].train_loss) << i;
    EXPECT_EQ(rest.history[i].validation_auc, reference.history[i].validation_auc) << i;
  }
  EXPECT_EQ(rest.epoch, reference.epoch);
  EXPECT_EQ(values_of(resumed->params()), values_of(full->params()));
}

TEST(TrainRun, Preconditions) {
  const auto& w = small_world();
  auto m = w.model(Architecture::Naml, "slm");
  EXPECT_EQ(kind_of([&] { train_run(w.run(Architecture::Nrms, "slm"), *m, w.data); }), ErrorKind::InvalidSpec);
  Dataset empty = w.data;
  empty.train.clear();
  EXPECT_EQ(kind_of([&] { train_run(w.run(Architecture::Naml, "slm"), *m, empty); }), ErrorKind::NoTrainingData);
  Dataset no_val = w.data;
  no_val.validation.clear();
  EXPECT_EQ(kind_of([&] { train_run(w.run(Architecture::Naml, "slm"), *m, no_val); }), ErrorKind::NoTrainingData);
}

TEST(Checkpoint, FileRoundTrip) {
  support::TempDir dir("ck");
  const auto& w = small_world();
  auto m = w.model(Architecture::Naml, "slm-frozen");
  Checkpoint c;
  c.parameters = autodiff::snapshot(m->params());
  c.epoch = 3;
  c.validation_auc = 0.1 + 0.2;
  c.history = {{1, 1.5, 0.6, 10}, {2, 1.25, 0.7, 10}, {3, 1.0 / 3, 0.1 + 0.2, 10}};
  c.completed = false;
  write_checkpoint(c, dir / "c.nrck");
  const Checkpoint back = read_checkpoint(dir / "c.nrck");
  EXPECT_EQ(back.epoch, 3u);
  EXPECT_EQ(back.validation_auc, c.validation_auc);
  EXPECT_FALSE(back.completed);
  ASSERT_EQ(back.history.size(), 3u);
  EXPECT_EQ(back.history[2].train_loss, 1.0 / 3);
  EXPECT_EQ(back.history[1].steps, 10u);
  EXPECT_EQ(back.parameters.tensors.size(), c.parameters.tensors.size());
}

TEST(Predict, ColdNamlUserScoresZero) {
  const auto& w = small_world();
  auto m = w.model(Architecture::Naml, "slm");
  corpus::Impression cold = w.data.validation.front();
  cold.user_id = "never-seen";
  cold.history.clear();
  for (double s : predict_impression(*m, w.corpus.catalog, w.data.users, cold)) EXPECT_EQ(s, 0.0);
}

TEST(Predict, DumpRoundTripsAndMatchesRawScores) {
  const auto& w = small_world();
  auto m = w.model(Architecture::Lstur, "slm");
  const auto preds = predict(*m, w.corpus.catalog, w.data.users, w.corpus.test);
  ASSERT_EQ(preds.size(), w.corpus.test.size());
  std::stringstream buf;
  evaluation::write_predictions(preds, buf);
  const auto back = evaluation::read_predictions(buf);
  ASSERT_EQ(back.size(), preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    EXPECT_EQ(back[i].impression_id, preds[i].impression_id);
    EXPECT_EQ(back[i].scores, preds[i].scores);
  }
  const auto raw = predict_impression(*m, w.corpus.catalog, w.data.users, w.corpus.test[0]);
  for (std::size_t c = 0; c < raw.size(); ++c) EXPECT_EQ(preds[0].scores[c], evaluation::quantize_score(raw[c]));
}

TEST(Predict, MissingCandidateThrows) {
  const auto& w = small_world();
  auto m = w.model(Architecture::Nrms, "slm");
  corpus::Impression bad = w.data.validation.front();
  bad.candidates.push_back({"N-missing", 0});
  EXPECT_EQ(kind_of([&] { predict_impression(*m, w.corpus.catalog, w.data.users, bad); }), ErrorKind::MissingEmbedding);
  bad.candidates.pop_back();
  bad.history.push_back("N-missing");
  EXPECT_NO_THROW(predict_impression(*m, w.corpus.catalog, w.data.users, bad));
}

}  // namespace
