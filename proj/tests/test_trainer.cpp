#include <cmath>

#include "doctest.h"

#include "embaug/metrics.hpp"
#include "embaug/trainer.hpp"

using namespace embaug;

namespace {

TrainConfig small_config(int epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.hidden_width = 16;
  cfg.snapshot_every = 2;
  cfg.seed = 3;
  cfg.augment = {AugmentMethod::kEStitchup, 0.4, 0.1, 5};
  return cfg;
}

SplitResult small_split() {
  return split(generate_synthetic({4, 20, 6, 1.0, 0.5, 1}), {0.5, {3}, 2});
}

}  // namespace

TEST_CASE("learning rate follows a 12-epoch triangle") {
  const TrainConfig cfg;
  CHECK(lr_at(0.0, cfg) == doctest::Approx(0.0003).epsilon(1e-12));
  CHECK(lr_at(6.0, cfg) == doctest::Approx(0.003).epsilon(1e-12));
  CHECK(lr_at(12.0, cfg) == doctest::Approx(0.0003).epsilon(1e-12));
  CHECK(lr_at(3.0, cfg) == doctest::Approx(0.00165).epsilon(1e-12));
  CHECK(lr_at(9.0, cfg) == doctest::Approx(0.00165).epsilon(1e-12));
  Rng rng(1);
  std::uniform_real_distribution<double> t(0.0, 500.0);
  for (int k = 0; k < 1000; ++k) {
    const double x = t(rng);
    REQUIRE(lr_at(x, cfg) == doctest::Approx(lr_at(x + 12.0, cfg)).epsilon(1e-9));
    REQUIRE(lr_at(x, cfg) >= cfg.lr_min - 1e-15);
    REQUIRE(lr_at(x, cfg) <= cfg.lr_max + 1e-15);
  }
}

TEST_CASE("zero epochs returns the initial model and no history") {
  const auto parts = small_split();
  const TrainConfig cfg = small_config(0);
  const TrainResult r = train(parts.train, parts.val, cfg);
  CHECK(r.model == init(6, 4, cfg.seed, cfg.hidden_width, cfg.dropout_p));
  CHECK(r.history.records.empty());
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto parts = small_split();
  for (auto opt : {OptimizerKind::kAdam, OptimizerKind::kSgd}) {
    TrainConfig cfg = small_config(6);
    cfg.optimizer = opt;
    const TrainResult a = train(parts.train, parts.val, cfg);
    const TrainResult b = train(parts.train, parts.val, cfg);
    CHECK(a.model == b.model);
    cfg.seed = 4;
    CHECK_FALSE(train(parts.train, parts.val, cfg).model == a.model);
  }
}

TEST_CASE("history snapshots are evenly spaced and finite") {
  const auto parts = small_split();
  const TrainResult r = train(parts.train, parts.val, small_config(9));
  REQUIRE(r.history.records.size() == 4);
  for (std::size_t k = 0; k < r.history.records.size(); ++k) {
    const auto& rec = r.history.records[k];
    CHECK(rec.epoch == 2 * static_cast<int>(k + 1));
    CHECK(std::isfinite(rec.train_loss));
    CHECK(std::isfinite(rec.auroc));
    CHECK(std::isfinite(rec.aupr));
    REQUIRE(rec.overall_acc);
    REQUIRE(rec.none_acc);
  }
  const std::string csv = history_csv(r.history);
  CHECK(csv.rfind("epoch,loss,acc,none_acc,auroc,aupr\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("weight decay scales parameters by 1 - lr * w under a zero gradient") {
  const MlpModel start = init(5, 3, 1, 8);
  const Gradients zero = zeros_like(start);
  const double lr = 0.01, w = 0.5;
  MlpModel sgd = start;
  sgd_step(sgd, zero, lr, w);
  MlpModel adam = start;
  AdamState state(adam);
  adam_step(adam, zero, state, lr, w);
  const auto before = start.flatten();
  const auto after_sgd = sgd.flatten();
  const auto after_adam = adam.flatten();
  for (std::size_t k = 0; k < before.size(); ++k) {
    REQUIRE(after_sgd[k] == doctest::Approx(before[k] * (1.0 - lr * w)).epsilon(1e-14));
    REQUIRE(after_adam[k] == doctest::Approx(before[k] * (1.0 - lr * w)).epsilon(1e-14));
  }
}

TEST_CASE("plain SGD step subtracts lr times the gradient") {
  MlpModel m = zeros_like(init(2, 2, 1, 3));
  Gradients g = zeros_like(m);
  g.b3(1) = 2.0;
  sgd_step(m, g, 0.1, 0.0);
  CHECK(m.b3(1) == doctest::Approx(-0.2));
}

TEST_CASE("first Adam step moves each parameter by lr against its gradient sign") {
  MlpModel m = zeros_like(init(2, 2, 1, 3));
  Gradients g = zeros_like(m);
  g.w1(0, 0) = 5.0;
  g.b3(1) = -0.001;
  AdamState state(m);
  adam_step(m, g, state, 0.01, 0.0);
  CHECK(m.w1(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(m.b3(1) == doctest::Approx(0.01).epsilon(1e-4));
  CHECK(m.w2(0, 0) == 0.0);
}

TEST_CASE("training rejects invalid inputs") {
  auto parts = small_split();
  TrainConfig cfg = small_config(1);
  SUBCASE("none labels in the training set") {
    parts.train.labels[0] = kNone;
    CHECK_THROWS_AS(train(parts.train, parts.val, cfg), DataError);
  }
  SUBCASE("dimension mismatch") {
    auto other = split(generate_synthetic({4, 20, 7, 1.0, 0.5, 1}), {0.5, {}, 2});
    CHECK_THROWS_AS(train(parts.train, other.val, cfg), DataError);
  }
  SUBCASE("bad schedule") {
    cfg.lr_min = cfg.lr_max;
    CHECK_THROWS_AS(train(parts.train, parts.val, cfg), ConfigError);
  }
  SUBCASE("empty training set") {
    EmbeddingDataset empty = parts.train;
    empty.labels.clear();
    empty.embeddings.resize(0, 6);
    CHECK_THROWS_AS(train(empty, parts.val, cfg), DataError);
  }
}

TEST_CASE("a trailing single-example batch is folded into the previous one") {
  auto parts = split(generate_synthetic({3, 11, 4, 1.0, 0.5, 1}), {0.5, {}, 2});
  REQUIRE(parts.train.size() % 4 == 1);
  TrainConfig cfg = small_config(2);
  cfg.batch_size = 4;
  CHECK_NOTHROW(train(parts.train, parts.val, cfg));
}

TEST_CASE("near-zero alpha draws lambda close to 0 or 1") {
  Rng rng(17);
  int interior = 0;
  const int n = 20000;
  for (int k = 0; k < n; ++k) {
    const double l = sample_lambda(0.01, rng);
    interior += l > 0.05 && l < 0.95;
  }
  CHECK(static_cast<double>(interior) / n < 0.10);
}

TEST_CASE("without augmentation the classifier learns separable synthetic data") {
  const auto ds = generate_synthetic({20, 100, 64, 1.0, 0.3, 31});
  const auto parts = split(ds, {0.5, {}, 31});
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.snapshot_every = 0;
  cfg.seed = 31;
  const TrainResult r = train(parts.train, parts.val, cfg);
  const PredictionSet p{predict(r.model, to_matrix(parts.val)), parts.val.labels};
  const auto acc = accuracy_triplet(apply_threshold(p, 0.0), p);
  CHECK(*acc.id_acc >= 0.9);
}
