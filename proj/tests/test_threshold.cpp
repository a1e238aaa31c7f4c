#include <cmath>
#include <limits>

#include "doctest.h"

#include "embaug/data_io.hpp"
#include "embaug/model.hpp"
#include "embaug/threshold.hpp"
#include "embaug/trainer.hpp"

using namespace embaug;

namespace {

void add_row(PredictionSet& p, std::vector<double> row, ClassId label) {
  const Eigen::Index i = p.probs.rows();
  p.probs.conservativeResize(i + 1, static_cast<Eigen::Index>(row.size()));
  for (std::size_t j = 0; j < row.size(); ++j) p.probs(i, static_cast<Eigen::Index>(j)) = row[j];
  p.labels.push_back(label);
}

SweepRow row_with(double t, double overall, double none) {
  SweepRow r;
  r.threshold = t;
  r.acc.overall_acc = overall;
  r.acc.none_acc = none;
  r.acc.id_acc = overall;
  return r;
}

}  // namespace

TEST_CASE("tp ratio edge cases") {
  CHECK(*tp_ratio(4, 1, 1) == 2.0);
  CHECK(*tp_ratio(0, 3, 1) == 0.0);
  CHECK(std::isinf(*tp_ratio(5, 0, 0)));
  CHECK_FALSE(tp_ratio(0, 0, 0).has_value());
}

TEST_CASE("threshold grid") {
  CHECK(threshold_grid(0.5) == std::vector<double>{0.0, 0.5, 1.0});
  const auto g = threshold_grid(0.01);
  CHECK(g.size() == 101);
  CHECK(g[75] == 0.75);
  CHECK(g.back() == 1.0);
  const auto odd = threshold_grid(0.3);
  CHECK(odd.back() == 1.0);
  for (std::size_t k = 1; k < odd.size(); ++k) CHECK(odd[k] > odd[k - 1]);
  CHECK_THROWS_AS(threshold_grid(0.0), ConfigError);
  CHECK_THROWS_AS(threshold_grid(1.5), ConfigError);
}

TEST_CASE("rows with max 0.9 give no none predictions below 0.9") {
  PredictionSet p;
  p.probs.resize(0, 3);
  add_row(p, {0.9, 0.05, 0.05}, 0);
  add_row(p, {0.05, 0.9, 0.05}, 2);
  add_row(p, {0.05, 0.05, 0.9}, kNone);
  const auto s = sweep(p, 0.1);
  for (const auto& row : s.rows) {
    const std::size_t none_predicted = row.none_tp + row.none_fp;
    if (row.threshold < 0.9) {
      CHECK(none_predicted == 0);
    } else {
      CHECK(none_predicted == 3);
    }
  }
}

TEST_CASE("sweep counts at a single threshold") {
  PredictionSet p;
  p.probs.resize(0, 2);
  add_row(p, {0.9, 0.1}, 0);   // correct
  add_row(p, {0.8, 0.1}, 1);   // wrong class
  add_row(p, {0.3, 0.2}, 1);   // ID predicted none
  add_row(p, {0.7, 0.1}, kNone);  // none predicted as a class
  add_row(p, {0.2, 0.1}, kNone);  // none correct
  const auto s = sweep(p, 0.5);
  const SweepRow& r = s.rows[1];
  CHECK(r.threshold == 0.5);
  CHECK(r.id_tp == 1);
  CHECK(r.none_tp == 1);
  CHECK(r.none_fp == 1);
  CHECK(r.none_fn == 1);
  CHECK(*r.acc.overall_acc == doctest::Approx(0.4));
  CHECK(*r.ratio_none == 0.5);
}

TEST_CASE("intersection of constant overall accuracy and linear none accuracy") {
  ThresholdSweep s;
  for (int k = 0; k <= 100; ++k) s.rows.push_back(row_with(k / 100.0, 0.8, k / 100.0));
  const auto r = heuristic_intersection(s);
  CHECK(r.crossed);
  CHECK(r.threshold == doctest::Approx(0.8));

  // Coarse grid: crossing between 0.75 and 1.0 found by interpolation.
  ThresholdSweep coarse;
  for (int k = 0; k <= 4; ++k) coarse.rows.push_back(row_with(k / 4.0, 0.8, k / 4.0));
  CHECK(heuristic_intersection(coarse).threshold == doctest::Approx(0.8));
}

TEST_CASE("intersection returns the lowest crossing") {
  ThresholdSweep s;
  const std::vector<double> none = {0.0, 0.9, 0.2, 0.9};
  for (std::size_t k = 0; k < none.size(); ++k) s.rows.push_back(row_with(k / 3.0, 0.5, none[k]));
  const auto r = heuristic_intersection(s);
  CHECK(r.crossed);
  CHECK(r.threshold < 1.0 / 3.0);
}

TEST_CASE("intersection without a crossing falls back to the smallest gap") {
  ThresholdSweep s;
  const std::vector<double> none = {0.1, 0.3, 0.6, 0.5};
  for (std::size_t k = 0; k < none.size(); ++k) s.rows.push_back(row_with(k / 3.0, 0.7, none[k]));
  const auto r = heuristic_intersection(s);
  CHECK_FALSE(r.crossed);
  CHECK(r.threshold == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("intersection requires none examples") {
  PredictionSet p;
  p.probs.resize(0, 2);
  add_row(p, {0.9, 0.1}, 0);
  add_row(p, {0.2, 0.7}, 1);
  CHECK_THROWS_AS(heuristic_intersection(sweep(p, 0.1)), DataError);
}

TEST_CASE("ratio heuristic finds a unique peak") {
  ThresholdSweep s;
  for (int k = 0; k <= 20; ++k) {
    SweepRow r;
    r.threshold = k / 20.0;
    r.ratio_id = 2.0;
    r.ratio_none = 3.0 - std::abs(k - 13) * 0.1;
    s.rows.push_back(r);
  }
  const auto r = heuristic_ratio(s);
  CHECK(r.threshold == 13 / 20.0);
  CHECK(r.objective == doctest::Approx(2.5));
}

TEST_CASE("ratio heuristic ties and infinite objective") {
  ThresholdSweep s;
  for (int k = 0; k <= 4; ++k) {
    SweepRow r;
    r.threshold = k / 4.0;
    r.ratio_id = 1.0;
    r.ratio_none = k == 0 ? std::optional<double>{} : std::optional<double>{k >= 2 ? 4.0 : 1.0};
    s.rows.push_back(r);
  }
  CHECK(heuristic_ratio(s).threshold == 0.5);

  s.rows[3].ratio_none = std::numeric_limits<double>::infinity();
  s.rows[4].ratio_none = std::numeric_limits<double>::infinity();
  const auto inf = heuristic_ratio(s);
  CHECK(inf.threshold == 0.75);
  CHECK(std::isinf(inf.objective));

  ThresholdSweep undefined;
  undefined.rows.push_back(SweepRow{});
  CHECK_THROWS_AS(heuristic_ratio(undefined), DataError);
}

TEST_CASE("ratio heuristic on a constructed prediction set") {
  // Correct ID confidences above 0.75; wrong ID and none confidences at or below.
  PredictionSet p;
  p.probs.resize(0, 3);
  for (int k = 1; k <= 100; ++k) add_row(p, {0.75 + k * 0.0025, 0.1, 0.1}, 0);
  for (int j = 0; j <= 10; ++j) add_row(p, {(300 + 45 * j) / 1000.0, 0.1, 0.1}, 1);
  for (int j = 0; j <= 100; ++j) add_row(p, {(300 + 4.5 * j) / 1000.0, 0.1, 0.1}, kNone);
  const auto r = heuristic_ratio(sweep(p, 0.01));
  CHECK(r.threshold == 0.75);
}

TEST_CASE("intersection on a constructed prediction set") {
  // ID-correct and none confidences evenly spread over [0.2, 1].
  PredictionSet p;
  p.probs.resize(0, 2);
  for (int k = 0; k <= 400; ++k) {
    const double c = 0.2 + 0.002 * k;
    add_row(p, {c, 0.0}, 0);
    add_row(p, {c, 0.0}, kNone);
  }
  for (double step : {0.01, 0.05, 0.1}) {
    const auto r = heuristic_intersection(sweep(p, step));
    CHECK(r.crossed);
    CHECK(std::abs(r.threshold - 0.6) <= step);
  }
}

TEST_CASE("heuristics are stable under grid refinement") {
  Rng rng(5);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  PredictionSet p;
  p.probs.resize(0, 3);
  for (int i = 0; i < 600; ++i) {
    const ClassId label = i % 4 == 3 ? kNone : static_cast<ClassId>(i % 3);
    std::vector<double> row = {unif(rng) * 0.3, unif(rng) * 0.3, unif(rng) * 0.3};
    if (label != kNone) row[static_cast<std::size_t>(label)] = 0.3 + 0.7 * std::sqrt(unif(rng));
    add_row(p, row, label);
  }
  const double coarse = heuristic_intersection(sweep(p, 0.02)).threshold;
  const double fine = heuristic_intersection(sweep(p, 0.001)).threshold;
  CHECK(std::abs(coarse - fine) <= 0.02);
}

TEST_CASE("sweep columns are monotone") {
  Rng rng(6);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    PredictionSet p;
    p.probs.resize(0, 4);
    for (int i = 0; i < 50; ++i) {
      add_row(p, {unif(rng), unif(rng), unif(rng), unif(rng)}, static_cast<ClassId>(i % 5) - 1);
    }
    const auto s = sweep(p, 0.05);
    for (std::size_t k = 1; k < s.rows.size(); ++k) {
      REQUIRE(*s.rows[k].acc.none_acc >= *s.rows[k - 1].acc.none_acc);
      REQUIRE(*s.rows[k].acc.id_acc <= *s.rows[k - 1].acc.id_acc);
    }
  }
}

TEST_CASE("sweep csv") {
  PredictionSet p;
  p.probs.resize(0, 2);
  add_row(p, {0.9, 0.1}, 0);
  add_row(p, {0.1, 0.1}, kNone);
  const std::string csv = sweep_csv(sweep(p, 0.5));
  CHECK(csv.rfind("threshold,id_acc,none_acc,overall_acc,ratio_id,ratio_none\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(csv.find("inf") != std::string::npos);
}

TEST_CASE("both heuristics agree on a 70-30 synthetic split") {
  SyntheticSpec spec;
  spec.seed = 21;
  const auto ds = generate_synthetic(spec);
  SplitSpec ss;
  ss.train_fraction = 0.7;
  ss.excluded_classes = {2, 7, 11, 15, 19};
  ss.seed = 4;
  const auto parts = split(ds, ss);

  TrainConfig cfg;
  cfg.epochs = 48;
  cfg.snapshot_every = 0;
  cfg.seed = 8;
  const auto result = train(parts.train, parts.val, cfg);
  PredictionSet p{predict(result.model, to_matrix(parts.val)), parts.val.labels};
  const auto s = sweep(p, 0.01);
  const double a = heuristic_intersection(s).threshold;
  const double b = heuristic_ratio(s).threshold;
  MESSAGE("intersection " << a << " ratio " << b);
  CHECK(std::abs(a - b) <= 0.1);
}
