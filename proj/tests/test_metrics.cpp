#include <cmath>
#include <numeric>

#include "doctest.h"

#include "embaug/metrics.hpp"
#include "oracles.hpp"

using namespace embaug;

namespace {

PredictionSet make_set(std::initializer_list<std::initializer_list<double>> rows, std::vector<ClassId> labels) {
  PredictionSet p;
  p.probs.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    Eigen::Index j = 0;
    for (double v : row) p.probs(i, j++) = v;
    ++i;
  }
  p.labels = std::move(labels);
  return p;
}

// Random prediction set with coarse scores so that ties are common.
PredictionSet random_set(Rng& rng, std::size_t n, int classes) {
  std::uniform_int_distribution<int> level(0, 10);
  std::uniform_int_distribution<int> label(-1, classes - 1);
  PredictionSet p;
  p.probs.resize(static_cast<Eigen::Index>(n), classes);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < classes; ++c) p.probs(static_cast<Eigen::Index>(i), c) = level(rng) / 10.0;
    p.labels.push_back(label(rng));
  }
  return p;
}

// Perfectly or anti-calibrated confidences for a two-class problem.
PredictionSet calibrated_set(std::size_t n, bool anti, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  PredictionSet p;
  p.probs = Matrix::Zero(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = unif(rng);
    p.probs(static_cast<Eigen::Index>(i), 0) = c;
    const bool correct = unif(rng) < (anti ? 1.0 - c : c);
    p.labels.push_back(correct ? 0 : 1);
  }
  return p;
}

}  // namespace

TEST_CASE("apply_threshold uses strict inequality and lowest-index ties") {
  const auto p = make_set({{0.2, 0.9, 0.1}, {0.0, 0.0, 0.0}, {0.4, 0.4, 0.1}}, {1, 0, 1});
  const auto at0 = apply_threshold(p, 0.0);
  CHECK(at0.predicted == std::vector<ClassId>{1, kNone, 0});
  CHECK(apply_threshold(p, 0.8).predicted[0] == 1);
  CHECK(apply_threshold(p, 0.95).predicted[0] == kNone);
  CHECK(apply_threshold(p, 0.9).predicted[0] == kNone);
}

TEST_CASE("accuracy triplet counts ID, none and overall separately") {
  const auto p = make_set({{0.9, 0.1}, {0.9, 0.1}, {0.1, 0.2}, {0.3, 0.1}}, {0, 1, kNone, kNone});
  const auto acc = accuracy_triplet(apply_threshold(p, 0.5), p);
  CHECK(*acc.id_acc == 0.5);
  CHECK(*acc.none_acc == 1.0);
  CHECK(*acc.overall_acc == 0.75);

  const auto perfect = make_set({{0.9, 0.1}, {0.1, 0.8}}, {0, 1});
  const auto all = accuracy_triplet(apply_threshold(perfect, 0.5), perfect);
  CHECK(*all.id_acc == 1.0);
  CHECK(*all.overall_acc == 1.0);
  CHECK_FALSE(all.none_acc.has_value());
}

TEST_CASE("raising the threshold only moves predictions toward none") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_set(rng, 40, 4);
    std::optional<double> prev_none, prev_id;
    std::vector<ClassId> prev_pred;
    for (int k = 0; k <= 20; ++k) {
      const auto o = apply_threshold(p, k / 20.0);
      if (!prev_pred.empty()) {
        for (std::size_t i = 0; i < p.size(); ++i) {
          if (prev_pred[i] == kNone) REQUIRE(o.predicted[i] == kNone);
        }
      }
      const auto acc = accuracy_triplet(o, p);
      if (prev_none && acc.none_acc) REQUIRE(*acc.none_acc >= *prev_none);
      if (prev_id && acc.id_acc) REQUIRE(*acc.id_acc <= *prev_id);
      prev_none = acc.none_acc;
      prev_id = acc.id_acc;
      prev_pred = o.predicted;
    }
  }
}

TEST_CASE("binary AUROC worked examples") {
  CHECK(*binary_auroc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, {true, true, false, false}) == 1.0);
  // Positives {0.9, 0.3}, negative {0.8}: one concordant pair, one discordant.
  CHECK(*binary_auroc(std::vector<double>{0.9, 0.3, 0.8}, {true, true, false}) == 0.5);
  CHECK(*binary_auroc(std::vector<double>{0.5, 0.5}, {true, false}) == 0.5);
  CHECK_FALSE(binary_auroc(std::vector<double>{0.1, 0.2}, {true, true}).has_value());
}

TEST_CASE("average precision worked examples") {
  CHECK(*average_precision(std::vector<double>{0.9, 0.8, 0.2, 0.1}, {true, true, false, false}) == 1.0);
  // All scores tied: precision is the prevalence.
  CHECK(*average_precision(std::vector<double>(10, 0.3), {true, false, true, false, false, false, true, false,
                                                          false, false}) == doctest::Approx(0.3));
  // Ranking + - +: (1 * 1/2) + (2/3 * 1/2).
  CHECK(*average_precision(std::vector<double>{0.9, 0.5, 0.1}, {true, false, true}) ==
        doctest::Approx(0.5 + 1.0 / 3.0));
  CHECK_FALSE(average_precision(std::vector<double>{0.1}, {false}).has_value());
}

TEST_CASE("binary metrics agree with pairwise and enumeration oracles") {
  Rng rng(11);
  std::uniform_int_distribution<int> size(2, 20);
  std::uniform_int_distribution<int> level(0, 6);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  int checked = 0;
  while (checked < 200) {
    const auto n = static_cast<std::size_t>(size(rng));
    std::vector<double> scores(n);
    std::vector<bool> positive(n);
    const bool coarse = unif(rng) < 0.5;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = coarse ? level(rng) / 6.0 : unif(rng);
      positive[i] = unif(rng) < 0.4;
    }
    const auto pos = std::count(positive.begin(), positive.end(), true);
    if (pos == 0 || static_cast<std::size_t>(pos) == n) continue;
    ++checked;
    REQUIRE(std::abs(*binary_auroc(scores, positive) - oracle::pairwise_auroc(scores, positive)) < 1e-9);
    REQUIRE(std::abs(*average_precision(scores, positive) -
                     oracle::enumerated_average_precision(scores, positive)) < 1e-9);

    std::vector<double> cubed(n);
    for (std::size_t i = 0; i < n; ++i) cubed[i] = scores[i] * scores[i] * scores[i];
    REQUIRE(std::abs(*binary_auroc(cubed, positive) - *binary_auroc(scores, positive)) < 1e-12);
    REQUIRE(std::abs(*average_precision(cubed, positive) - *average_precision(scores, positive)) < 1e-12);
  }
}

TEST_CASE("one-vs-rest scores include a none column scored by 1 - max") {
  const auto p = make_set({{0.9, 0.1}, {0.2, 0.8}, {0.3, 0.2}, {0.1, 0.1}}, {0, 1, kNone, kNone});
  const OvrScores roc = roc_auc_ovr(p);
  REQUIRE(roc.per_class.size() == 3);
  CHECK(roc.per_class[2].label == kNone);
  CHECK(roc.per_class[2].support == 2);
  CHECK(*roc.per_class[0].value == 1.0);
  CHECK(*roc.per_class[1].value == 1.0);
  CHECK(*roc.per_class[2].value == 1.0);
  CHECK(roc.weighted_average == 1.0);
  CHECK(pr_auc_ovr(p).weighted_average == 1.0);
}

TEST_CASE("one-vs-rest weighting skips classes without positives") {
  // Class 2 never appears, so it is absent and carries no weight.
  const auto p = make_set({{0.9, 0.1, 0.5}, {0.6, 0.7, 0.5}, {0.8, 0.3, 0.5}}, {0, 1, 1});
  const OvrScores roc = roc_auc_ovr(p);
  CHECK_FALSE(roc.per_class[2].value.has_value());
  CHECK_FALSE(roc.per_class[3].value.has_value());  // no none examples
  const double expected = (1.0 * *roc.per_class[0].value + 2.0 * *roc.per_class[1].value) / 3.0;
  CHECK(roc.weighted_average == doctest::Approx(expected));

  const auto single = make_set({{0.9, 0.1}, {0.8, 0.3}}, {0, 0});
  CHECK_THROWS_AS(roc_auc_ovr(single), DataError);
}

TEST_CASE("ovr scores are unchanged by cubing every probability") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_set(rng, 20, 3);
    PredictionSet q = p;
    q.probs = p.probs.array().cube().matrix();
    // The none score 1 - max is a decreasing function of max, so cubing keeps its order.
    REQUIRE(std::abs(roc_auc_ovr(p).weighted_average - roc_auc_ovr(q).weighted_average) < 1e-12);
    REQUIRE(std::abs(pr_auc_ovr(p).weighted_average - pr_auc_ovr(q).weighted_average) < 1e-12);
  }
}

TEST_CASE("reliability diagram worked examples") {
  const auto confident = make_set({{1.0, 0.0}, {0.0, 1.0}}, {0, 1});
  const auto d = reliability(confident, 10);
  CHECK(d.bins.size() == 10);
  CHECK(d.bins.back().count == 2);
  CHECK(*d.bins.back().accuracy == 1.0);
  for (std::size_t b = 0; b + 1 < d.bins.size(); ++b) CHECK(d.bins[b].count == 0);

  const auto two = make_set({{0.3, 0.1}, {0.9, 0.05}, {0.2, 0.1}}, {1, 0, kNone});
  const auto d2 = reliability(two, 2);
  CHECK(*d2.bins[0].accuracy == 0.0);
  CHECK(*d2.bins[1].accuracy == 1.0);
  CHECK(d2.excluded_none == 1);
  CHECK(d2.bins[0].count + d2.bins[1].count == 2);

  CHECK_THROWS_AS(reliability(two, 1), ConfigError);
}

TEST_CASE("calibrated and anti-calibrated confidence") {
  const auto good = calibrated_set(100000, false, 1);
  const auto d = reliability(good, 10);
  for (const auto& bin : d.bins) {
    REQUIRE(bin.count > 0);
    CHECK(std::abs(*bin.accuracy - *bin.mean_confidence) < 0.02);
  }
  CHECK(*confidence_accuracy_correlation(good, 10) > 0.99);
  CHECK(*per_example_confidence_correlation(good) > 0.0);

  const auto bad = calibrated_set(100000, true, 2);
  CHECK(*confidence_accuracy_correlation(bad, 10) < -0.9);
}

TEST_CASE("correlation degenerate cases") {
  // Constant accuracy across two bins: zero variance, reported as absent.
  const auto flat = make_set({{0.3, 0.1}, {0.9, 0.0}}, {0, 0});
  CHECK_FALSE(confidence_accuracy_correlation(flat, 10).has_value());
  const auto one_bin = make_set({{0.95, 0.1}, {0.96, 0.0}}, {0, 1});
  CHECK_THROWS_AS(confidence_accuracy_correlation(one_bin, 10), DataError);
}

TEST_CASE("confidence histogram") {
  const auto halves = make_set({{0.5, 0.2}, {0.1, 0.5}, {0.5, 0.5}}, {0, 1, kNone});
  const auto h = confidence_histogram(halves, 10);
  CHECK(h[5] == 3);
  CHECK(std::accumulate(h.begin(), h.end(), std::size_t{0}) == 3);

  const auto uniform = calibrated_set(100000, false, 3);
  for (auto count : confidence_histogram(uniform, 10)) {
    CHECK(std::abs(static_cast<double>(count) / 100000.0 - 0.1) < 0.01);
  }

  PredictionSet empty{Matrix(0, 3), {}};
  const auto none = confidence_histogram(empty, 4);
  CHECK(none == std::vector<std::size_t>(4, 0));
  CHECK_THROWS_AS(confidence_histogram(empty, 0), ConfigError);
}

TEST_CASE("prediction sets are validated") {
  auto p = make_set({{0.5, 1.5}}, {0});
  CHECK_THROWS_AS(p.validate(), DataError);
  auto q = make_set({{0.5, 0.5}}, {4});
  CHECK_THROWS_AS(q.validate(), DataError);
}
