#pragma once

#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "embaug/common.hpp"

namespace embaug {

// Per-example class probabilities (rows need not sum to one) with true labels
// in [0, C) or kNone.
struct PredictionSet {
  Matrix probs;
  std::vector<ClassId> labels;

  std::size_t size() const { return labels.size(); }
  Eigen::Index num_classes() const { return probs.cols(); }
  void validate() const;
};

struct ThresholdedOutcome {
  std::vector<ClassId> predicted;
  double threshold = 0.0;
};

struct AccuracyTriplet {
  std::optional<double> id_acc;
  std::optional<double> none_acc;
  std::optional<double> overall_acc;
};

// Highest-probability class; ties go to the lowest index.
ClassId argmax_row(const Matrix& probs, Eigen::Index row);

ThresholdedOutcome apply_threshold(const PredictionSet& p, double t);

AccuracyTriplet accuracy_triplet(const ThresholdedOutcome& o, const PredictionSet& p);

// Binary ranking metrics. `positive[i]` marks the positives. Both return
// nullopt unless there is at least one positive and one negative.
std::optional<double> binary_auroc(std::span<const double> scores, const std::vector<bool>& positive);
std::optional<double> average_precision(std::span<const double> scores,
                                        const std::vector<bool>& positive);

struct ClassScore {
  ClassId label = 0;         // kNone for the "none" category
  std::size_t support = 0;   // number of positives
  std::optional<double> value;
};

struct OvrScores {
  std::vector<ClassScore> per_class;  // real classes in order, then "none"
  double weighted_average = 0.0;
};

// One-vs-rest over every real class plus the "none" category, whose score is
// 1 - max class probability. Averages are weighted by support over classes
// that have a defined value.
OvrScores roc_auc_ovr(const PredictionSet& p);
OvrScores pr_auc_ovr(const PredictionSet& p);

struct ReliabilityBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  std::optional<double> mean_confidence;
  std::optional<double> accuracy;
};

// Calibration of argmax predictions; examples whose true label is kNone are
// excluded.
struct ReliabilityDiagram {
  std::vector<ReliabilityBin> bins;
  std::size_t excluded_none = 0;
};

std::size_t bin_index(double value, int bins);

ReliabilityDiagram reliability(const PredictionSet& p, int bins = 10);

// Pearson correlation of per-bin mean confidence against per-bin accuracy over
// non-empty bins. Throws with fewer than two non-empty bins; nullopt when
// either side has zero variance.
std::optional<double> confidence_accuracy_correlation(const PredictionSet& p, int bins = 10);
std::optional<double> confidence_accuracy_correlation(const ReliabilityDiagram& diagram);

// Pearson correlation of per-example confidence against 0/1 correctness over
// the same examples the diagram uses.
std::optional<double> per_example_confidence_correlation(const PredictionSet& p);

// Counts of per-example argmax confidence over `bins` uniform bins on [0, 1].
std::vector<std::size_t> confidence_histogram(const PredictionSet& p, int bins);

std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

nlohmann::json to_json(const OvrScores& s);
nlohmann::json to_json(const ReliabilityDiagram& d);
nlohmann::json to_json(const AccuracyTriplet& t);

}  // namespace embaug
