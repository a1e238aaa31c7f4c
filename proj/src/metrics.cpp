#include "embaug/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace embaug {

void PredictionSet::validate() const {
  if (static_cast<std::size_t>(probs.rows()) != labels.size()) {
    throw DataError("prediction rows do not match label count");
  }
  const Eigen::Index c = probs.cols();
  for (ClassId label : labels) {
    if (label != kNone && (label < 0 || label >= c)) throw DataError("label outside class range");
  }
  if (!probs.allFinite() || (probs.size() > 0 && (probs.minCoeff() < 0.0 || probs.maxCoeff() > 1.0))) {
    throw DataError("probabilities must lie in [0, 1]");
  }
}

ClassId argmax_row(const Matrix& probs, Eigen::Index row) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < probs.cols(); ++c) {
    if (probs(row, c) > probs(row, best)) best = c;
  }
  return static_cast<ClassId>(best);
}

ThresholdedOutcome apply_threshold(const PredictionSet& p, double t) {
  ThresholdedOutcome out;
  out.threshold = t;
  out.predicted.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const ClassId best = argmax_row(p.probs, row);
    out.predicted[i] = p.probs(row, best) > t ? best : kNone;
  }
  return out;
}

AccuracyTriplet accuracy_triplet(const ThresholdedOutcome& o, const PredictionSet& p) {
  if (o.predicted.size() != p.size()) throw DataError("outcome does not match prediction set");
  std::size_t id_total = 0, id_correct = 0, none_total = 0, none_correct = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool correct = o.predicted[i] == p.labels[i];
    if (p.labels[i] == kNone) {
      ++none_total;
      none_correct += correct;
    } else {
      ++id_total;
      id_correct += correct;
    }
  }
  auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  return {ratio(id_correct, id_total), ratio(none_correct, none_total),
          ratio(id_correct + none_correct, id_total + none_total)};
}

std::optional<double> binary_auroc(std::span<const double> scores, const std::vector<bool>& positive) {
  const std::size_t n = scores.size();
  if (positive.size() != n) throw DataError("score and label lengths differ");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Mann-Whitney rank sum with mid-ranks for ties.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (positive[order[k]]) {
        rank_sum += mid_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double p = static_cast<double>(n_pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(n_neg));
}

std::optional<double> average_precision(std::span<const double> scores,
                                        const std::vector<bool>& positive) {
  const std::size_t n = scores.size();
  if (positive.size() != n) throw DataError("score and label lengths differ");
  const auto n_pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
  if (n_pos == 0 || n_pos == n) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  // Step through distinct thresholds from high to low; each step adds
  // precision * (recall increment).
  double ap = 0.0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    std::size_t step_tp = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      positive[order[j]] ? ++step_tp : ++fp;
      ++j;
    }
    tp += step_tp;
    if (step_tp > 0) {
      const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
      ap += precision * static_cast<double>(step_tp) / static_cast<double>(n_pos);
    }
    i = j;
  }
  return ap;
}

namespace {

using BinaryMetric = std::optional<double> (*)(std::span<const double>, const std::vector<bool>&);

OvrScores ovr(const PredictionSet& p, BinaryMetric metric) {
  p.validate();
  const std::size_t n = p.size();
  const Eigen::Index c = p.num_classes();
  OvrScores out;
  std::vector<double> scores(n);
  std::vector<bool> positive(n);

  auto score_class = [&](ClassId label) {
    ClassScore cs;
    cs.label = label;
    for (std::size_t i = 0; i < n; ++i) {
      positive[i] = p.labels[i] == label;
      cs.support += positive[i];
    }
    cs.value = metric(scores, positive);
    out.per_class.push_back(cs);
  };

  for (Eigen::Index k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < n; ++i) scores[i] = p.probs(static_cast<Eigen::Index>(i), k);
    score_class(static_cast<ClassId>(k));
  }
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = 1.0 - p.probs.row(static_cast<Eigen::Index>(i)).maxCoeff();
  }
  score_class(kNone);

  double weighted = 0.0, weight = 0.0;
  for (const auto& cs : out.per_class) {
    if (!cs.value) continue;
    weighted += static_cast<double>(cs.support) * *cs.value;
    weight += static_cast<double>(cs.support);
  }
  if (weight == 0.0) throw DataError("no class has both positive and negative examples");
  out.weighted_average = weighted / weight;
  return out;
}

}  // namespace

OvrScores roc_auc_ovr(const PredictionSet& p) { return ovr(p, &binary_auroc); }
OvrScores pr_auc_ovr(const PredictionSet& p) { return ovr(p, &average_precision); }

std::size_t bin_index(double value, int bins) {
  const auto b = static_cast<long>(std::floor(value * bins));
  return static_cast<std::size_t>(std::clamp(b, 0L, static_cast<long>(bins) - 1));
}

ReliabilityDiagram reliability(const PredictionSet& p, int bins) {
  if (bins < 2) throw ConfigError("reliability diagram needs at least two bins");
  p.validate();
  ReliabilityDiagram out;
  out.bins.resize(static_cast<std::size_t>(bins));
  std::vector<double> conf_sum(out.bins.size(), 0.0);
  std::vector<std::size_t> correct(out.bins.size(), 0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.labels[i] == kNone) {
      ++out.excluded_none;
      continue;
    }
    const auto row = static_cast<Eigen::Index>(i);
    const ClassId best = argmax_row(p.probs, row);
    const double conf = p.probs(row, best);
    const std::size_t b = bin_index(conf, bins);
    ++out.bins[b].count;
    conf_sum[b] += conf;
    correct[b] += best == p.labels[i];
  }
  for (std::size_t b = 0; b < out.bins.size(); ++b) {
    auto& bin = out.bins[b];
    bin.lower = static_cast<double>(b) / bins;
    bin.upper = static_cast<double>(b + 1) / bins;
    if (bin.count > 0) {
      bin.mean_confidence = conf_sum[b] / static_cast<double>(bin.count);
      bin.accuracy = static_cast<double>(correct[b]) / static_cast<double>(bin.count);
    }
  }
  return out;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("pearson: length mismatch");
  const auto n = static_cast<double>(x.size());
  if (x.size() < 2) return std::nullopt;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::optional<double> confidence_accuracy_correlation(const ReliabilityDiagram& diagram) {
  std::vector<double> conf, acc;
  for (const auto& bin : diagram.bins) {
    if (bin.count == 0) continue;
    conf.push_back(*bin.mean_confidence);
    acc.push_back(*bin.accuracy);
  }
  if (conf.size() < 2) throw DataError("correlation needs at least two non-empty bins");
  return pearson(conf, acc);
}

std::optional<double> confidence_accuracy_correlation(const PredictionSet& p, int bins) {
  return confidence_accuracy_correlation(reliability(p, bins));
}

std::optional<double> per_example_confidence_correlation(const PredictionSet& p) {
  p.validate();
  std::vector<double> conf, correct;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.labels[i] == kNone) continue;
    const auto row = static_cast<Eigen::Index>(i);
    const ClassId best = argmax_row(p.probs, row);
    conf.push_back(p.probs(row, best));
    correct.push_back(best == p.labels[i] ? 1.0 : 0.0);
  }
  return pearson(conf, correct);
}

std::vector<std::size_t> confidence_histogram(const PredictionSet& p, int bins) {
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    ++counts[bin_index(p.probs.row(row).maxCoeff(), bins)];
  }
  return counts;
}

namespace {
nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
}  // namespace

nlohmann::json to_json(const OvrScores& s) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& cs : s.per_class) {
    per.push_back({{"class", cs.label == kNone ? nlohmann::json("none") : nlohmann::json(cs.label)},
                   {"support", cs.support},
                   {"value", opt(cs.value)}});
  }
  return {{"weighted_average", s.weighted_average}, {"per_class", per}};
}

nlohmann::json to_json(const ReliabilityDiagram& d) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : d.bins) {
    bins.push_back({{"lower", b.lower},
                    {"upper", b.upper},
                    {"count", b.count},
                    {"mean_confidence", opt(b.mean_confidence)},
                    {"accuracy", opt(b.accuracy)}});
  }
  return {{"bins", bins}, {"excluded_none_examples", d.excluded_none}};
}

nlohmann::json to_json(const AccuracyTriplet& t) {
  return {{"id_acc", opt(t.id_acc)}, {"none_acc", opt(t.none_acc)}, {"overall_acc", opt(t.overall_acc)}};
}

}  // namespace embaug
