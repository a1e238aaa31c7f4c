#pragma once

#include <optional>
#include <string>
#include <vector>

#include "embaug/metrics.hpp"

namespace embaug {

// TP / (FP + FN). Infinity when FP + FN = 0 with TP > 0; nullopt when all
// three are zero.
std::optional<double> tp_ratio(std::size_t tp, std::size_t fp, std::size_t fn);

struct SweepRow {
  double threshold = 0.0;
  AccuracyTriplet acc;
  // ID counts are pooled over all real classes.
  std::size_t id_tp = 0, id_fp = 0, id_fn = 0;
  std::size_t none_tp = 0, none_fp = 0, none_fn = 0;
  std::optional<double> ratio_id;
  std::optional<double> ratio_none;
};

struct ThresholdSweep {
  std::vector<SweepRow> rows;  // strictly ascending thresholds
};

// Thresholds 0, step, 2*step, ... ending exactly at 1.
std::vector<double> threshold_grid(double grid_step);

ThresholdSweep sweep(const PredictionSet& p, double grid_step = 0.01);

struct IntersectionResult {
  double threshold = 0.0;
  bool crossed = false;  // false: fell back to the grid point of smallest gap
};

// Lowest threshold where overall and "none" accuracy cross, interpolating the
// gap linearly between adjacent grid points.
IntersectionResult heuristic_intersection(const ThresholdSweep& s);

struct RatioResult {
  double threshold = 0.0;
  double objective = 0.0;  // may be +infinity
};

// Maximizes the unweighted mean of the ID and "none" TP/(FP+FN) ratios; ties go
// to the lower threshold.
RatioResult heuristic_ratio(const ThresholdSweep& s);

// CSV with header threshold,id_acc,none_acc,overall_acc,ratio_id,ratio_none.
std::string sweep_csv(const ThresholdSweep& s);

}  // namespace embaug
