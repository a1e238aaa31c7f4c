#include "embaug/threshold.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace embaug {

std::optional<double> tp_ratio(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t den = fp + fn;
  if (den == 0) {
    if (tp == 0) return std::nullopt;
    return std::numeric_limits<double>::infinity();
  }
  return static_cast<double>(tp) / static_cast<double>(den);
}

std::vector<double> threshold_grid(double grid_step) {
  if (!(grid_step > 0.0 && grid_step <= 0.5)) throw ConfigError("grid_step must lie in (0, 0.5]");
  std::vector<double> grid;
  const double steps = 1.0 / grid_step;
  const auto k = static_cast<long>(std::llround(steps));
  if (std::abs(steps - static_cast<double>(k)) < 1e-9) {
    // k / K keeps values like 0.75 exact.
    for (long i = 0; i <= k; ++i) grid.push_back(static_cast<double>(i) / static_cast<double>(k));
  } else {
    for (long i = 0; static_cast<double>(i) * grid_step < 1.0; ++i) {
      grid.push_back(static_cast<double>(i) * grid_step);
    }
    grid.push_back(1.0);
  }
  return grid;
}

ThresholdSweep sweep(const PredictionSet& p, double grid_step) {
  p.validate();
  const auto grid = threshold_grid(grid_step);

  std::vector<ClassId> best(p.size());
  std::vector<double> conf(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    best[i] = argmax_row(p.probs, row);
    conf[i] = p.probs(row, best[i]);
  }

  ThresholdSweep out;
  for (double t : grid) {
    ThresholdedOutcome o;
    o.threshold = t;
    o.predicted.resize(p.size());
    SweepRow row;
    row.threshold = t;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const ClassId pred = conf[i] > t ? best[i] : kNone;
      o.predicted[i] = pred;
      const ClassId truth = p.labels[i];
      if (truth == kNone) {
        if (pred == kNone) {
          ++row.none_tp;
        } else {
          ++row.none_fn;
          ++row.id_fp;
        }
      } else if (pred == truth) {
        ++row.id_tp;
      } else {
        ++row.id_fn;
        if (pred == kNone) {
          ++row.none_fp;
        } else {
          ++row.id_fp;
        }
      }
    }
    row.acc = accuracy_triplet(o, p);
    row.ratio_id = tp_ratio(row.id_tp, row.id_fp, row.id_fn);
    row.ratio_none = tp_ratio(row.none_tp, row.none_fp, row.none_fn);
    out.rows.push_back(row);
  }
  return out;
}

IntersectionResult heuristic_intersection(const ThresholdSweep& s) {
  if (s.rows.empty()) throw DataError("empty threshold sweep");
  std::vector<double> gap;
  for (const auto& row : s.rows) {
    if (!row.acc.none_acc || !row.acc.overall_acc) {
      throw DataError("intersection heuristic needs \"none\" examples in the prediction set");
    }
    gap.push_back(*row.acc.overall_acc - *row.acc.none_acc);
  }
  for (std::size_t k = 0; k < gap.size(); ++k) {
    if (gap[k] == 0.0) return {s.rows[k].threshold, true};
    if (k + 1 < gap.size() && gap[k] * gap[k + 1] < 0.0) {
      const double t0 = s.rows[k].threshold;
      const double t1 = s.rows[k + 1].threshold;
      const double frac = gap[k] / (gap[k] - gap[k + 1]);
      return {t0 + frac * (t1 - t0), true};
    }
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < gap.size(); ++k) {
    if (std::abs(gap[k]) < std::abs(gap[best])) best = k;
  }
  return {s.rows[best].threshold, false};
}

RatioResult heuristic_ratio(const ThresholdSweep& s) {
  std::optional<RatioResult> best;
  for (const auto& row : s.rows) {
    if (!row.ratio_id || !row.ratio_none) continue;
    const double objective = 0.5 * (*row.ratio_id + *row.ratio_none);
    if (!best || objective > best->objective) best = RatioResult{row.threshold, objective};
  }
  if (!best) throw DataError("ratio objective is undefined at every threshold");
  return *best;
}

namespace {
void put_opt(std::ostringstream& os, const std::optional<double>& v) {
  if (!v) return;
  if (std::isinf(*v)) {
    os << "inf";
  } else {
    os << *v;
  }
}
}  // namespace

std::string sweep_csv(const ThresholdSweep& s) {
  std::ostringstream os;
  os.precision(10);
  os << "threshold,id_acc,none_acc,overall_acc,ratio_id,ratio_none\n";
  for (const auto& row : s.rows) {
    os << row.threshold << ',';
    put_opt(os, row.acc.id_acc);
    os << ',';
    put_opt(os, row.acc.none_acc);
    os << ',';
    put_opt(os, row.acc.overall_acc);
    os << ',';
    put_opt(os, row.ratio_id);
    os << ',';
    put_opt(os, row.ratio_none);
    os << '\n';
  }
  return os.str();
}

}  // namespace embaug
