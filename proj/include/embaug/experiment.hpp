#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "embaug/data_io.hpp"
#include "embaug/metrics.hpp"
#include "embaug/threshold.hpp"
#include "embaug/trainer.hpp"

namespace embaug {

struct Variant {
  std::string name;
  AugmentConfig augment;  // seed is derived per trial
};

struct ExperimentManifest {
  // Exactly one of dataset_path / synthetic is set.
  std::optional<std::filesystem::path> dataset_path;
  std::optional<SyntheticSpec> synthetic;
  double train_fraction = 0.1;
  std::vector<ClassId> excluded_classes;  // used when n_excluded is unset
  std::optional<int> n_excluded;          // drawn per trial from its seed
  TrainConfig train;                      // augment and seed are per variant/trial
  std::vector<Variant> variants;
  std::string control;  // variant name used as the baseline for deltas
  std::vector<std::uint64_t> trial_seeds;
  double grid_step = 0.01;
  int bins = 10;
  std::filesystem::path output_dir;
  int jobs = 1;

  void validate() const;
};

ExperimentManifest parse_manifest(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentManifest load_manifest(const std::filesystem::path& path);
nlohmann::json manifest_to_json(const ExperimentManifest& m);

// Everything derived from evaluating one model on one validation set.
struct Evaluation {
  OvrScores auroc;
  OvrScores aupr;
  ReliabilityDiagram reliability;
  std::optional<double> correlation;
  std::optional<double> per_example_correlation;
  std::vector<std::size_t> histogram;
  ThresholdSweep sweep;
  std::optional<IntersectionResult> intersection;
  std::optional<RatioResult> ratio;
  AccuracyTriplet at_intersection;
  AccuracyTriplet at_ratio;
  bool sweep_monotone = true;
};

Evaluation evaluate(const PredictionSet& p, double grid_step, int bins);
nlohmann::json to_json(const Evaluation& e);

// none_acc non-decreasing and id_acc non-increasing along the sweep.
bool sweep_is_monotone(const ThresholdSweep& s);

std::vector<ClassId> draw_excluded_classes(std::size_t num_classes, int count, std::uint64_t seed);

// Runs every (variant, trial) pair and writes per-trial JSON/CSV plus
// aggregate.json under output_dir. Returns the aggregate document.
nlohmann::json run_experiment(const ExperimentManifest& m);

// Writes plot-ready CSV/JSON series for every variant of a results directory.
void write_report(const std::filesystem::path& results_dir, const std::filesystem::path& out_dir);

void write_text(const std::filesystem::path& path, const std::string& text);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace embaug
