#pragma once

#include <optional>
#include <string>
#include <vector>

#include "embaug/augment.hpp"
#include "embaug/data_io.hpp"
#include "embaug/model.hpp"

namespace embaug {

enum class OptimizerKind { kSgd, kAdam };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);

struct TrainConfig {
  int epochs = 576;
  int batch_size = 128;
  double lr_min = 0.0003;
  double lr_max = 0.003;
  int cycle_epochs = 12;
  double weight_decay = 0.0001;
  AugmentConfig augment;
  int snapshot_every = 12;  // 0 disables snapshots
  std::uint64_t seed = 0;
  int hidden_width = kDefaultHiddenWidth;
  double dropout_p = kDefaultDropout;
  double reference_threshold = 0.5;  // for snapshot accuracies
  OptimizerKind optimizer = OptimizerKind::kAdam;

  void validate() const;
};

struct HistoryRecord {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> overall_acc;
  std::optional<double> none_acc;
  double auroc = 0.0;
  double aupr = 0.0;
};

struct TrainingHistory {
  std::vector<HistoryRecord> records;
};

struct TrainResult {
  MlpModel model;
  TrainingHistory history;
};

// Triangular cycle: lr_min -> lr_max over the first half of each cycle, back
// down over the second half. `epoch_fraction` counts epochs continuously.
double lr_at(double epoch_fraction, const TrainConfig& cfg);

// theta <- theta - lr * (grad + weight_decay * theta), for every parameter.
void sgd_step(MlpModel& m, const Gradients& g, double lr, double weight_decay);

struct AdamState {
  MlpModel first;   // running mean of gradients
  MlpModel second;  // running mean of squared gradients
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit AdamState(const MlpModel& like);
};

// theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta),
// with bias-corrected moment estimates; decay is decoupled from the moments.
void adam_step(MlpModel& m, const Gradients& g, AdamState& state, double lr, double weight_decay);

Matrix one_hot(const std::vector<ClassId>& labels, Eigen::Index num_classes);

TrainResult train(const EmbeddingDataset& train_ds, const EmbeddingDataset& val_ds,
                  const TrainConfig& cfg);

// CSV with header epoch,loss,acc,none_acc,auroc,aupr.
std::string history_csv(const TrainingHistory& h);

}  // namespace embaug
