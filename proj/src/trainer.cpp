#include "embaug/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "embaug/metrics.hpp"

namespace embaug {

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kSgd ? "sgd" : "adam";
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + name + "'");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(lr_min > 0.0 && lr_min < lr_max)) throw ConfigError("need 0 < lr_min < lr_max");
  if (cycle_epochs < 1) throw ConfigError("cycle_epochs must be at least 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (snapshot_every < 0) throw ConfigError("snapshot_every must be non-negative");
  if (hidden_width < 1) throw ConfigError("hidden_width must be positive");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(reference_threshold >= 0.0 && reference_threshold <= 1.0)) {
    throw ConfigError("reference_threshold must lie in [0, 1]");
  }
  augment.validate();
}

double lr_at(double epoch_fraction, const TrainConfig& cfg) {
  const double period = cfg.cycle_epochs;
  const double phase = std::fmod(std::max(epoch_fraction, 0.0), period) / period;
  const double rise = phase < 0.5 ? 2.0 * phase : 2.0 * (1.0 - phase);
  return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * rise;
}

void sgd_step(MlpModel& m, const Gradients& g, double lr, double weight_decay) {
  auto update = [&](auto& theta, const auto& grad) {
    theta -= lr * (grad + weight_decay * theta);
  };
  update(m.w1, g.w1);
  update(m.b1, g.b1);
  update(m.w2, g.w2);
  update(m.b2, g.b2);
  update(m.w3, g.w3);
  update(m.b3, g.b3);
}

AdamState::AdamState(const MlpModel& like) : first(zeros_like(like)), second(zeros_like(like)) {}

void adam_step(MlpModel& m, const Gradients& g, AdamState& state, double lr, double weight_decay) {
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto update = [&](auto& theta, const auto& grad, auto& mean, auto& sq) {
    mean = state.beta1 * mean + (1.0 - state.beta1) * grad;
    sq = state.beta2 * sq + (1.0 - state.beta2) * grad.cwiseProduct(grad);
    const auto step = ((mean.array() / c1) / ((sq.array() / c2).sqrt() + state.epsilon)).matrix();
    theta -= lr * (step + weight_decay * theta);
  };
  update(m.w1, g.w1, state.first.w1, state.second.w1);
  update(m.b1, g.b1, state.first.b1, state.second.b1);
  update(m.w2, g.w2, state.first.w2, state.second.w2);
  update(m.b2, g.b2, state.first.b2, state.second.b2);
  update(m.w3, g.w3, state.first.w3, state.second.w3);
  update(m.b3, g.b3, state.first.b3, state.second.b3);
}

Matrix one_hot(const std::vector<ClassId>& labels, Eigen::Index num_classes) {
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const ClassId label = labels[i];
    if (label < 0 || label >= num_classes) throw DataError("cannot one-hot encode label " + std::to_string(label));
    y(static_cast<Eigen::Index>(i), label) = 1.0;
  }
  return y;
}

namespace {

// Mini-batch boundaries; a trailing batch of one is folded into its
// predecessor so mixing always has a partner.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch) {
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (std::size_t start = 0; start < n; start += batch) {
    ranges.emplace_back(start, std::min(start + batch, n));
  }
  if (ranges.size() > 1 && ranges.back().second - ranges.back().first == 1) {
    ranges.pop_back();
    ranges.back().second = n;
  }
  return ranges;
}

}  // namespace

TrainResult train(const EmbeddingDataset& train_ds, const EmbeddingDataset& val_ds,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (train_ds.size() == 0) throw DataError("empty training set");
  if (train_ds.dim() != val_ds.dim()) throw DataError("train and validation dimensions differ");
  if (train_ds.class_names != val_ds.class_names) {
    throw DataError("train and validation class vocabularies differ");
  }
  if (std::find(train_ds.labels.begin(), train_ds.labels.end(), kNone) != train_ds.labels.end()) {
    throw DataError("training set contains \"none\" labels");
  }
  if (cfg.augment.method != AugmentMethod::kNone && train_ds.size() < 2) {
    throw DataError("mixing augmentation needs at least two training examples");
  }

  const auto d = static_cast<Eigen::Index>(train_ds.dim());
  const auto c = static_cast<Eigen::Index>(train_ds.num_classes());
  TrainResult result{init(d, c, cfg.seed, cfg.hidden_width, cfg.dropout_p), {}};
  MlpModel& model = result.model;

  const Matrix x_train = to_matrix(train_ds);
  const Matrix y_train = one_hot(train_ds.labels, c);
  const Matrix x_val = to_matrix(val_ds);

  std::seed_seq seq{cfg.seed, std::uint64_t{0x7261696e}};
  Rng rng(seq);
  Rng aug_rng(cfg.augment.seed);

  AdamState adam(model);

  const std::size_t n = train_ds.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto ranges = batch_ranges(n, static_cast<std::size_t>(cfg.batch_size));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < ranges.size(); ++b) {
      const auto [begin, end] = ranges[b];
      const auto rows = static_cast<Eigen::Index>(end - begin);
      Batch batch{Matrix(rows, d), Matrix(rows, c)};
      for (Eigen::Index i = 0; i < rows; ++i) {
        const auto src = static_cast<Eigen::Index>(order[begin + static_cast<std::size_t>(i)]);
        batch.embeddings.row(i) = x_train.row(src);
        batch.targets.row(i) = y_train.row(src);
      }
      const AugmentedBatch aug = augment_batch(batch, cfg.augment, aug_rng);

      const ForwardTrace trace = forward(model, aug.embeddings, Mode::kTrain, rng);
      loss_sum += loss_from_logits(trace.logits, aug.targets);
      const Gradients grads = backward(model, trace, aug.targets);
      const double lr = lr_at(epoch + static_cast<double>(b) / static_cast<double>(ranges.size()), cfg);
      if (cfg.optimizer == OptimizerKind::kSgd) {
        sgd_step(model, grads, lr, cfg.weight_decay);
      } else {
        adam_step(model, grads, adam, lr, cfg.weight_decay);
      }
    }

    const int completed = epoch + 1;
    if (cfg.snapshot_every > 0 && completed % cfg.snapshot_every == 0) {
      PredictionSet preds{predict(model, x_val), val_ds.labels};
      HistoryRecord rec;
      rec.epoch = completed;
      rec.train_loss = loss_sum / static_cast<double>(ranges.size());
      const AccuracyTriplet acc = accuracy_triplet(apply_threshold(preds, cfg.reference_threshold), preds);
      rec.overall_acc = acc.overall_acc;
      rec.none_acc = acc.none_acc;
      rec.auroc = roc_auc_ovr(preds).weighted_average;
      rec.aupr = pr_auc_ovr(preds).weighted_average;
      result.history.records.push_back(rec);
    }
  }
  return result;
}

std::string history_csv(const TrainingHistory& h) {
  std::ostringstream os;
  os.precision(10);
  os << "epoch,loss,acc,none_acc,auroc,aupr\n";
  for (const auto& r : h.records) {
    os << r.epoch << ',' << r.train_loss << ',';
    if (r.overall_acc) os << *r.overall_acc;
    os << ',';
    if (r.none_acc) os << *r.none_acc;
    os << ',' << r.auroc << ',' << r.aupr << '\n';
  }
  return os.str();
}

}  // namespace embaug
