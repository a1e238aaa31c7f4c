#pragma once

#include <filesystem>
#include <vector>

#include "embaug/common.hpp"

namespace embaug {

inline constexpr int kDefaultHiddenWidth = 250;
inline constexpr double kDefaultDropout = 0.3;

// Fully connected classifier: two ReLU hidden layers with dropout and an
// elementwise sigmoid output.
struct MlpModel {
  Matrix w1;  // d x H
  RowVector b1;
  Matrix w2;  // H x H
  RowVector b2;
  Matrix w3;  // H x C
  RowVector b3;
  double dropout_p = kDefaultDropout;

  Eigen::Index input_dim() const { return w1.rows(); }
  Eigen::Index hidden_width() const { return w1.cols(); }
  Eigen::Index num_classes() const { return w3.cols(); }

  // Parameters in declaration order, matrices row-major.
  std::vector<double> flatten() const;
  void assign(const std::vector<double>& flat);
  std::size_t parameter_count() const;

  bool operator==(const MlpModel& other) const;
};

// Gradients share the parameter layout.
using Gradients = MlpModel;

enum class Mode { kTrain, kEval };

struct DropoutMasks {
  Matrix m1;  // n x H, entries 0 or 1/(1-p)
  Matrix m2;
};

struct ForwardTrace {
  Matrix input;
  Matrix z1, h1;  // pre-activation and masked post-activation of layer 1
  Matrix z2, h2;
  Matrix logits;
  Matrix probs;
  DropoutMasks masks;
};

MlpModel init(Eigen::Index d, Eigen::Index num_classes, std::uint64_t seed,
              Eigen::Index hidden = kDefaultHiddenWidth, double dropout_p = kDefaultDropout);

MlpModel zeros_like(const MlpModel& m);

DropoutMasks sample_masks(const MlpModel& m, Eigen::Index n, Mode mode, Rng& rng);

ForwardTrace forward(const MlpModel& m, const Matrix& batch, Mode mode, Rng& rng);

// Forward pass with caller-supplied dropout masks.
ForwardTrace forward_with_masks(const MlpModel& m, const Matrix& batch, DropoutMasks masks);

// Eval-mode probabilities, computed in chunks.
Matrix predict(const MlpModel& m, const Matrix& inputs, Eigen::Index chunk = 1024);

// Mean binary cross-entropy over all n*C entries, evaluated from logits.
double loss_from_logits(const Matrix& logits, const Matrix& targets);

// Same quantity from probabilities; probabilities are clamped away from 0 and 1.
double loss(const Matrix& probs, const Matrix& targets);

Gradients backward(const MlpModel& m, const ForwardTrace& trace, const Matrix& targets);

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const MlpModel& m, const std::filesystem::path& path);
MlpModel read_checkpoint(const std::filesystem::path& path, double dropout_p = kDefaultDropout);

}  // namespace embaug
