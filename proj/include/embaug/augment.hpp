#pragma once

#include <span>
#include <string>
#include <vector>

#include "embaug/common.hpp"

namespace embaug {

enum class AugmentMethod { kNone, kEMixup, kEStitchup };

std::string to_string(AugmentMethod method);
AugmentMethod parse_augment_method(const std::string& name);

struct AugmentConfig {
  AugmentMethod method = AugmentMethod::kNone;
  double alpha = 0.4;           // Beta(alpha, alpha) parameter
  double label_softness = 0.0;  // 0 disables softening
  std::uint64_t seed = 0;

  void validate() const;
};

struct MixedPair {
  std::vector<double> embedding;
  std::vector<double> target;
  double lambda = 1.0;
};

// Rows are examples.
struct Batch {
  Matrix embeddings;
  Matrix targets;
};

struct AugmentedBatch {
  Matrix embeddings;
  Matrix targets;
  std::vector<double> lambdas;  // one per row, as sampled
};

// Gamma(shape, 1) draw returned as its natural log, so that tiny shapes do not
// underflow to zero.
double sample_log_gamma(double shape, Rng& rng);

// Beta(alpha, alpha) via the ratio of two Gamma(alpha, 1) draws.
double sample_lambda(double alpha, Rng& rng);

MixedPair e_mixup(std::span<const double> e1, std::span<const double> y1,
                  std::span<const double> e2, std::span<const double> y2, double lambda);

MixedPair e_stitchup(std::span<const double> e1, std::span<const double> y1,
                     std::span<const double> e2, std::span<const double> y2, double lambda,
                     Rng& rng);

// Subtracts `softness` from every nonzero entry (clamped at zero) and spreads a
// total mass of one evenly over the entries that were exactly zero.
std::vector<double> soften(std::span<const double> y, double softness);

// Pairs each row with a partner from a random permutation of the batch, with a
// fresh lambda per pair, then softens the mixed targets if configured.
AugmentedBatch augment_batch(const Batch& batch, const AugmentConfig& cfg, Rng& rng);

}  // namespace embaug
