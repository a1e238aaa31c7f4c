#include "embaug/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace embaug {

std::string to_string(AugmentMethod method) {
  switch (method) {
    case AugmentMethod::kNone: return "none";
    case AugmentMethod::kEMixup: return "e_mixup";
    case AugmentMethod::kEStitchup: return "e_stitchup";
  }
  return "unknown";
}

AugmentMethod parse_augment_method(const std::string& name) {
  if (name == "none") return AugmentMethod::kNone;
  if (name == "e_mixup") return AugmentMethod::kEMixup;
  if (name == "e_stitchup") return AugmentMethod::kEStitchup;
  throw ConfigError("unknown augmentation method '" + name + "'");
}

void AugmentConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive");
  if (!(label_softness >= 0.0 && label_softness < 1.0)) {
    throw ConfigError("label_softness must lie in [0, 1)");
  }
}

double sample_log_gamma(double shape, Rng& rng) {
  // Marsaglia-Tsang for shape >= 1; shapes below one are boosted with
  // Gamma(a) = Gamma(a + 1) * U^(1/a).
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double boost = 0.0;
  if (shape < 1.0) {
    double u = unif(rng);
    while (u <= 0.0) u = unif(rng);
    boost = std::log(u) / shape;
    shape += 1.0;
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = gauss(rng);
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = unif(rng);
    if (u <= 0.0) continue;
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
      return std::log(d * v) + boost;
    }
  }
}

double sample_lambda(double alpha, Rng& rng) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive");
  const double lg1 = sample_log_gamma(alpha, rng);
  const double lg2 = sample_log_gamma(alpha, rng);
  // g1 / (g1 + g2) = 1 / (1 + exp(lg2 - lg1))
  return 1.0 / (1.0 + std::exp(lg2 - lg1));
}

namespace {

void check_lengths(std::span<const double> e1, std::span<const double> y1,
                   std::span<const double> e2, std::span<const double> y2) {
  if (e1.size() != e2.size()) throw DataError("embedding length mismatch");
  if (y1.size() != y2.size()) throw DataError("target length mismatch");
}

// Convex combination, clamped to the hull of its endpoints (rounding can leave
// it by one ulp). lambda == 1 returns a exactly.
double mix(double a, double b, double lambda) {
  const double v = lambda * a + (1.0 - lambda) * b;
  return std::clamp(v, std::min(a, b), std::max(a, b));
}

std::vector<double> mix_targets(std::span<const double> y1, std::span<const double> y2,
                                double lambda) {
  std::vector<double> out(y1.size());
  for (std::size_t c = 0; c < y1.size(); ++c) out[c] = mix(y1[c], y2[c], lambda);
  return out;
}

}  // namespace

MixedPair e_mixup(std::span<const double> e1, std::span<const double> y1,
                  std::span<const double> e2, std::span<const double> y2, double lambda) {
  check_lengths(e1, y1, e2, y2);
  MixedPair out;
  out.lambda = lambda;
  out.embedding.resize(e1.size());
  for (std::size_t i = 0; i < e1.size(); ++i) out.embedding[i] = mix(e1[i], e2[i], lambda);
  out.target = mix_targets(y1, y2, lambda);
  return out;
}

MixedPair e_stitchup(std::span<const double> e1, std::span<const double> y1,
                     std::span<const double> e2, std::span<const double> y2, double lambda,
                     Rng& rng) {
  check_lengths(e1, y1, e2, y2);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  MixedPair out;
  out.lambda = lambda;
  out.embedding.resize(e1.size());
  for (std::size_t i = 0; i < e1.size(); ++i) {
    out.embedding[i] = unif(rng) < lambda ? e1[i] : e2[i];
  }
  out.target = mix_targets(y1, y2, lambda);
  return out;
}

std::vector<double> soften(std::span<const double> y, double softness) {
  if (!(softness >= 0.0 && softness < 1.0)) throw ConfigError("softness must lie in [0, 1)");
  const auto zeros = std::count(y.begin(), y.end(), 0.0);
  const double share = zeros > 0 ? 1.0 / static_cast<double>(zeros) : 0.0;
  std::vector<double> out(y.size());
  for (std::size_t c = 0; c < y.size(); ++c) {
    out[c] = y[c] == 0.0 ? share : std::max(y[c] - softness, 0.0);
  }
  return out;
}

AugmentedBatch augment_batch(const Batch& batch, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  const Eigen::Index n = batch.embeddings.rows();
  if (n == 0) throw DataError("cannot augment an empty batch");
  if (batch.targets.rows() != n) throw DataError("batch embeddings and targets disagree in size");
  if (cfg.method != AugmentMethod::kNone && n < 2) {
    throw DataError("mixing augmentation needs at least two examples per batch");
  }

  AugmentedBatch out{batch.embeddings, batch.targets,
                     std::vector<double>(static_cast<std::size_t>(n), 1.0)};

  if (cfg.method != AugmentMethod::kNone) {
    std::vector<Eigen::Index> partner(static_cast<std::size_t>(n));
    std::iota(partner.begin(), partner.end(), Eigen::Index{0});
    std::shuffle(partner.begin(), partner.end(), rng);

    const auto d = static_cast<std::size_t>(batch.embeddings.cols());
    const auto c = static_cast<std::size_t>(batch.targets.cols());
    // Row-major copies so rows are contiguous spans.
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> e =
        batch.embeddings;
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> y =
        batch.targets;
    auto row = [](const auto& m, Eigen::Index i, std::size_t width) {
      return std::span<const double>(m.data() + i * m.cols(), width);
    };

    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index j = partner[static_cast<std::size_t>(i)];
      const double lambda = sample_lambda(cfg.alpha, rng);
      MixedPair pair = cfg.method == AugmentMethod::kEMixup
                           ? e_mixup(row(e, i, d), row(y, i, c), row(e, j, d), row(y, j, c), lambda)
                           : e_stitchup(row(e, i, d), row(y, i, c), row(e, j, d), row(y, j, c),
                                        lambda, rng);
      out.embeddings.row(i) = Eigen::Map<const RowVector>(pair.embedding.data(),
                                                          static_cast<Eigen::Index>(d));
      out.targets.row(i) = Eigen::Map<const RowVector>(pair.target.data(),
                                                       static_cast<Eigen::Index>(c));
      out.lambdas[static_cast<std::size_t>(i)] = lambda;
    }
  }

  if (cfg.label_softness > 0.0) {
    std::vector<double> y(static_cast<std::size_t>(out.targets.cols()));
    for (Eigen::Index i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < y.size(); ++k) y[k] = out.targets(i, static_cast<Eigen::Index>(k));
      const auto soft = soften(y, cfg.label_softness);
      for (std::size_t k = 0; k < y.size(); ++k) out.targets(i, static_cast<Eigen::Index>(k)) = soft[k];
    }
  }
  return out;
}

}  // namespace embaug
