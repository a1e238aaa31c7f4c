#include "embaug/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "embaug/data_io.hpp"

namespace embaug {

namespace {

template <typename Fn>
void for_each_tensor(MlpModel& m, Fn&& fn) {
  fn(m.w1); fn(m.b1); fn(m.w2); fn(m.b2); fn(m.w3); fn(m.b3);
}

template <typename Fn>
void for_each_tensor(const MlpModel& m, Fn&& fn) {
  fn(m.w1); fn(m.b1); fn(m.w2); fn(m.b2); fn(m.w3); fn(m.b3);
}

Matrix relu(const Matrix& z) { return z.cwiseMax(0.0); }

Matrix sigmoid(const Matrix& z) {
  return z.unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

}  // namespace

std::vector<double> MlpModel::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for_each_tensor(*this, [&](const auto& t) {
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) out.push_back(t(r, c));
  });
  return out;
}

void MlpModel::assign(const std::vector<double>& flat) {
  if (flat.size() != parameter_count()) throw DataError("parameter vector has wrong length");
  std::size_t k = 0;
  for_each_tensor(*this, [&](auto& t) {
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = flat[k++];
  });
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor(*this, [&](const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

bool MlpModel::operator==(const MlpModel& other) const {
  if (parameter_count() != other.parameter_count() || input_dim() != other.input_dim() ||
      num_classes() != other.num_classes() || dropout_p != other.dropout_p) {
    return false;
  }
  const auto a = flatten();
  const auto b = other.flatten();
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

MlpModel init(Eigen::Index d, Eigen::Index num_classes, std::uint64_t seed, Eigen::Index hidden,
              double dropout_p) {
  if (d < 1) throw ConfigError("input dimension must be positive");
  if (num_classes < 2) throw ConfigError("need at least two classes");
  if (hidden < 1) throw ConfigError("hidden width must be positive");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout must lie in [0, 1)");

  Rng rng(seed);
  auto glorot = [&](Eigen::Index fan_in, Eigen::Index fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(fan_in, fan_out);
    for (Eigen::Index r = 0; r < fan_in; ++r)
      for (Eigen::Index c = 0; c < fan_out; ++c) w(r, c) = dist(rng);
    return w;
  };

  MlpModel m;
  m.w1 = glorot(d, hidden);
  m.b1 = RowVector::Zero(hidden);
  m.w2 = glorot(hidden, hidden);
  m.b2 = RowVector::Zero(hidden);
  m.w3 = glorot(hidden, num_classes);
  m.b3 = RowVector::Zero(num_classes);
  m.dropout_p = dropout_p;
  return m;
}

MlpModel zeros_like(const MlpModel& m) {
  MlpModel z;
  z.w1 = Matrix::Zero(m.w1.rows(), m.w1.cols());
  z.b1 = RowVector::Zero(m.b1.size());
  z.w2 = Matrix::Zero(m.w2.rows(), m.w2.cols());
  z.b2 = RowVector::Zero(m.b2.size());
  z.w3 = Matrix::Zero(m.w3.rows(), m.w3.cols());
  z.b3 = RowVector::Zero(m.b3.size());
  z.dropout_p = m.dropout_p;
  return z;
}

DropoutMasks sample_masks(const MlpModel& m, Eigen::Index n, Mode mode, Rng& rng) {
  const Eigen::Index h = m.hidden_width();
  if (mode == Mode::kEval || m.dropout_p == 0.0) {
    return {Matrix::Ones(n, h), Matrix::Ones(n, h)};
  }
  const double keep = 1.0 - m.dropout_p;
  const double scale = 1.0 / keep;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto draw = [&] {
    Matrix mask(n, h);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < h; ++j) mask(i, j) = unif(rng) < keep ? scale : 0.0;
    return mask;
  };
  DropoutMasks masks;
  masks.m1 = draw();
  masks.m2 = draw();
  return masks;
}

ForwardTrace forward_with_masks(const MlpModel& m, const Matrix& batch, DropoutMasks masks) {
  if (batch.cols() != m.input_dim()) {
    throw DataError("batch width " + std::to_string(batch.cols()) + " does not match model input " +
                    std::to_string(m.input_dim()));
  }
  if (!batch.allFinite()) throw DataError("batch contains non-finite values");
  const Eigen::Index n = batch.rows();
  if (masks.m1.rows() != n || masks.m1.cols() != m.hidden_width() || masks.m2.rows() != n ||
      masks.m2.cols() != m.hidden_width()) {
    throw DataError("dropout mask shape does not match batch");
  }

  ForwardTrace t;
  t.input = batch;
  t.z1 = (batch * m.w1).rowwise() + m.b1;
  t.h1 = relu(t.z1).cwiseProduct(masks.m1);
  t.z2 = (t.h1 * m.w2).rowwise() + m.b2;
  t.h2 = relu(t.z2).cwiseProduct(masks.m2);
  t.logits = (t.h2 * m.w3).rowwise() + m.b3;
  t.probs = sigmoid(t.logits);
  t.masks = std::move(masks);
  return t;
}

ForwardTrace forward(const MlpModel& m, const Matrix& batch, Mode mode, Rng& rng) {
  return forward_with_masks(m, batch, sample_masks(m, batch.rows(), mode, rng));
}

Matrix predict(const MlpModel& m, const Matrix& inputs, Eigen::Index chunk) {
  Matrix probs(inputs.rows(), m.num_classes());
  Rng unused(0);
  for (Eigen::Index start = 0; start < inputs.rows(); start += chunk) {
    const Eigen::Index len = std::min(chunk, inputs.rows() - start);
    probs.middleRows(start, len) = forward(m, inputs.middleRows(start, len), Mode::kEval, unused).probs;
  }
  return probs;
}

double loss_from_logits(const Matrix& logits, const Matrix& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    throw DataError("loss: logits and targets differ in shape");
  }
  if (logits.size() == 0) throw DataError("loss: empty batch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      const double z = logits(i, c);
      const double t = targets(i, c);
      // -[t log s(z) + (1-t) log(1 - s(z))] = max(z,0) - z t + log(1 + e^-|z|)
      total += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
  }
  return total / static_cast<double>(logits.size());
}

double loss(const Matrix& probs, const Matrix& targets) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols()) {
    throw DataError("loss: probabilities and targets differ in shape");
  }
  if (probs.size() == 0) throw DataError("loss: empty batch");
  constexpr double kEps = 1e-15;
  double total = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
      const double p = std::clamp(probs(i, c), kEps, 1.0 - kEps);
      const double t = targets(i, c);
      total -= t * std::log(p) + (1.0 - t) * std::log1p(-p);
    }
  }
  return total / static_cast<double>(probs.size());
}

Gradients backward(const MlpModel& m, const ForwardTrace& trace, const Matrix& targets) {
  const Eigen::Index n = trace.input.rows();
  if (trace.input.cols() != m.input_dim() || trace.logits.cols() != m.num_classes() ||
      trace.h1.cols() != m.hidden_width()) {
    throw DataError("forward trace does not match model");
  }
  if (targets.rows() != n || targets.cols() != m.num_classes()) {
    throw DataError("targets do not match forward trace");
  }

  Gradients g;
  g.dropout_p = m.dropout_p;
  // dL/dz3 for mean BCE over n*C sigmoid outputs.
  const Matrix d3 = (trace.probs - targets) / static_cast<double>(trace.probs.size());
  g.w3 = trace.h2.transpose() * d3;
  g.b3 = d3.colwise().sum();

  const Matrix relu2 = (trace.z2.array() > 0.0).cast<double>().matrix();
  const Matrix d2 = (d3 * m.w3.transpose()).cwiseProduct(trace.masks.m2).cwiseProduct(relu2);
  g.w2 = trace.h1.transpose() * d2;
  g.b2 = d2.colwise().sum();

  const Matrix relu1 = (trace.z1.array() > 0.0).cast<double>().matrix();
  const Matrix d1 = (d2 * m.w2.transpose()).cwiseProduct(trace.masks.m1).cwiseProduct(relu1);
  g.w1 = trace.input.transpose() * d1;
  g.b1 = d1.colwise().sum();
  return g;
}

namespace {
constexpr char kCheckpointMagic[4] = {'E', 'M', 'B', 'M'};

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}
}  // namespace

// Layout: magic, u32 version, u64 d, u32 C, u32 hidden width, then parameters
// as little-endian f64 in declaration order.
void write_checkpoint(const MlpModel& m, const std::filesystem::path& path) {
  std::string out;
  out.append(kCheckpointMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(m.input_dim()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.num_classes()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.hidden_width()));
  for (double v : m.flatten()) put<double>(out, v);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(FormatErrorKind::kIo, "cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw FormatError(FormatErrorKind::kIo, "failed writing " + path.string());
}

MlpModel read_checkpoint(const std::filesystem::path& path, double dropout_p) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(FormatErrorKind::kIo, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  constexpr std::size_t kHeader = 4 + 4 + 8 + 4 + 4;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError(FormatErrorKind::kBadMagic, "not an EMBM checkpoint (bad magic)");
  }
  if (bytes.size() < kHeader) throw FormatError(FormatErrorKind::kTruncated, "truncated checkpoint header");
  std::uint32_t version = 0, classes = 0, hidden = 0;
  std::uint64_t d = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&d, bytes.data() + 8, 8);
  std::memcpy(&classes, bytes.data() + 16, 4);
  std::memcpy(&hidden, bytes.data() + 20, 4);
  if (version != kCheckpointVersion) {
    throw FormatError(FormatErrorKind::kUnsupportedVersion,
                      "unsupported checkpoint version " + std::to_string(version));
  }
  if (d == 0 || classes < 2 || hidden == 0 || d > (1u << 24)) {
    throw FormatError(FormatErrorKind::kInvalid, "checkpoint header has invalid sizes");
  }
  MlpModel m = zeros_like(init(static_cast<Eigen::Index>(d), classes, 0, hidden, dropout_p));
  const std::size_t count = m.parameter_count();
  if (bytes.size() != kHeader + count * sizeof(double)) {
    throw FormatError(FormatErrorKind::kTruncated, "checkpoint payload has wrong length");
  }
  std::vector<double> flat(count);
  std::memcpy(flat.data(), bytes.data() + kHeader, count * sizeof(double));
  for (double v : flat) {
    if (!std::isfinite(v)) throw FormatError(FormatErrorKind::kNonFinite, "checkpoint has non-finite parameters");
  }
  m.assign(flat);
  return m;
}

}  // namespace embaug
