#include "embaug/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

namespace embaug {

static_assert(std::endian::native == std::endian::little,
              "the EMBD codec assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', 'D'};

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    T value;
    need(sizeof(T), what);
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(std::size_t len, const char* what) {
    need(len, what);
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }

  void need(std::size_t len, const char* what) const {
    if (bytes_.size() - pos_ < len) {
      throw FormatError(FormatErrorKind::kTruncated,
                        std::string("truncated dataset: missing ") + what);
    }
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void EmbeddingDataset::validate() const {
  const auto n = size();
  const auto c = num_classes();
  if (n < 1) throw DataError("dataset has no examples");
  if (embeddings.cols() < 1) throw DataError("dataset has zero embedding dimensions");
  if (static_cast<std::size_t>(embeddings.rows()) != n) {
    throw DataError("embedding row count does not match label count");
  }
  if (c < 2) throw DataError("dataset needs at least two classes");
  for (ClassId label : labels) {
    if (label != kNone && (label < 0 || static_cast<std::size_t>(label) >= c)) {
      throw DataError("label " + std::to_string(label) + " outside class range");
    }
  }
  if (!embeddings.allFinite()) throw DataError("dataset contains non-finite embedding values");
}

bool EmbeddingDataset::operator==(const EmbeddingDataset& other) const {
  if (labels != other.labels || class_names != other.class_names) return false;
  if (embeddings.rows() != other.embeddings.rows() ||
      embeddings.cols() != other.embeddings.cols()) {
    return false;
  }
  // Bitwise, so that round-trips are checked exactly.
  return std::memcmp(embeddings.data(), other.embeddings.data(),
                     sizeof(float) * static_cast<std::size_t>(embeddings.size())) == 0;
}

std::string encode_dataset(const EmbeddingDataset& ds) {
  ds.validate();
  std::string out;
  out.append(kMagic, 4);
  put<std::uint32_t>(out, kDatasetFormatVersion);
  put<std::uint64_t>(out, ds.size());
  put<std::uint64_t>(out, ds.dim());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.num_classes()));
  out.append(reinterpret_cast<const char*>(ds.embeddings.data()),
             sizeof(float) * static_cast<std::size_t>(ds.embeddings.size()));
  for (ClassId label : ds.labels) put<std::int32_t>(out, label);
  for (const auto& name : ds.class_names) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
  }
  return out;
}

EmbeddingDataset decode_dataset(const std::string& bytes) {
  Reader in(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(FormatErrorKind::kBadMagic, "not an EMBD file (bad magic)");
  }
  in.get_string(4, "magic");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kDatasetFormatVersion) {
    throw FormatError(FormatErrorKind::kUnsupportedVersion,
                      "unsupported EMBD version " + std::to_string(version));
  }
  const auto n = in.get<std::uint64_t>("example count");
  const auto d = in.get<std::uint64_t>("dimension");
  const auto c = in.get<std::uint32_t>("class count");
  if (n == 0 || d == 0 || c < 2) {
    throw FormatError(FormatErrorKind::kInvalid, "EMBD header has invalid sizes");
  }
  // Guard the allocation before trusting n*d.
  if (n > in.remaining() / sizeof(float) / d) {
    throw FormatError(FormatErrorKind::kTruncated, "truncated dataset: missing embedding matrix");
  }

  EmbeddingDataset ds;
  ds.embeddings.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const std::size_t matrix_bytes = sizeof(float) * n * d;
  in.need(matrix_bytes, "embedding matrix");
  std::memcpy(ds.embeddings.data(), in.get_string(matrix_bytes, "embedding matrix").data(),
              matrix_bytes);
  if (!ds.embeddings.allFinite()) {
    throw FormatError(FormatErrorKind::kNonFinite, "dataset contains non-finite floats");
  }

  ds.labels.resize(n);
  for (auto& label : ds.labels) label = in.get<std::int32_t>("labels");
  ds.class_names.reserve(c);
  for (std::uint32_t i = 0; i < c; ++i) {
    const auto len = in.get<std::uint32_t>("class name length");
    ds.class_names.push_back(in.get_string(len, "class name"));
  }
  try {
    ds.validate();
  } catch (const DataError& e) {
    throw FormatError(FormatErrorKind::kInvalid, e.what());
  }
  return ds;
}

void write_dataset(const EmbeddingDataset& ds, const std::filesystem::path& path) {
  const std::string bytes = encode_dataset(ds);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrorKind::kIo, "failed writing " + path.string());
}

EmbeddingDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::kIo, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_dataset(bytes);
}

nlohmann::json dataset_manifest(const EmbeddingDataset& ds, const std::string& source,
                                std::uint64_t seed) {
  return {{"format", "EMBD"},
          {"version", kDatasetFormatVersion},
          {"source", source},
          {"seed", seed},
          {"n", ds.size()},
          {"d", ds.dim()},
          {"C", ds.num_classes()},
          {"class_names", ds.class_names}};
}

namespace {

EmbeddingDataset take_rows(const EmbeddingDataset& ds, const std::vector<std::size_t>& rows) {
  EmbeddingDataset out;
  out.class_names = ds.class_names;
  out.embeddings.resize(static_cast<Eigen::Index>(rows.size()), ds.embeddings.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.embeddings.row(static_cast<Eigen::Index>(i)) =
        ds.embeddings.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(ds.labels[rows[i]]);
  }
  return out;
}

}  // namespace

SplitResult split(const EmbeddingDataset& ds, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  std::vector<bool> excluded(ds.num_classes(), false);
  for (ClassId c : spec.excluded_classes) {
    if (c < 0 || static_cast<std::size_t>(c) >= ds.num_classes()) {
      throw ConfigError("excluded class " + std::to_string(c) + " outside class range");
    }
    excluded[static_cast<std::size_t>(c)] = true;
  }

  std::vector<std::size_t> pool;
  std::vector<std::size_t> held_out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const ClassId label = ds.labels[i];
    if (label == kNone || excluded[static_cast<std::size_t>(label)]) {
      held_out.push_back(i);
    } else {
      pool.push_back(i);
    }
  }

  Rng rng(spec.seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  const auto n_train = static_cast<std::size_t>(
      std::llround(spec.train_fraction * static_cast<double>(pool.size())));
  if (n_train == 0) throw ConfigError("split leaves the training set empty");

  std::vector<std::size_t> train_rows(pool.begin(), pool.begin() + static_cast<long>(n_train));
  std::vector<std::size_t> val_rows(pool.begin() + static_cast<long>(n_train), pool.end());
  val_rows.insert(val_rows.end(), held_out.begin(), held_out.end());

  SplitResult result;
  result.train = take_rows(ds, train_rows);
  result.val = take_rows(ds, val_rows);
  result.val_original_labels = result.val.labels;
  for (auto& label : result.val.labels) {
    if (label != kNone && excluded[static_cast<std::size_t>(label)]) label = kNone;
  }
  return result;
}

EmbeddingDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_classes < 2) throw ConfigError("synthetic data needs at least two classes");
  if (spec.n_per_class < 1) throw ConfigError("n_per_class must be positive");
  if (spec.d < 1) throw ConfigError("dimension must be positive");
  if (!(spec.noise_scale > 0.0)) throw ConfigError("noise_scale must be positive");
  if (!(spec.prototype_scale >= 0.0)) throw ConfigError("prototype_scale must be non-negative");

  Rng rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Matrix prototypes(spec.n_classes, spec.d);
  for (Eigen::Index c = 0; c < prototypes.rows(); ++c) {
    for (Eigen::Index j = 0; j < prototypes.cols(); ++j) {
      prototypes(c, j) = spec.prototype_scale * gauss(rng);
    }
  }

  EmbeddingDataset ds;
  const auto n = static_cast<Eigen::Index>(spec.n_classes) * spec.n_per_class;
  ds.embeddings.resize(n, spec.d);
  ds.labels.reserve(static_cast<std::size_t>(n));
  Eigen::Index row = 0;
  for (int c = 0; c < spec.n_classes; ++c) {
    ds.class_names.push_back("class_" + std::to_string(c));
    for (int k = 0; k < spec.n_per_class; ++k, ++row) {
      for (Eigen::Index j = 0; j < spec.d; ++j) {
        ds.embeddings(row, j) =
            static_cast<float>(prototypes(c, j) + spec.noise_scale * gauss(rng));
      }
      ds.labels.push_back(c);
    }
  }
  return ds;
}

Matrix to_matrix(const EmbeddingDataset& ds) { return ds.embeddings.cast<double>(); }

}  // namespace embaug
