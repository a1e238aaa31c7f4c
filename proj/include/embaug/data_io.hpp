#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "embaug/common.hpp"

namespace embaug {

/// Embedding vectors with integer class labels and a class vocabulary.
///
/// Rows of `embeddings` are examples. Labels lie in [0, C) or equal kNone.
struct EmbeddingDataset {
  FloatMatrix embeddings;
  std::vector<ClassId> labels;
  std::vector<std::string> class_names;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(embeddings.cols()); }
  std::size_t num_classes() const { return class_names.size(); }

  // Throws DataError when any invariant is violated.
  void validate() const;

  bool operator==(const EmbeddingDataset& other) const;
};

struct SplitSpec {
  double train_fraction = 0.1;
  std::vector<ClassId> excluded_classes;
  std::uint64_t seed = 0;
};

struct SplitResult {
  EmbeddingDataset train;
  EmbeddingDataset val;
  // Label of each validation row before excluded classes were rewritten to
  // kNone.
  std::vector<ClassId> val_original_labels;
};

struct SyntheticSpec {
  int n_classes = 20;
  int n_per_class = 100;
  int d = 64;
  double prototype_scale = 1.0;
  double noise_scale = 0.3;
  std::uint64_t seed = 0;
};

// Distinct failure kinds reported by read_dataset.
enum class FormatErrorKind { kBadMagic, kUnsupportedVersion, kTruncated, kNonFinite, kInvalid, kIo };

class FormatError : public DataError {
 public:
  FormatError(FormatErrorKind kind, const std::string& what) : DataError(what), kind_(kind) {}
  FormatErrorKind kind() const { return kind_; }

 private:
  FormatErrorKind kind_;
};

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

void write_dataset(const EmbeddingDataset& ds, const std::filesystem::path& path);
EmbeddingDataset read_dataset(const std::filesystem::path& path);

// Serialized form of a dataset; write_dataset writes exactly these bytes.
std::string encode_dataset(const EmbeddingDataset& ds);
EmbeddingDataset decode_dataset(const std::string& bytes);

// JSON manifest stored next to a dataset file as `<path>.json`.
nlohmann::json dataset_manifest(const EmbeddingDataset& ds, const std::string& source,
                                std::uint64_t seed);

SplitResult split(const EmbeddingDataset& ds, const SplitSpec& spec);

EmbeddingDataset generate_synthetic(const SyntheticSpec& spec);

// Rows of `ds` as a double matrix.
Matrix to_matrix(const EmbeddingDataset& ds);

}  // namespace embaug
