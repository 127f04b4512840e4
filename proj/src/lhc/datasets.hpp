#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lhc/checkpoint.hpp"
#include "lhc/tensor.hpp"
#include "lhc/tree.hpp"

namespace lhc {

enum class Split { kTrain, kTest };

struct LabeledDataset {
  std::size_t num_rows = 0;
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;  // num_rows x dim, row-major
  std::vector<std::uint16_t> labels;
  Split split = Split::kTrain;

  // Throws std::invalid_argument on empty data, bad sizes, out-of-range
  // labels or non-finite features (the message names the row).
  void validate() const;
  const double* row(std::size_t i) const { return features.data() + i * dim; }
  // Rows [begin, end).
  LabeledDataset slice(std::size_t begin, std::size_t end) const;
  Tensor rows_tensor(std::span<const std::size_t> indices) const;
};

struct MnistData {
  LabeledDataset train;
  LabeledDataset test;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// Parses one IDX image/label file pair; pixels are scaled by 1/255.
LabeledDataset parse_idx(const std::string& image_bytes, const std::string& label_bytes,
                         const std::string& image_name, const std::string& label_name,
                         Split split);
// Reads the four standard MNIST files from `dir`.
MnistData load_mnist(const std::filesystem::path& dir);

// LHF1: "LHF1", u32 N, u32 D, u32 C (little endian), N*D f64 features, N u16 labels.
inline constexpr char kFeatureMagic[4] = {'L', 'H', 'F', '1'};
std::string encode_features(const LabeledDataset& ds);
LabeledDataset decode_features(const std::string& bytes, Split split = Split::kTrain);
LabeledDataset load_features(const std::filesystem::path& path, Split split = Split::kTrain);
void save_features(const std::filesystem::path& path, const LabeledDataset& ds);

struct PlantedHierarchySpec {
  std::size_t depth = 3;
  std::size_t dim = 16;
  std::size_t samples_per_class = 200;
  std::size_t test_samples_per_class = 100;
  double sigma_level = 1.0;
  double sigma_within = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
  std::size_t num_classes() const { return std::size_t{1} << depth; }
};

struct PlantedData {
  LabeledDataset train;
  LabeledDataset test;
  // Class c sits at the leaf spelled by the depth-bit binary expansion of c.
  PrefixTree tree;
  std::vector<std::vector<double>> class_means;
};

// Class means come from a Gaussian random walk down a complete binary tree
// (child = parent + N(0, sigma_level^2 I), root at the origin); samples add
// N(0, sigma_within^2 I). Rows are shuffled.
PlantedData generate_planted(const PlantedHierarchySpec& spec);

Tensor one_hot(std::span<const std::uint16_t> labels, std::size_t num_classes);

struct Batch {
  Tensor features;  // B x D
  Tensor one_hot;   // B x C
  std::vector<std::uint16_t> labels;
};

// Shuffled mini-batches; the permutation for epoch e is a function of
// (seed, e) only. The final partial batch is emitted.
class BatchIterator {
 public:
  BatchIterator(const LabeledDataset& data, std::size_t batch_size, std::uint64_t seed);

  void start_epoch(std::size_t epoch);
  bool next(Batch& out);
  const std::vector<std::size_t>& permutation() const { return order_; }

 private:
  const LabeledDataset& data_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace lhc
