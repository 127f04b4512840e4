#include "lhc/datasets.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "lhc/io.hpp"

namespace lhc {

void LabeledDataset::validate() const {
  if (num_rows == 0 || dim == 0) throw std::invalid_argument("dataset is empty");
  if (features.size() != num_rows * dim || labels.size() != num_rows) {
    throw std::invalid_argument("dataset arrays do not match N=" + std::to_string(num_rows) +
                                ", D=" + std::to_string(dim));
  }
  for (std::size_t i = 0; i < num_rows; ++i) {
    if (labels[i] >= num_classes) {
      throw std::invalid_argument("row " + std::to_string(i) + ": label " +
                                  std::to_string(labels[i]) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
    }
    for (std::size_t j = 0; j < dim; ++j) {
      if (!std::isfinite(features[i * dim + j])) {
        throw std::invalid_argument("row " + std::to_string(i) + ": non-finite feature at column " +
                                    std::to_string(j));
      }
    }
  }
}

LabeledDataset LabeledDataset::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > num_rows) throw std::out_of_range("dataset slice out of range");
  LabeledDataset out;
  out.num_rows = end - begin;
  out.dim = dim;
  out.num_classes = num_classes;
  out.split = split;
  out.features.assign(features.begin() + static_cast<std::ptrdiff_t>(begin * dim),
                      features.begin() + static_cast<std::ptrdiff_t>(end * dim));
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    labels.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

Tensor LabeledDataset::rows_tensor(std::span<const std::size_t> indices) const {
  Tensor t = Tensor::zeros({indices.size(), dim});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    std::copy_n(row(indices[r]), dim, t.data.data() + r * dim);
  }
  return t;
}

LabeledDataset parse_idx(const std::string& images, const std::string& labels,
                         const std::string& image_name, const std::string& label_name,
                         Split split) {
  if (images.size() < 16) throw FormatError(image_name + ": truncated IDX header");
  if (labels.size() < 8) throw FormatError(label_name + ": truncated IDX header");
  if (read_be32(images.data()) != kIdxImageMagic) {
    throw FormatError(image_name + ": bad IDX image magic (expected 0x00000803)");
  }
  if (read_be32(labels.data()) != kIdxLabelMagic) {
    throw FormatError(label_name + ": bad IDX label magic (expected 0x00000801)");
  }
  const std::size_t n = read_be32(images.data() + 4);
  const std::size_t rows = read_be32(images.data() + 8);
  const std::size_t cols = read_be32(images.data() + 12);
  const std::size_t n_labels = read_be32(labels.data() + 4);
  if (n != n_labels) {
    throw FormatError(image_name + " holds " + std::to_string(n) + " images but " + label_name +
                      " holds " + std::to_string(n_labels) + " labels");
  }
  if (n == 0 || rows == 0 || cols == 0) throw FormatError(image_name + ": empty IDX extents");
  const std::size_t dim = rows * cols;
  if (images.size() < 16 + n * dim) throw FormatError(image_name + ": truncated pixel data");
  if (labels.size() < 8 + n) throw FormatError(label_name + ": truncated label data");

  LabeledDataset ds;
  ds.num_rows = n;
  ds.dim = dim;
  ds.num_classes = 10;
  ds.split = split;
  ds.features.resize(n * dim);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n * dim; ++i) {
    ds.features[i] = static_cast<unsigned char>(images[16 + i]) / 255.0;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = static_cast<unsigned char>(labels[8 + i]);
    if (v > 9) throw FormatError(label_name + ": label " + std::to_string(v) + " at row " + std::to_string(i));
    ds.labels[i] = v;
  }
  return ds;
}

MnistData load_mnist(const std::filesystem::path& dir) {
  auto load = [&dir](const char* img, const char* lbl, Split split) {
    const auto ip = dir / img;
    const auto lp = dir / lbl;
    return parse_idx(read_file(ip), read_file(lp), ip.string(), lp.string(), split);
  };
  MnistData out;
  out.train = load("train-images-idx3-ubyte", "train-labels-idx1-ubyte", Split::kTrain);
  out.test = load("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", Split::kTest);
  return out;
}

std::string encode_features(const LabeledDataset& ds) {
  ds.validate();
  std::string out(kFeatureMagic, 4);
  append_le(out, ds.num_rows, 4);
  append_le(out, ds.dim, 4);
  append_le(out, ds.num_classes, 4);
  for (double x : ds.features) append_le(out, std::bit_cast<std::uint64_t>(x), 8);
  for (auto l : ds.labels) append_le(out, l, 2);
  return out;
}

LabeledDataset decode_features(const std::string& bytes, Split split) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) {
    throw FormatError("feature file: missing LHF1 magic or header");
  }
  LabeledDataset ds;
  ds.num_rows = read_le<std::uint32_t>(bytes.data() + 4);
  ds.dim = read_le<std::uint32_t>(bytes.data() + 8);
  ds.num_classes = read_le<std::uint32_t>(bytes.data() + 12);
  ds.split = split;
  const std::size_t expected = 16 + ds.num_rows * ds.dim * 8 + ds.num_rows * 2;
  if (bytes.size() < expected) {
    throw FormatError("feature file: payload truncated (header promises " + std::to_string(expected) +
                      " bytes, file has " + std::to_string(bytes.size()) + ")");
  }
  if (bytes.size() > expected) {
    throw FormatError("feature file: " + std::to_string(bytes.size() - expected) +
                      " trailing bytes after payload");
  }
  ds.features.resize(ds.num_rows * ds.dim);
  const char* p = bytes.data() + 16;
  for (std::size_t i = 0; i < ds.features.size(); ++i) {
    ds.features[i] = std::bit_cast<double>(read_le<std::uint64_t>(p + 8 * i));
  }
  p += ds.features.size() * 8;
  ds.labels.resize(ds.num_rows);
  for (std::size_t i = 0; i < ds.num_rows; ++i) ds.labels[i] = read_le<std::uint16_t>(p + 2 * i);
  try {
    ds.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("feature file: ") + e.what());
  }
  return ds;
}

LabeledDataset load_features(const std::filesystem::path& path, Split split) {
  try {
    return decode_features(read_file(path), split);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_features(const std::filesystem::path& path, const LabeledDataset& ds) {
  write_file(path, encode_features(ds));
}

void PlantedHierarchySpec::validate() const {
  if (depth < 1 || depth > 15) throw std::invalid_argument("planted depth must lie in [1, 15]");
  if (dim == 0) throw std::invalid_argument("planted feature dim must be positive");
  if (samples_per_class == 0 || test_samples_per_class == 0) {
    throw std::invalid_argument("planted sample counts must be positive");
  }
  if (!(sigma_level > 0.0) || !(sigma_within > 0.0)) {
    throw std::invalid_argument("planted sigmas must be positive");
  }
}

PlantedData generate_planted(const PlantedHierarchySpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t classes = spec.num_classes();

  // Heap-ordered complete tree: node k has children 2k+1, 2k+2; leaves are
  // nodes classes-1 .. 2*classes-2 in left-to-right order.
  std::vector<std::vector<double>> mean(2 * classes - 1, std::vector<double>(spec.dim, 0.0));
  for (std::size_t k = 1; k < mean.size(); ++k) {
    const auto& parent = mean[(k - 1) / 2];
    for (std::size_t j = 0; j < spec.dim; ++j) mean[k][j] = parent[j] + spec.sigma_level * gauss(rng);
  }
  PlantedData out;
  for (std::size_t c = 0; c < classes; ++c) out.class_means.push_back(mean[classes - 1 + c]);

  auto sample = [&](std::size_t per_class, Split split) {
    LabeledDataset ds;
    ds.num_rows = per_class * classes;
    ds.dim = spec.dim;
    ds.num_classes = classes;
    ds.split = split;
    ds.features.resize(ds.num_rows * ds.dim);
    ds.labels.resize(ds.num_rows);
    std::size_t r = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      for (std::size_t s = 0; s < per_class; ++s, ++r) {
        ds.labels[r] = static_cast<std::uint16_t>(c);
        for (std::size_t j = 0; j < spec.dim; ++j) {
          ds.features[r * spec.dim + j] = out.class_means[c][j] + spec.sigma_within * gauss(rng);
        }
      }
    }
    std::vector<std::size_t> order(ds.num_rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    LabeledDataset shuffled = ds;
    for (std::size_t i = 0; i < order.size(); ++i) {
      shuffled.labels[i] = ds.labels[order[i]];
      std::copy_n(ds.row(order[i]), ds.dim, shuffled.features.data() + i * ds.dim);
    }
    return shuffled;
  };
  out.train = sample(spec.samples_per_class, Split::kTrain);
  out.test = sample(spec.test_samples_per_class, Split::kTest);

  std::vector<BitString> strings;
  for (std::size_t c = 0; c < classes; ++c) strings.push_back(BitString::from_index(c, spec.depth));
  out.tree = PrefixTree::build(StringLookupTable(std::move(strings)));
  return out;
}

Tensor one_hot(std::span<const std::uint16_t> labels, std::size_t num_classes) {
  Tensor t = Tensor::zeros({labels.size(), num_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw std::out_of_range("one_hot: label outside class range");
    t.at(i, labels[i]) = 1.0;
  }
  return t;
}

BatchIterator::BatchIterator(const LabeledDataset& data, std::size_t batch_size, std::uint64_t seed)
    : data_(data), batch_size_(batch_size), seed_(seed) {
  if (batch_size == 0 || batch_size > data.num_rows) {
    throw std::invalid_argument("batch size must lie in [1, N]");
  }
  start_epoch(0);
}

void BatchIterator::start_epoch(std::size_t epoch) {
  order_.resize(data_.num_rows);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  std::mt19937_64 rng(seq);
  std::shuffle(order_.begin(), order_.end(), rng);
  cursor_ = 0;
}

bool BatchIterator::next(Batch& out) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t end = std::min(cursor_ + batch_size_, order_.size());
  std::span<const std::size_t> idx(order_.data() + cursor_, end - cursor_);
  out.features = data_.rows_tensor(idx);
  out.labels.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out.labels[i] = data_.labels[idx[i]];
  out.one_hot = one_hot(out.labels, data_.num_classes);
  cursor_ = end;
  return true;
}

}  // namespace lhc
