#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "lhc/datasets.hpp"
#include "lhc/io.hpp"

using namespace lhc;

namespace {

void append_be32(std::string& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::string idx_images(std::uint32_t magic, std::uint32_t n, std::uint32_t rows, std::uint32_t cols) {
  std::string s;
  append_be32(s, magic);
  append_be32(s, n);
  append_be32(s, rows);
  append_be32(s, cols);
  for (std::uint32_t i = 0; i < n * rows * cols; ++i) s.push_back(static_cast<char>(i % 256));
  return s;
}

std::string idx_labels(std::uint32_t magic, std::uint32_t n) {
  std::string s;
  append_be32(s, magic);
  append_be32(s, n);
  for (std::uint32_t i = 0; i < n; ++i) s.push_back(static_cast<char>(i % 10));
  return s;
}

LabeledDataset tiny(std::size_t n, std::size_t d, std::size_t c) {
  LabeledDataset ds;
  ds.num_rows = n;
  ds.dim = d;
  ds.num_classes = c;
  for (std::size_t i = 0; i < n * d; ++i) ds.features.push_back(0.25 * static_cast<double>(i) - 3.0);
  for (std::size_t i = 0; i < n; ++i) ds.labels.push_back(static_cast<std::uint16_t>(i % c));
  return ds;
}

}  // namespace

TEST_CASE("idx parsing scales pixels and checks magic numbers") {
  const LabeledDataset ds =
      parse_idx(idx_images(kIdxImageMagic, 3, 2, 2), idx_labels(kIdxLabelMagic, 3), "img", "lbl", Split::kTrain);
  CHECK(ds.num_rows == 3);
  CHECK(ds.dim == 4);
  CHECK(ds.num_classes == 10);
  CHECK(ds.features[5] == doctest::Approx(5.0 / 255.0));
  CHECK(ds.labels == std::vector<std::uint16_t>{0, 1, 2});
  try {
    parse_idx(idx_images(0x00000801, 3, 2, 2), idx_labels(kIdxLabelMagic, 3), "bad-images", "lbl", Split::kTrain);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("bad-images") != std::string::npos);
  }
  CHECK_THROWS_AS(
      parse_idx(idx_images(kIdxImageMagic, 3, 2, 2), idx_labels(0x00000803, 3), "img", "lbl", Split::kTrain),
      FormatError);
  CHECK_THROWS_AS(
      parse_idx(idx_images(kIdxImageMagic, 3, 2, 2), idx_labels(kIdxLabelMagic, 4), "img", "lbl", Split::kTrain),
      FormatError);
  std::string truncated = idx_images(kIdxImageMagic, 3, 2, 2);
  truncated.pop_back();
  CHECK_THROWS_AS(parse_idx(truncated, idx_labels(kIdxLabelMagic, 3), "img", "lbl", Split::kTrain), FormatError);
}

TEST_CASE("missing mnist directory is an io error") {
  CHECK_THROWS_AS(load_mnist("/nonexistent/mnist"), IoError);
}

TEST_CASE("features file round trip") {
  const LabeledDataset ds = tiny(100, 512, 10);
  const std::string bytes = encode_features(ds);
  CHECK(bytes.size() == 16 + 100 * 512 * 8 + 100 * 2);
  const LabeledDataset back = decode_features(bytes, Split::kTest);
  CHECK(back.num_rows == 100);
  CHECK(back.dim == 512);
  CHECK(back.features == ds.features);
  CHECK(back.labels == ds.labels);
  CHECK(back.split == Split::kTest);
}

TEST_CASE("features file rejects truncation, bad magic and non-finite values") {
  const std::string bytes = encode_features(tiny(4, 3, 2));
  CHECK_THROWS_AS(decode_features(bytes.substr(0, bytes.size() - 1)), FormatError);
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_features(bad), FormatError);
  LabeledDataset nan = tiny(4, 3, 2);
  nan.features[7] = std::numeric_limits<double>::quiet_NaN();
  try {
    decode_features(encode_features(nan));
    FAIL("expected a validation error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("dataset validation") {
  LabeledDataset ds = tiny(4, 3, 2);
  CHECK_NOTHROW(ds.validate());
  ds.labels[1] = 2;
  CHECK_THROWS_AS(ds.validate(), std::invalid_argument);
  CHECK_THROWS_AS(tiny(0, 3, 2).validate(), std::invalid_argument);
  const LabeledDataset part = tiny(6, 2, 3).slice(2, 5);
  CHECK(part.num_rows == 3);
  CHECK(part.features.front() == doctest::Approx(0.25 * 4 - 3.0));
}

TEST_CASE("one hot encoding") {
  const std::vector<std::uint16_t> labels{3};
  const Tensor t = one_hot(labels, 10);
  CHECK(t.shape == Shape{1, 10});
  for (std::size_t i = 0; i < 10; ++i) CHECK(t[i] == (i == 3 ? 1.0 : 0.0));
}

TEST_CASE("batch iterator sizes and per-epoch permutations") {
  const LabeledDataset ds = tiny(10, 2, 3);
  BatchIterator it(ds, 4, 9);
  std::vector<std::size_t> sizes;
  Batch batch;
  it.start_epoch(1);
  const auto perm1 = it.permutation();
  while (it.next(batch)) {
    sizes.push_back(batch.labels.size());
    CHECK(batch.features.shape == Shape{batch.labels.size(), 2});
    CHECK(batch.one_hot.shape == Shape{batch.labels.size(), 3});
  }
  CHECK(sizes == std::vector<std::size_t>{4, 4, 2});
  it.start_epoch(2);
  const auto perm2 = it.permutation();
  CHECK(perm1 != perm2);
  CHECK(std::set<std::size_t>(perm1.begin(), perm1.end()).size() == 10);
  CHECK(std::set<std::size_t>(perm2.begin(), perm2.end()).size() == 10);
  BatchIterator again(ds, 4, 9);
  again.start_epoch(1);
  CHECK(again.permutation() == perm1);
}

namespace {

double nearest_mean_accuracy(const PlantedData& data) {
  std::size_t correct = 0;
  const LabeledDataset& t = data.test;
  for (std::size_t i = 0; i < t.num_rows; ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < data.class_means.size(); ++c) {
      double d = 0.0;
      for (std::size_t k = 0; k < t.dim; ++k) d += std::pow(t.row(i)[k] - data.class_means[c][k], 2);
      if (d < best_d) best_d = d, best = c;
    }
    correct += best == t.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(t.num_rows);
}

}  // namespace

TEST_CASE("planted generator with vanishing noise is perfectly separable") {
  PlantedHierarchySpec spec;
  spec.depth = 2;
  spec.sigma_within = 1e-9;
  const PlantedData data = generate_planted(spec);
  CHECK(data.train.num_classes == 4);
  CHECK(data.train.num_rows == 4 * 200);
  CHECK(data.test.num_rows == 4 * 100);
  CHECK(nearest_mean_accuracy(data) == 1.0);
}

TEST_CASE("planted generator at default settings") {
  const PlantedData data = generate_planted(PlantedHierarchySpec{});
  CHECK(data.train.dim == 16);
  CHECK(data.tree.num_leaves() == 8);
  CHECK(nearest_mean_accuracy(data) >= 0.99);
  const StringLookupTable t = data.tree.to_table();
  for (ClassId c = 0; c < 8; ++c) CHECK(t.string_for(c) == BitString::from_index(c, 3));
}

TEST_CASE("planted generator is deterministic per seed") {
  PlantedHierarchySpec spec;
  const PlantedData a = generate_planted(spec);
  const PlantedData b = generate_planted(spec);
  CHECK(a.train.features == b.train.features);
  CHECK(a.train.labels == b.train.labels);
  CHECK(a.test.features == b.test.features);
  CHECK(export_tree(a.tree, TreeFormat::kJson) == export_tree(b.tree, TreeFormat::kJson));
  spec.seed = 2;
  CHECK(generate_planted(spec).train.features != a.train.features);
}

TEST_CASE("planted spec validation") {
  PlantedHierarchySpec spec;
  spec.depth = 0;
  CHECK_THROWS(spec.validate());
  spec = {};
  spec.sigma_within = -1.0;
  CHECK_THROWS(spec.validate());
  spec = {};
  spec.samples_per_class = 0;
  CHECK_THROWS(spec.validate());
}
