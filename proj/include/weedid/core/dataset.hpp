#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace weedid {

/// Height x width x channels raster, row-major HWC, values in [0,1].
struct Raster {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> pixels;

  Raster() = default;
  Raster(int h, int w, int c) : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, 0.0) {}

  double& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

  bool operator==(const Raster&) const = default;
};

struct LabeledExample {
  std::string id;
  Raster image;
  int label = 0;
  std::set<std::string> strata_tags;

  bool operator==(const LabeledExample&) const = default;
};

struct DatasetSplit {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> test;
  std::vector<LabeledExample> validation;  // only filled when the held-out set is halved
  int per_class_test_count = 0;
};

struct SplitOptions {
  // Halve each class's held-out examples into test and validation.
  bool split_validation = false;
  // When set, every class 0..class_count-1 must be present.
  int class_count = -1;
};

/// Samples exactly `per_class_test` held-out examples per class uniformly
/// without replacement (deterministic under `seed`); the rest is train.
/// Relative input order is preserved within each output list.
/// Throws Error(InsufficientExamples) when a class has <= per_class_test examples.
DatasetSplit split_dataset(std::span<const LabeledExample> examples, int per_class_test, std::uint64_t seed,
                           const SplitOptions& options = {});

/// Newline-delimited JSON `{"example_id":..., "split":...}` records.
std::string split_to_ndjson(const DatasetSplit& split);

std::vector<int> labels_of(std::span<const LabeledExample> examples);

}  // namespace weedid
