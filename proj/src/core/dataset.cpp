#include "weedid/core/dataset.hpp"

#include <algorithm>
#include <map>

#include <json.hpp>

#include "weedid/core/random.hpp"
#include "weedid/error.hpp"

namespace weedid {

DatasetSplit split_dataset(std::span<const LabeledExample> examples, int per_class_test, std::uint64_t seed,
                           const SplitOptions& options) {
  if (per_class_test < 0) throw Error(ErrorCode::ConfigError, "per_class_test must be >= 0");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < examples.size(); ++i) by_class[examples[i].label].push_back(i);
  if (options.class_count >= 0) {
    for (int c = 0; c < options.class_count; ++c) by_class.try_emplace(c);
  }

  std::vector<char> held_out(examples.size(), 0);
  std::vector<char> is_validation(examples.size(), 0);
  for (const auto& [label, members] : by_class) {
    if (static_cast<int>(members.size()) <= per_class_test)
      throw Error(ErrorCode::InsufficientExamples, "class " + std::to_string(label) + " has " +
                                                       std::to_string(members.size()) + " examples, needs more than " +
                                                       std::to_string(per_class_test));
    // One stream per class so adding a class does not reshuffle the others.
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(label));
    auto order = permutation(rng, members.size());
    for (int k = 0; k < per_class_test; ++k) {
      const auto idx = members[order[static_cast<std::size_t>(k)]];
      held_out[idx] = 1;
      if (options.split_validation && k >= per_class_test / 2) is_validation[idx] = 1;
    }
  }

  DatasetSplit split;
  split.per_class_test_count = per_class_test;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (!held_out[i]) split.train.push_back(examples[i]);
    else if (is_validation[i]) split.validation.push_back(examples[i]);
    else split.test.push_back(examples[i]);
  }
  return split;
}

std::string split_to_ndjson(const DatasetSplit& split) {
  std::string out;
  auto emit = [&](const std::vector<LabeledExample>& list, const char* name) {
    for (const auto& ex : list) out += nlohmann::json{{"example_id", ex.id}, {"split", name}}.dump() + "\n";
  };
  emit(split.train, "train");
  emit(split.test, "test");
  emit(split.validation, "validation");
  return out;
}

std::vector<int> labels_of(std::span<const LabeledExample> examples) {
  std::vector<int> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(ex.label);
  return out;
}

}  // namespace weedid
