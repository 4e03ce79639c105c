#include <doctest.h>

#include <algorithm>
#include <set>

#include "weedid/core/dataset.hpp"
#include "weedid/core/random.hpp"
#include "weedid/error.hpp"

using namespace weedid;

namespace {

std::vector<LabeledExample> corpus(const std::vector<int>& per_class) {
  std::vector<LabeledExample> out;
  for (std::size_t c = 0; c < per_class.size(); ++c)
    for (int i = 0; i < per_class[c]; ++i)
      out.push_back(LabeledExample{"c" + std::to_string(c) + "_" + std::to_string(i), Raster(2, 2, 1), static_cast<int>(c), {}});
  return out;
}

std::set<std::string> ids(const std::vector<LabeledExample>& v) {
  std::set<std::string> out;
  for (const auto& e : v) out.insert(e.id);
  return out;
}

}  // namespace

TEST_CASE("3 classes x 30 with 20 held out gives 60 test and 30 train") {
  auto data = corpus({30, 30, 30});
  auto split = split_dataset(data, 20, 1);
  CHECK(split.test.size() == 60);
  CHECK(split.train.size() == 30);
  for (int c = 0; c < 3; ++c)
    CHECK(std::count_if(split.test.begin(), split.test.end(), [&](const auto& e) { return e.label == c; }) == 20);
}

TEST_CASE("splits are deterministic under seed") {
  auto data = corpus({30, 25});
  CHECK(split_to_ndjson(split_dataset(data, 20, 5)) == split_to_ndjson(split_dataset(data, 20, 5)));
  CHECK(split_to_ndjson(split_dataset(data, 20, 5)) != split_to_ndjson(split_dataset(data, 20, 6)));
}

TEST_CASE("a class that cannot supply the held-out count is an error") {
  auto data = corpus({30, 20});
  try {
    split_dataset(data, 21, 1);
    FAIL("expected InsufficientExamples");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientExamples);
  }
  SplitOptions opts;
  opts.class_count = 3;
  CHECK_THROWS_AS(split_dataset(corpus({30, 30}), 5, 1, opts), Error);
}

TEST_CASE("splits partition the corpus for any seed (property)") {
  Rng rng = make_rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> sizes;
    const auto classes = 1 + uniform_index(rng, 6);
    for (std::size_t c = 0; c < classes; ++c) sizes.push_back(6 + static_cast<int>(uniform_index(rng, 20)));
    auto data = corpus(sizes);
    const int k = 1 + static_cast<int>(uniform_index(rng, 5));
    auto split = split_dataset(data, k, rng());
    CHECK(split.train.size() + split.test.size() == data.size());
    auto tr = ids(split.train), te = ids(split.test);
    std::vector<std::string> both;
    std::set_intersection(tr.begin(), tr.end(), te.begin(), te.end(), std::back_inserter(both));
    CHECK(both.empty());
    CHECK(split.test.size() == classes * static_cast<std::size_t>(k));
  }
}

TEST_CASE("optional validation half") {
  auto data = corpus({30, 30});
  SplitOptions opts;
  opts.split_validation = true;
  auto split = split_dataset(data, 20, 3, opts);
  CHECK(split.test.size() == 20);
  CHECK(split.validation.size() == 20);
  CHECK(split.train.size() == 20);
  CHECK(split_to_ndjson(split).find("\"split\":\"validation\"") != std::string::npos);
}
