#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "weedid/core/random.hpp"
#include "weedid/error.hpp"
#include "weedid/evalkit/metrics.hpp"

using namespace weedid;
using namespace weedid::eval;

namespace {

// Brute-force oracle: recount everything from the raw prediction list.
struct Recount {
  double accuracy, precision, recall, f1;
};

Recount recount(const std::vector<int>& preds, const std::vector<int>& labels, int C) {
  double correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
  double p = 0, r = 0, f = 0;
  for (int c = 0; c < C; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i] == c && labels[i] == c) tp += 1;
      if (preds[i] == c && labels[i] != c) fp += 1;
      if (preds[i] != c && labels[i] == c) fn += 1;
    }
    p += tp + fp > 0 ? tp / (tp + fp) : 0.0;
    r += tp + fn > 0 ? tp / (tp + fn) : 0.0;
    f += 2 * tp + fp + fn > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
  }
  return {correct / static_cast<double>(preds.size()), p / C, r / C, f / C};
}

ConfusionMatrix from_rows(const std::vector<std::vector<std::int64_t>>& rows) {
  ConfusionMatrix cm(static_cast<int>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t p = 0; p < rows.size(); ++p) cm.at(static_cast<int>(t), static_cast<int>(p)) = rows[t][p];
  return cm;
}

}  // namespace

TEST_CASE("perfect predictions give a diagonal matrix") {
  std::vector<int> y{0, 1, 2, 2, 1};
  auto cm = confusion(y, y, 3);
  for (int t = 0; t < 3; ++t)
    for (int p = 0; p < 3; ++p)
      if (t != p) CHECK(cm.at(t, p) == 0);
  CHECK(cm.total() == 5);
  auto m = macro_metrics(cm);
  CHECK(m.accuracy == 1.0);
  CHECK(m.macro_precision == 1.0);
  CHECK(m.macro_recall == 1.0);
  CHECK(m.macro_f1 == 1.0);
}

TEST_CASE("13 of 20 sent to one confounder") {
  std::vector<int> labels(20, 0), preds(20, 0);
  std::fill(preds.begin(), preds.begin() + 13, 1);
  auto cm = confusion(preds, labels, 2);
  CHECK(cm.at(0, 1) == 13);
  CHECK(cm.at(0, 0) == 7);
}

TEST_CASE("confusion rejects bad input") {
  std::vector<int> a{0, 1}, b{0};
  CHECK_THROWS_AS(confusion(a, b, 2), Error);
  std::vector<int> c{0, 2};
  try {
    confusion(c, a, 2);
    FAIL("expected IdOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IdOutOfRange);
  }
  CHECK_THROWS_AS(macro_metrics(ConfusionMatrix(2)), Error);
}

TEST_CASE("two-class hand-computed macro metrics") {
  auto m = macro_metrics(from_rows({{8, 2}, {3, 7}}));
  CHECK(m.accuracy == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(std::abs(m.macro_precision - 0.7525252525252525) < 1e-9);
  CHECK(std::abs(m.macro_recall - 0.75) < 1e-9);
  CHECK(std::abs(m.macro_f1 - 0.7493734335839599) < 1e-9);
}

TEST_CASE("degenerate class precision is zero by convention") {
  auto cm = from_rows({{5, 0}, {5, 0}});
  auto m = macro_metrics(cm);
  CHECK(m.accuracy == 0.5);
  CHECK(m.macro_precision == doctest::Approx(0.25));
  auto ex = macro_metrics(cm, ZeroDivision::Exclude);
  CHECK(ex.macro_precision == doctest::Approx(0.5));
}

TEST_CASE("metrics match the brute-force recount on random instances") {
  Rng rng = make_rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const int C = 1 + static_cast<int>(uniform_index(rng, 10));
    const auto n = 1 + uniform_index(rng, 200);
    std::vector<int> preds(n), labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(uniform_index(rng, C));
      preds[i] = uniform01(rng) < 0.6 ? labels[i] : static_cast<int>(uniform_index(rng, C));
    }
    auto cm = confusion(preds, labels, C);
    for (int t = 0; t < C; ++t) {
      std::int64_t naive = 0;
      for (std::size_t i = 0; i < n; ++i) naive += labels[i] == t && preds[i] == t;
      CHECK(cm.tp(t) == naive);
      CHECK(cm.tp(t) + cm.fn(t) == cm.row_sum(t));
      CHECK(cm.tp(t) + cm.fp(t) == cm.col_sum(t));
    }
    std::int64_t sfp = 0, sfn = 0;
    for (int c = 0; c < C; ++c) sfp += cm.fp(c), sfn += cm.fn(c);
    CHECK(sfp == sfn);
    auto m = macro_metrics(cm);
    auto o = recount(preds, labels, C);
    CHECK(std::abs(m.accuracy - o.accuracy) <= 1e-12);
    CHECK(std::abs(m.macro_precision - o.precision) <= 1e-12);
    CHECK(std::abs(m.macro_recall - o.recall) <= 1e-12);
    CHECK(std::abs(m.macro_f1 - o.f1) <= 1e-12);
  }
}

TEST_CASE("macro metrics are invariant under class relabeling") {
  Rng rng = make_rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const int C = 2 + static_cast<int>(uniform_index(rng, 6));
    std::vector<int> preds(60), labels(60);
    for (std::size_t i = 0; i < 60; ++i) {
      labels[i] = static_cast<int>(uniform_index(rng, C));
      preds[i] = static_cast<int>(uniform_index(rng, C));
    }
    auto perm = permutation(rng, C);
    std::vector<int> p2(60), l2(60);
    for (std::size_t i = 0; i < 60; ++i) p2[i] = static_cast<int>(perm[preds[i]]), l2[i] = static_cast<int>(perm[labels[i]]);
    auto a = macro_metrics(confusion(preds, labels, C));
    auto b = macro_metrics(confusion(p2, l2, C));
    CHECK(std::abs(a.macro_f1 - b.macro_f1) < 1e-12);
    CHECK(std::abs(a.macro_precision - b.macro_precision) < 1e-12);
  }
}

TEST_CASE("top-k accuracy") {
  ProbRows rows{{0.5, 0.3, 0.2}};
  std::vector<int> y{2};
  CHECK(topk_accuracy(rows, y, 1) == 0.0);
  CHECK(topk_accuracy(rows, y, 3) == 1.0);
  CHECK(topk_accuracy(rows, y, 5) == 1.0);
  // Ties break toward the lower class id.
  ProbRows tie{{0.5, 0.5}};
  std::vector<int> zero{0}, one{1};
  CHECK(topk_accuracy(tie, zero, 1) == 1.0);
  CHECK(topk_accuracy(tie, one, 1) == 0.0);
  std::vector<int> two{0, 1};
  CHECK_THROWS_AS(topk_accuracy(rows, two, 1), Error);
}

TEST_CASE("top-k matches a full-sort oracle") {
  Rng rng = make_rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const int C = 1 + static_cast<int>(uniform_index(rng, 10));
    const auto n = 1 + uniform_index(rng, 50);
    ProbRows rows(n, std::vector<double>(C));
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse values to exercise ties.
      for (auto& v : rows[i]) v = static_cast<double>(uniform_index(rng, 4));
      labels[i] = static_cast<int>(uniform_index(rng, C));
    }
    const int k = 1 + static_cast<int>(uniform_index(rng, 6));
    double hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<int> order(C);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rows[i][a] > rows[i][b]; });
      hits += std::find(order.begin(), order.begin() + std::min(k, C), labels[i]) != order.begin() + std::min(k, C);
    }
    CHECK(std::abs(topk_accuracy(rows, labels, k) - hits / static_cast<double>(n)) <= 1e-12);
  }
}

TEST_CASE("evaluate_probs fills top-5 above top-1") {
  ProbRows rows{{0.1, 0.2, 0.7}, {0.6, 0.3, 0.1}};
  std::vector<int> y{2, 1};
  auto m = evaluate_probs(rows, y, 3);
  CHECK(m.top1 == 0.5);
  CHECK(m.top5 == 1.0);
  CHECK(m.n_examples == 2);
  CHECK(m.accuracy == m.top1);
}
