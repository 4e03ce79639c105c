#pragma once

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace weedid::eval {

// One probability (or score) vector per example.
using ProbRows = std::vector<std::vector<double>>;

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int classes);

  int classes() const { return classes_; }
  std::int64_t& at(int truth, int pred) { return counts_[index(truth, pred)]; }
  std::int64_t at(int truth, int pred) const { return counts_[index(truth, pred)]; }

  std::int64_t total() const;
  std::int64_t row_sum(int c) const;
  std::int64_t col_sum(int c) const;
  std::int64_t tp(int c) const { return at(c, c); }
  std::int64_t fn(int c) const { return row_sum(c) - tp(c); }
  std::int64_t fp(int c) const { return col_sum(c) - tp(c); }

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t index(int t, int p) const { return static_cast<std::size_t>(t) * classes_ + p; }
  int classes_ = 0;
  std::vector<std::int64_t> counts_;
};

struct MetricsReport {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double top1 = 0.0;
  std::optional<double> top5;  // only known when probabilities were given
  std::int64_t n_examples = 0;
};

// How a class with an empty denominator enters a macro average.
enum class ZeroDivision { Zero, Exclude };

/// Throws Error(LengthMismatch) or Error(IdOutOfRange).
ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels, int classes);

/// Accuracy plus macro precision/recall/F1 averaged over classes.
/// Throws Error(EmptyMatrix) when the matrix holds no examples.
MetricsReport macro_metrics(const ConfusionMatrix& cm, ZeroDivision policy = ZeroDivision::Zero);

/// Fraction of rows whose label is among the k largest entries; ties rank the
/// lower class id first.
double topk_accuracy(const ProbRows& rows, std::span<const int> labels, int k);

/// Argmax per row, lowest id on ties.
std::vector<int> argmax_rows(const ProbRows& rows);

/// Confusion-based metrics plus top-1/top-5 from probability rows.
MetricsReport evaluate_probs(const ProbRows& rows, std::span<const int> labels, int classes,
                             ZeroDivision policy = ZeroDivision::Zero);

nlohmann::json to_json(const MetricsReport& m);
nlohmann::json to_json(const ConfusionMatrix& cm);
ConfusionMatrix confusion_from_json(const nlohmann::json& j);
std::string confusion_to_csv(const ConfusionMatrix& cm, std::span<const std::string> names);

}  // namespace weedid::eval
