#include "weedid/evalkit/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "weedid/error.hpp"
#include "weedid/io/csv.hpp"

namespace weedid::eval {

ConfusionMatrix::ConfusionMatrix(int classes)
    : classes_(classes), counts_(static_cast<std::size_t>(std::max(classes, 0)) * std::max(classes, 0), 0) {
  if (classes < 0) throw Error(ErrorCode::IdOutOfRange, "negative class count");
}

std::int64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}); }

std::int64_t ConfusionMatrix::row_sum(int c) const {
  std::int64_t s = 0;
  for (int p = 0; p < classes_; ++p) s += at(c, p);
  return s;
}

std::int64_t ConfusionMatrix::col_sum(int c) const {
  std::int64_t s = 0;
  for (int t = 0; t < classes_; ++t) s += at(t, c);
  return s;
}

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels, int classes) {
  if (preds.size() != labels.size())
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(preds.size()) + " predictions vs " + std::to_string(labels.size()) + " labels");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= classes || labels[i] < 0 || labels[i] >= classes)
      throw Error(ErrorCode::IdOutOfRange, "class id outside 0.." + std::to_string(classes - 1) + " at index " +
                                               std::to_string(i));
    ++cm.at(labels[i], preds[i]);
  }
  return cm;
}

namespace {

// Mean of num/den over classes; empty denominators count as 0 or are skipped.
struct MacroMean {
  ZeroDivision policy;
  double sum = 0.0;
  int terms = 0;

  void add(std::int64_t num, std::int64_t den) {
    if (den > 0) {
      sum += static_cast<double>(num) / static_cast<double>(den);
      ++terms;
    } else if (policy == ZeroDivision::Zero) {
      ++terms;
    }
  }
  double value() const { return terms > 0 ? sum / terms : 0.0; }
};

}  // namespace

MetricsReport macro_metrics(const ConfusionMatrix& cm, ZeroDivision policy) {
  const auto n = cm.total();
  if (n == 0) throw Error(ErrorCode::EmptyMatrix, "confusion matrix has no examples");
  MacroMean p{policy}, r{policy}, f{policy};
  std::int64_t correct = 0;
  for (int c = 0; c < cm.classes(); ++c) {
    const auto tp = cm.tp(c), fp = cm.fp(c), fn = cm.fn(c);
    correct += tp;
    p.add(tp, tp + fp);
    r.add(tp, tp + fn);
    f.add(2 * tp, 2 * tp + fp + fn);
  }
  MetricsReport m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  m.macro_precision = p.value();
  m.macro_recall = r.value();
  m.macro_f1 = f.value();
  m.top1 = m.accuracy;
  m.n_examples = n;
  return m;
}

namespace {

void check_rows(const ProbRows& rows, std::span<const int> labels) {
  if (rows.size() != labels.size())
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(rows.size()) + " rows vs " + std::to_string(labels.size()) + " labels");
}

}  // namespace

double topk_accuracy(const ProbRows& rows, std::span<const int> labels, int k) {
  check_rows(rows, labels);
  if (k < 1) throw Error(ErrorCode::ConfigError, "k must be at least 1");
  if (rows.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= row.size())
      throw Error(ErrorCode::IdOutOfRange, "label " + std::to_string(y) + " outside row width");
    // Rank of y: classes that outrank it under (probability desc, id asc).
    int ahead = 0;
    for (std::size_t c = 0; c < row.size(); ++c)
      if (row[c] > row[y] || (row[c] == row[y] && static_cast<int>(c) < y)) ++ahead;
    if (ahead < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

std::vector<int> argmax_rows(const ProbRows& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.empty()) throw Error(ErrorCode::EmptyInput, "empty probability row");
    out.push_back(static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin()));
  }
  return out;
}

MetricsReport evaluate_probs(const ProbRows& rows, std::span<const int> labels, int classes, ZeroDivision policy) {
  check_rows(rows, labels);
  const auto preds = argmax_rows(rows);
  auto m = macro_metrics(confusion(preds, labels, classes), policy);
  m.top1 = topk_accuracy(rows, labels, 1);
  m.top5 = topk_accuracy(rows, labels, 5);
  return m;
}

nlohmann::json to_json(const MetricsReport& m) {
  nlohmann::json j{{"accuracy", m.accuracy},   {"macro_precision", m.macro_precision},
                   {"macro_recall", m.macro_recall}, {"macro_f1", m.macro_f1},
                   {"top1", m.top1},           {"n_examples", m.n_examples}};
  j["top5"] = m.top5 ? nlohmann::json(*m.top5) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json to_json(const ConfusionMatrix& cm) {
  nlohmann::json rows = nlohmann::json::array();
  for (int t = 0; t < cm.classes(); ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (int p = 0; p < cm.classes(); ++p) row.push_back(cm.at(t, p));
    rows.push_back(row);
  }
  return {{"classes", cm.classes()}, {"counts", rows}};
}

ConfusionMatrix confusion_from_json(const nlohmann::json& j) {
  try {
    ConfusionMatrix cm(j.at("classes").get<int>());
    const auto& rows = j.at("counts");
    if (rows.size() != static_cast<std::size_t>(cm.classes())) throw Error(ErrorCode::MalformedFile, "row count");
    for (int t = 0; t < cm.classes(); ++t) {
      if (rows[t].size() != static_cast<std::size_t>(cm.classes())) throw Error(ErrorCode::MalformedFile, "row width");
      for (int p = 0; p < cm.classes(); ++p) cm.at(t, p) = rows[t][p].get<std::int64_t>();
    }
    return cm;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedFile, std::string("confusion json: ") + e.what());
  }
}

std::string confusion_to_csv(const ConfusionMatrix& cm, std::span<const std::string> names) {
  auto name = [&](int c) { return static_cast<std::size_t>(c) < names.size() ? names[c] : std::to_string(c); };
  std::ostringstream out;
  std::vector<std::string> header{"true\\pred"};
  for (int p = 0; p < cm.classes(); ++p) header.push_back(name(p));
  out << io::format_csv_row(header);
  for (int t = 0; t < cm.classes(); ++t) {
    std::vector<std::string> row{name(t)};
    for (int p = 0; p < cm.classes(); ++p) row.push_back(std::to_string(cm.at(t, p)));
    out << io::format_csv_row(row);
  }
  return out.str();
}

}  // namespace weedid::eval
