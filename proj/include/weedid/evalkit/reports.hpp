#pragma once

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "weedid/core/taxonomy.hpp"
#include "weedid/evalkit/metrics.hpp"

namespace weedid::eval {

struct PerClassRow {
  int class_id = 0;
  std::optional<double> accuracy;  // empty when the class has no test data
  std::int64_t n_test = 0;
  std::int64_t train_count = 0;
};

struct PerClassReport {
  std::vector<PerClassRow> rows;
  int classes_with_data = 0;
  double threshold = 0.8;
  double fraction_at_100 = 0.0;
  double fraction_ge = 0.0;  // accuracy >= threshold
};

/// Throws Error(LengthMismatch) if train_counts does not have one entry per class.
PerClassReport per_class_report(const ConfusionMatrix& cm, std::span<const std::int64_t> train_counts,
                                double threshold = 0.8);

struct AttributionRecord {
  int source = 0;
  int confounder = 0;
  double source_accuracy = 0.0;
  std::int64_t count = 0;         // source images predicted as the confounder
  double fraction_of_errors = 0.0;
  bool same_genus = false;
  bool same_family = false;
  std::int64_t confounder_train_count = 0;
};

/// One record per class below `accuracy_ceiling` with at least one error,
/// ordered by ascending accuracy then class id. The confounder is the largest
/// off-diagonal entry of the row (lowest id on ties).
std::vector<AttributionRecord> attribute_errors(const ConfusionMatrix& cm, const ClassSet& classes,
                                                std::span<const std::int64_t> train_counts,
                                                double accuracy_ceiling);

struct StrataRow {
  std::string tag;
  int class_count = 0;  // distinct labels present in the stratum
  MetricsReport metrics;
};

struct StrataReport {
  std::vector<StrataRow> rows;  // in order of first appearance
};

/// One row per tag value; an example counts in every stratum it is tagged with.
StrataReport strata_report(const ProbRows& rows, std::span<const int> labels,
                           std::span<const std::set<std::string>> tags, int classes);

nlohmann::json to_json(const PerClassReport& r, const ClassSet* classes = nullptr);
nlohmann::json to_json(const AttributionRecord& r, const ClassSet& classes);
nlohmann::json to_json(const StrataReport& r);
std::string per_class_to_csv(const PerClassReport& r, const ClassSet* classes = nullptr);
std::string attribution_to_csv(std::span<const AttributionRecord> records, const ClassSet& classes);
std::string strata_to_csv(const StrataReport& r);
/// Aligned columns: challenge, classes, images, accuracy, macro P/R/F1.
std::string strata_to_text(const StrataReport& r);

}  // namespace weedid::eval
