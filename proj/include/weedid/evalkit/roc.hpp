#pragma once

#include <json.hpp>
#include <span>
#include <string>
#include <vector>

namespace weedid::eval {

struct CurvePoint {
  double threshold = 0.0;  // score >= threshold counts as positive
  double tpr = 0.0;
  double fpr = 0.0;
  double precision = 1.0;
};

struct RocResult {
  double auroc = 0.0;
  double aupr = 0.0;  // average precision
  double tpr_level = 0.95;
  double fpr_at_tpr = 1.0;
  std::vector<CurvePoint> points;  // descending threshold, starting at (0,0)
};

/// Higher scores mean "positive". AUROC is the trapezoid area over every
/// distinct threshold (equal to the Mann-Whitney statistic with ties at 1/2);
/// fpr_at_tpr is the smallest FPR among thresholds reaching `tpr_level`.
/// Throws Error(EmptySet) if either list is empty.
RocResult roc_pr(std::span<const double> positives, std::span<const double> negatives, double tpr_level = 0.95);

nlohmann::json to_json(const RocResult& r, bool with_points = false);
std::string curve_to_csv(const RocResult& r);

}  // namespace weedid::eval
