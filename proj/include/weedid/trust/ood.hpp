#pragma once

#include <cstdint>
#include <json.hpp>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "weedid/evalkit/metrics.hpp"
#include "weedid/evalkit/roc.hpp"

namespace weedid::trust {

/// E = -T * log(sum_i exp(logit_i / T)), via a max-shifted logsumexp. Lower
/// energy means more in-distribution.
/// Throws Error(EmptyInput) on no logits, Error(ConfigError) unless T > 0.
double energy_score(std::span<const double> logits, double temperature);

struct OodCalibration {
  double temperature = 1.0;
  double tau = 0.0;  // energy above tau is out-of-distribution
  double target_tpr = 0.95;
  std::size_t n_cal = 0;
  std::vector<std::pair<double, double>> id_energy_quantiles;  // (level, energy)
  std::vector<eval::CurvePoint> roc_points;                    // calibration split, at the chosen T
  std::string created_from;
};

struct OodMetrics {
  double auroc = 0.0;
  double aupr = 0.0;
  double fpr_at_tpr = 1.0;  // lowest FPR reaching target TPR on held-out data
  double tpr_at_tau = 0.0;
  double fpr_at_tau = 0.0;
  double accuracy = 0.0;  // ID kept plus OOD flagged, over all held-out examples
  std::size_t n_test_id = 0;
  std::size_t n_test_ood = 0;
};

struct OodOptions {
  std::vector<double> temperatures{0.02, 0.1, 0.5, 1.0, 2.0};
  double target_tpr = 0.95;
  double calibration_fraction = 0.6;
  std::uint64_t seed = 0;
};

struct OodFit {
  OodCalibration calibration;
  OodMetrics metrics;
  std::vector<double> auroc_by_temperature;  // calibration split, grid order
  std::vector<double> cal_id_energies, cal_ood_energies;
  std::vector<double> test_id_energies, test_ood_energies;
};

/// Splits each logit set into a calibration part (60% by default, seeded) and
/// a held-out part. T maximizes calibration AUROC (first in grid order on
/// ties); tau is the smallest calibration ID energy with at least target_tpr
/// of ID energies at or below it. Metrics use the held-out part.
/// Throws Error(EmptySet) when a set cannot be split or the grid is empty.
OodFit calibrate_ood(const eval::ProbRows& id_logits, const eval::ProbRows& ood_logits, const OodOptions& options);

struct OodVerdict {
  double energy = 0.0;
  bool is_ood = false;
};

/// is_ood = energy > tau; exactly tau stays in-distribution.
OodVerdict ood_decide(std::span<const double> logits, const OodCalibration& calibration);

nlohmann::json to_json(const OodCalibration& c);
OodCalibration ood_from_json(const nlohmann::json& j);
nlohmann::json to_json(const OodMetrics& m);

}  // namespace weedid::trust
