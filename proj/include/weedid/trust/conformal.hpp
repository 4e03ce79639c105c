#pragma once

#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "weedid/evalkit/metrics.hpp"
#include "weedid/trust/artifact.hpp"

namespace weedid::trust {

struct ConformalCalibration {
  double alpha = 0.05;  // miscoverage rate
  double q_hat = 1.0;
  bool include_all = false;  // too few calibration points for the requested rank
  std::size_t n_cal = 0;
  std::string created_from;

  /// Minimum probability for set membership.
  double inclusion_threshold() const { return include_all ? 0.0 : 1.0 - q_hat; }
};

/// Score s_i = 1 - p_i(true class); q_hat is the ceil((n+1)(1-alpha))-th
/// smallest score, or the include-all sentinel when that rank exceeds n.
/// Throws Error(EmptyCalibration), Error(ConfigError) for alpha outside (0,1),
/// Error(IdOutOfRange) for labels outside a row.
ConformalCalibration calibrate_conformal(const eval::ProbRows& probs, std::span<const int> labels, double alpha);

struct SetMember {
  int class_id = 0;
  double probability = 0.0;
};

/// Classes with p >= 1 - q_hat, by descending probability (lower id first on
/// ties). May be empty.
std::vector<SetMember> conformal_set(std::span<const double> probs, const ConformalCalibration& calibration);

struct Coverage {
  double empirical_coverage = 0.0;
  double mean_set_size = 0.0;
  std::size_t n = 0;
};

/// Throws Error(EmptySet) on an empty test set.
Coverage evaluate_coverage(const eval::ProbRows& probs, std::span<const int> labels,
                           const ConformalCalibration& calibration);

nlohmann::json to_json(const ConformalCalibration& c);
ConformalCalibration conformal_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Coverage& c);

}  // namespace weedid::trust
