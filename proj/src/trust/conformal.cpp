#include "weedid/trust/conformal.hpp"

#include <algorithm>
#include <cmath>

#include "weedid/error.hpp"

namespace weedid::trust {

ConformalCalibration calibrate_conformal(const eval::ProbRows& probs, std::span<const int> labels, double alpha) {
  if (probs.empty()) throw Error(ErrorCode::EmptyCalibration, "no calibration examples");
  if (probs.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "probabilities and labels differ in length");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::ConfigError, "alpha must lie in (0, 1)");
  std::vector<double> scores;
  scores.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= probs[i].size())
      throw Error(ErrorCode::IdOutOfRange, "label " + std::to_string(labels[i]) + " outside probability row");
    scores.push_back(1.0 - probs[i][labels[i]]);
  }
  std::sort(scores.begin(), scores.end());

  ConformalCalibration cal;
  cal.alpha = alpha;
  cal.n_cal = scores.size();
  cal.created_from = data_fingerprint(probs, labels);
  const double n = static_cast<double>(scores.size());
  // The small slack keeps products like 20 * 0.95 from rounding up a rank.
  const auto rank = static_cast<std::size_t>(std::ceil((n + 1.0) * (1.0 - alpha) - 1e-9));
  if (rank > scores.size()) {
    cal.include_all = true;
    cal.q_hat = 1.0;
  } else {
    cal.q_hat = scores[std::max<std::size_t>(rank, 1) - 1];
  }
  return cal;
}

std::vector<SetMember> conformal_set(std::span<const double> probs, const ConformalCalibration& calibration) {
  const double threshold = calibration.inclusion_threshold();
  std::vector<SetMember> out;
  for (std::size_t c = 0; c < probs.size(); ++c)
    if (calibration.include_all || probs[c] >= threshold) out.push_back({static_cast<int>(c), probs[c]});
  std::stable_sort(out.begin(), out.end(),
                   [](const SetMember& a, const SetMember& b) { return a.probability > b.probability; });
  return out;
}

Coverage evaluate_coverage(const eval::ProbRows& probs, std::span<const int> labels,
                           const ConformalCalibration& calibration) {
  if (probs.empty()) throw Error(ErrorCode::EmptySet, "no test examples");
  if (probs.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "probabilities and labels differ in length");
  double covered = 0, sizes = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto set = conformal_set(probs[i], calibration);
    sizes += static_cast<double>(set.size());
    covered += std::any_of(set.begin(), set.end(), [&](const SetMember& m) { return m.class_id == labels[i]; });
  }
  const double n = static_cast<double>(probs.size());
  return {covered / n, sizes / n, probs.size()};
}

nlohmann::json to_json(const ConformalCalibration& c) {
  return {{"kind", "conformal"},
          {"alpha", c.alpha},
          {"q_hat", c.include_all ? nlohmann::json("include-all") : nlohmann::json(c.q_hat)},
          {"n_cal", c.n_cal},
          {"score_kind", "one_minus_softmax_true_class"},
          {"created_from", c.created_from}};
}

ConformalCalibration conformal_from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind") != "conformal") throw Error(ErrorCode::MalformedFile, "not a conformal calibration");
    ConformalCalibration c;
    c.alpha = j.at("alpha").get<double>();
    const auto& q = j.at("q_hat");
    if (q.is_string()) {
      if (q != "include-all") throw Error(ErrorCode::MalformedFile, "unknown q_hat sentinel");
      c.include_all = true;
      c.q_hat = 1.0;
    } else {
      c.q_hat = q.get<double>();
    }
    c.n_cal = j.at("n_cal").get<std::size_t>();
    c.created_from = j.value("created_from", "");
    if (!(c.alpha > 0.0 && c.alpha < 1.0) || c.q_hat < 0.0 || c.q_hat > 1.0 || c.n_cal < 1)
      throw Error(ErrorCode::MalformedFile, "conformal calibration values out of range");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedFile, std::string("conformal calibration: ") + e.what());
  }
}

nlohmann::json to_json(const Coverage& c) {
  return {{"empirical_coverage", c.empirical_coverage}, {"mean_set_size", c.mean_set_size}, {"n", c.n}};
}

}  // namespace weedid::trust
