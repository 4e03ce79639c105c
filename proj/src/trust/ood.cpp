#include "weedid/trust/ood.hpp"

#include <algorithm>
#include <cmath>

#include "weedid/core/random.hpp"
#include "weedid/error.hpp"
#include "weedid/nnkit/ops.hpp"
#include "weedid/trust/artifact.hpp"

namespace weedid::trust {

double energy_score(std::span<const double> logits, double temperature) {
  if (logits.empty()) throw Error(ErrorCode::EmptyInput, "energy of an empty logit vector");
  if (!(temperature > 0.0)) throw Error(ErrorCode::ConfigError, "temperature must be positive");
  std::vector<double> scaled(logits.begin(), logits.end());
  for (auto& v : scaled) v /= temperature;
  return -temperature * nn::logsumexp(scaled);
}

namespace {

struct Halves {
  eval::ProbRows cal, test;
};

Halves split_rows(const eval::ProbRows& rows, double fraction, std::uint64_t seed, std::uint64_t stream) {
  if (rows.size() < 2) throw Error(ErrorCode::EmptySet, "need at least two rows to split calibration from test");
  auto n_cal = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(rows.size())));
  n_cal = std::clamp<std::size_t>(n_cal, 1, rows.size() - 1);
  Rng rng = make_rng(seed, stream);
  const auto order = permutation(rng, rows.size());
  Halves h;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_cal ? h.cal : h.test).push_back(rows[order[i]]);
  return h;
}

std::vector<double> energies(const eval::ProbRows& rows, double T) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(energy_score(r, T));
  return out;
}

std::vector<double> negated(std::vector<double> v) {
  for (auto& x : v) x = -x;
  return v;
}

// Smallest ID energy t with |{e <= t}| / n >= target.
double tau_for(std::vector<double> id_energies, double target) {
  std::sort(id_energies.begin(), id_energies.end());
  const double n = static_cast<double>(id_energies.size());
  for (std::size_t k = 1; k <= id_energies.size(); ++k) {
    // Skip ahead over ties so the count includes every equal energy.
    if (k < id_energies.size() && id_energies[k] == id_energies[k - 1]) continue;
    if (static_cast<double>(k) / n >= target) return id_energies[k - 1];
  }
  return id_energies.back();
}

double quantile(const std::vector<double>& sorted, double level) {
  const double pos = level * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

OodFit calibrate_ood(const eval::ProbRows& id_logits, const eval::ProbRows& ood_logits, const OodOptions& options) {
  if (id_logits.empty() || ood_logits.empty()) throw Error(ErrorCode::EmptySet, "ID and OOD logit sets must be nonempty");
  if (options.temperatures.empty()) throw Error(ErrorCode::EmptySet, "temperature grid is empty");
  const auto id = split_rows(id_logits, options.calibration_fraction, options.seed, 1);
  const auto ood = split_rows(ood_logits, options.calibration_fraction, options.seed, 2);

  OodFit fit;
  double best = -1.0;
  for (double T : options.temperatures) {
    // ID is the positive class and scores as negative energy.
    const double auc = eval::roc_pr(negated(energies(id.cal, T)), negated(energies(ood.cal, T))).auroc;
    fit.auroc_by_temperature.push_back(auc);
    if (auc > best) {
      best = auc;
      fit.calibration.temperature = T;
    }
  }
  const double T = fit.calibration.temperature;
  fit.cal_id_energies = energies(id.cal, T);
  fit.cal_ood_energies = energies(ood.cal, T);
  fit.test_id_energies = energies(id.test, T);
  fit.test_ood_energies = energies(ood.test, T);

  auto& cal = fit.calibration;
  cal.target_tpr = options.target_tpr;
  cal.tau = tau_for(fit.cal_id_energies, options.target_tpr);
  cal.n_cal = fit.cal_id_energies.size() + fit.cal_ood_energies.size();
  auto sorted = fit.cal_id_energies;
  std::sort(sorted.begin(), sorted.end());
  for (double level : {0.05, 0.25, 0.5, 0.75, 0.95}) cal.id_energy_quantiles.emplace_back(level, quantile(sorted, level));
  cal.roc_points =
      eval::roc_pr(negated(fit.cal_id_energies), negated(fit.cal_ood_energies), options.target_tpr).points;
  // Fingerprint over all rows, labelled 1 for ID and 0 for OOD.
  eval::ProbRows all = id_logits;
  all.insert(all.end(), ood_logits.begin(), ood_logits.end());
  std::vector<int> flags(id_logits.size(), 1);
  flags.resize(all.size(), 0);
  cal.created_from = data_fingerprint(all, flags);

  const auto roc = eval::roc_pr(negated(fit.test_id_energies), negated(fit.test_ood_energies), options.target_tpr);
  auto& m = fit.metrics;
  m.auroc = roc.auroc;
  m.aupr = roc.aupr;
  m.fpr_at_tpr = roc.fpr_at_tpr;
  m.n_test_id = fit.test_id_energies.size();
  m.n_test_ood = fit.test_ood_energies.size();
  double kept = 0, leaked = 0;
  for (double e : fit.test_id_energies) kept += e <= cal.tau;
  for (double e : fit.test_ood_energies) leaked += e <= cal.tau;
  m.tpr_at_tau = kept / static_cast<double>(m.n_test_id);
  m.fpr_at_tau = leaked / static_cast<double>(m.n_test_ood);
  m.accuracy = (kept + (static_cast<double>(m.n_test_ood) - leaked)) / static_cast<double>(m.n_test_id + m.n_test_ood);
  return fit;
}

OodVerdict ood_decide(std::span<const double> logits, const OodCalibration& calibration) {
  const double e = energy_score(logits, calibration.temperature);
  return {e, e > calibration.tau};
}

nlohmann::json to_json(const OodCalibration& c) {
  nlohmann::json q = nlohmann::json::array();
  for (const auto& [level, e] : c.id_energy_quantiles) q.push_back({level, e});
  nlohmann::json pts = nlohmann::json::array();
  for (std::size_t i = 1; i < c.roc_points.size(); ++i) pts.push_back({c.roc_points[i].fpr, c.roc_points[i].tpr});
  return {{"kind", "ood"},
          {"target_tpr", c.target_tpr},
          {"T", c.temperature},
          {"tau", c.tau},
          {"n_cal", c.n_cal},
          {"created_from", c.created_from},
          {"summary", {{"id_energy_quantiles", q}, {"roc_points", pts}}}};
}

OodCalibration ood_from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind") != "ood") throw Error(ErrorCode::MalformedFile, "not an ood calibration");
    OodCalibration c;
    c.temperature = j.at("T").get<double>();
    c.tau = j.at("tau").get<double>();
    c.target_tpr = j.at("target_tpr").get<double>();
    c.n_cal = j.at("n_cal").get<std::size_t>();
    c.created_from = j.value("created_from", "");
    if (j.contains("summary")) {
      for (const auto& q : j["summary"].value("id_energy_quantiles", nlohmann::json::array()))
        c.id_energy_quantiles.emplace_back(q[0].get<double>(), q[1].get<double>());
      for (const auto& p : j["summary"].value("roc_points", nlohmann::json::array())) {
        eval::CurvePoint cp;
        cp.fpr = p[0].get<double>();
        cp.tpr = p[1].get<double>();
        c.roc_points.push_back(cp);
      }
    }
    if (!(c.temperature > 0.0) || !std::isfinite(c.tau)) throw Error(ErrorCode::MalformedFile, "invalid T or tau");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedFile, std::string("ood calibration: ") + e.what());
  }
}

nlohmann::json to_json(const OodMetrics& m) {
  return {{"auroc", m.auroc},           {"aupr", m.aupr},           {"fpr_at_tpr", m.fpr_at_tpr},
          {"tpr_at_tau", m.tpr_at_tau}, {"fpr_at_tau", m.fpr_at_tau}, {"accuracy", m.accuracy},
          {"n_test_id", m.n_test_id},   {"n_test_ood", m.n_test_ood}};
}

}  // namespace weedid::trust
