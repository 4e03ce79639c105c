#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "support/toy_logits.hpp"
#include "weedid/error.hpp"
#include "weedid/trust/ood.hpp"

using namespace weedid;
using namespace weedid::trust;

namespace {

double energy_oracle(const std::vector<double>& logits, double T) {
  long double s = 0;
  for (double l : logits) s += std::exp(static_cast<long double>(l) / T);
  return static_cast<double>(-static_cast<long double>(T) * std::log(s));
}

}  // namespace

TEST_CASE("energy of equal logits is -T ln K") {
  std::vector<double> z{0, 0};
  CHECK(energy_score(z, 1.0) == doctest::Approx(-0.693147180559945).epsilon(1e-12));
}

TEST_CASE("energy at a small temperature is dominated by the max logit") {
  std::vector<double> z{2, 1, 0};
  const double e = energy_score(z, 0.02);
  CHECK(std::abs(e - energy_oracle(z, 0.02)) <= 1e-12);
  CHECK(std::abs(e - (-2.0)) <= 1e-9);
}

TEST_CASE("energy rejects empty input and non-positive temperature") {
  std::vector<double> none;
  CHECK_THROWS_AS(energy_score(none, 1.0), Error);
  std::vector<double> z{1.0};
  CHECK_THROWS_AS(energy_score(z, 0.0), Error);
}

TEST_CASE("energy shift identity and low-temperature limit (property)") {
  Rng rng = make_rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(1 + uniform_index(rng, 12));
    for (auto& v : z) v = 3.0 * normal(rng);
    const double c = 5.0 * normal(rng);
    std::vector<double> shifted = z;
    for (auto& v : shifted) v += c;
    for (double T : {0.02, 0.1, 0.5, 1.0, 2.0}) {
      CHECK(std::abs(energy_score(shifted, T) - (energy_score(z, T) - c)) <= 1e-12 * std::max(1.0, std::abs(c) + 20));
      CHECK(energy_score(z, T) <= -*std::max_element(z.begin(), z.end()) + 1e-12);
      CHECK(std::abs(energy_score(z, T) - energy_oracle(z, T)) <= 1e-9);
    }
    CHECK(std::abs(energy_score(z, 1e-4) + *std::max_element(z.begin(), z.end())) <= 1e-3 + 1e-4 * std::log(12.0));
  }
}

TEST_CASE("perfect separation calibrates tau at the ID energy") {
  eval::ProbRows id(20, std::vector<double>{10.0}), ood(20, std::vector<double>{0.0});
  OodOptions opts;
  opts.temperatures = {1.0};
  auto fit = calibrate_ood(id, ood, opts);
  CHECK(fit.calibration.tau == doctest::Approx(-10.0));
  CHECK(fit.metrics.fpr_at_tpr == 0.0);
  CHECK(fit.metrics.auroc == 1.0);
  CHECK(fit.metrics.accuracy == 1.0);
}

TEST_CASE("tau and FPR95 match a brute-force threshold sweep") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto id = testing::id_logits(300, 5, 1.5, seed);
    auto ood = testing::ood_logits(300, 5, 0.0, seed);
    OodOptions opts;
    opts.seed = seed;
    auto fit = calibrate_ood(id.logits, ood, opts);
    const double T = fit.calibration.temperature;
    // tau: smallest candidate with ID fraction at or below it >= target.
    std::vector<double> cands = fit.cal_id_energies;
    cands.insert(cands.end(), fit.cal_ood_energies.begin(), fit.cal_ood_energies.end());
    double tau = INFINITY;
    for (double t : cands) {
      double hit = 0;
      for (double e : fit.cal_id_energies) hit += e <= t;
      if (hit / fit.cal_id_energies.size() >= 0.95) tau = std::min(tau, t);
    }
    CHECK(fit.calibration.tau == tau);
    // FPR95 on the held-out split: ID is positive, detected when energy <= t.
    std::vector<double> test_all = fit.test_id_energies;
    test_all.insert(test_all.end(), fit.test_ood_energies.begin(), fit.test_ood_energies.end());
    double fpr = 1.0;
    for (double t : test_all) {
      double tp = 0, fp = 0;
      for (double e : fit.test_id_energies) tp += e <= t;
      for (double e : fit.test_ood_energies) fp += e <= t;
      if (tp / fit.test_id_energies.size() >= 0.95) fpr = std::min(fpr, fp / fit.test_ood_energies.size());
    }
    CHECK(fit.metrics.fpr_at_tpr == fpr);
    // The energies really were computed at the chosen temperature.
    CHECK(fit.cal_id_energies.size() + fit.test_id_energies.size() == 300);
    CHECK(fit.calibration.n_cal == fit.cal_id_energies.size() + fit.cal_ood_energies.size());
    CHECK(T > 0);
  }
}

TEST_CASE("the temperature with the best calibration AUROC wins") {
  auto id = testing::id_logits(200, 5, 2.0, 3);
  auto ood = testing::ood_logits(200, 5, 0.0, 3);
  OodOptions opts;
  opts.temperatures = {0.02, 1.0, 5.0};
  auto fit = calibrate_ood(id.logits, ood, opts);
  REQUIRE(fit.auroc_by_temperature.size() == 3);
  const auto best = std::max_element(fit.auroc_by_temperature.begin(), fit.auroc_by_temperature.end());
  CHECK(fit.calibration.temperature == opts.temperatures[best - fit.auroc_by_temperature.begin()]);
}

TEST_CASE("calibration rejects empty sets") {
  eval::ProbRows none, some(4, std::vector<double>{1.0, 0.0});
  CHECK_THROWS_AS(calibrate_ood(none, some, {}), Error);
  CHECK_THROWS_AS(calibrate_ood(some, none, {}), Error);
  OodOptions empty_grid;
  empty_grid.temperatures.clear();
  CHECK_THROWS_AS(calibrate_ood(some, some, empty_grid), Error);
}

TEST_CASE("decisions at and around the threshold") {
  OodCalibration cal;
  cal.temperature = 1.0;
  std::vector<double> z{3.0, 1.0};
  cal.tau = energy_score(z, 1.0);
  CHECK_FALSE(ood_decide(z, cal).is_ood);

  OodCalibration weeds;
  weeds.temperature = 0.02;
  weeds.tau = -8.2484;
  std::vector<double> weak{1.0, 0.5, 0.2}, strong{12.0, 3.0, 1.0};
  CHECK(ood_decide(weak, weeds).is_ood);
  CHECK_FALSE(ood_decide(strong, weeds).is_ood);
  // Shifting every logit lowers the energy by the shift and flips the verdict.
  std::vector<double> lifted = weak;
  for (auto& v : lifted) v += 10.0;
  const auto a = ood_decide(weak, weeds), b = ood_decide(lifted, weeds);
  CHECK(b.energy == doctest::Approx(a.energy - 10.0));
  CHECK_FALSE(b.is_ood);
  CHECK(ood_decide(weak, weeds).energy == a.energy);
}

TEST_CASE("OOD calibration JSON round-trip") {
  auto id = testing::id_logits(50, 3, 2.0, 9);
  auto ood = testing::ood_logits(50, 3, 0.0, 9);
  auto cal = calibrate_ood(id.logits, ood, {}).calibration;
  auto j = to_json(cal);
  CHECK(j["kind"] == "ood");
  auto back = ood_from_json(j);
  CHECK(back.tau == cal.tau);
  CHECK(back.temperature == cal.temperature);
  CHECK(back.created_from == cal.created_from);
  CHECK(cal.created_from.size() == 64);
}
