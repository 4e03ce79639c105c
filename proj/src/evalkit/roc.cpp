#include "weedid/evalkit/roc.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include "weedid/error.hpp"

namespace weedid::eval {

RocResult roc_pr(std::span<const double> positives, std::span<const double> negatives, double tpr_level) {
  if (positives.empty() || negatives.empty()) throw Error(ErrorCode::EmptySet, "roc_pr needs both score lists");
  struct Scored {
    double score;
    bool positive;
  };
  std::vector<Scored> all;
  all.reserve(positives.size() + negatives.size());
  for (double s : positives) all.push_back({s, true});
  for (double s : negatives) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });

  const auto P = static_cast<std::int64_t>(positives.size());
  const auto N = static_cast<std::int64_t>(negatives.size());
  RocResult r;
  r.tpr_level = tpr_level;
  r.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0, 1.0});

  // Integer accumulation keeps the area exact up to the final division.
  std::int64_t tp = 0, fp = 0, prev_tp = 0, prev_fp = 0;
  std::int64_t twice_area = 0;
  double ap = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    const double t = all[i].score;
    while (i < all.size() && all[i].score == t) {
      (all[i].positive ? tp : fp) += 1;
      ++i;
    }
    twice_area += (fp - prev_fp) * (tp + prev_tp);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += static_cast<double>(tp - prev_tp) / static_cast<double>(P) * precision;
    const double tpr = static_cast<double>(tp) / static_cast<double>(P);
    const double fpr = static_cast<double>(fp) / static_cast<double>(N);
    r.points.push_back({t, tpr, fpr, precision});
    if (tpr >= tpr_level) r.fpr_at_tpr = std::min(r.fpr_at_tpr, fpr);
    prev_tp = tp;
    prev_fp = fp;
  }
  r.auroc = static_cast<double>(twice_area) / (2.0 * static_cast<double>(P) * static_cast<double>(N));
  r.aupr = ap;
  return r;
}

nlohmann::json to_json(const RocResult& r, bool with_points) {
  nlohmann::json j{{"auroc", r.auroc}, {"aupr", r.aupr}, {"tpr_level", r.tpr_level}, {"fpr_at_tpr", r.fpr_at_tpr}};
  if (with_points) {
    nlohmann::json pts = nlohmann::json::array();
    for (std::size_t i = 1; i < r.points.size(); ++i)
      pts.push_back({{"threshold", r.points[i].threshold}, {"tpr", r.points[i].tpr}, {"fpr", r.points[i].fpr},
                     {"precision", r.points[i].precision}});
    j["points"] = pts;
  }
  return j;
}

std::string curve_to_csv(const RocResult& r) {
  std::ostringstream out;
  out.precision(17);
  out << "threshold,tpr,fpr,precision\n";
  for (const auto& p : r.points) out << p.threshold << ',' << p.tpr << ',' << p.fpr << ',' << p.precision << '\n';
  return out.str();
}

}  // namespace weedid::eval
