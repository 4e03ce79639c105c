#include "weedid/evalkit/reports.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "weedid/error.hpp"
#include "weedid/io/csv.hpp"

namespace weedid::eval {

PerClassReport per_class_report(const ConfusionMatrix& cm, std::span<const std::int64_t> train_counts,
                                double threshold) {
  if (train_counts.size() != static_cast<std::size_t>(cm.classes()))
    throw Error(ErrorCode::LengthMismatch, "train_counts needs one entry per class");
  PerClassReport rep;
  rep.threshold = threshold;
  int perfect = 0, above = 0;
  for (int c = 0; c < cm.classes(); ++c) {
    PerClassRow row{c, std::nullopt, cm.row_sum(c), train_counts[c]};
    if (row.n_test > 0) {
      const double acc = static_cast<double>(cm.tp(c)) / static_cast<double>(row.n_test);
      row.accuracy = acc;
      ++rep.classes_with_data;
      perfect += acc == 1.0;
      above += acc >= threshold;
    }
    rep.rows.push_back(row);
  }
  if (rep.classes_with_data > 0) {
    rep.fraction_at_100 = static_cast<double>(perfect) / rep.classes_with_data;
    rep.fraction_ge = static_cast<double>(above) / rep.classes_with_data;
  }
  return rep;
}

std::vector<AttributionRecord> attribute_errors(const ConfusionMatrix& cm, const ClassSet& classes,
                                                std::span<const std::int64_t> train_counts,
                                                double accuracy_ceiling) {
  if (static_cast<std::size_t>(cm.classes()) != classes.size() ||
      train_counts.size() != static_cast<std::size_t>(cm.classes()))
    throw Error(ErrorCode::LengthMismatch, "matrix, class set and train counts disagree on class count");
  std::vector<AttributionRecord> out;
  for (int s = 0; s < cm.classes(); ++s) {
    const auto row = cm.row_sum(s);
    if (row == 0) continue;
    const double acc = static_cast<double>(cm.tp(s)) / static_cast<double>(row);
    if (acc >= accuracy_ceiling) continue;
    int best = -1;
    for (int p = 0; p < cm.classes(); ++p)
      if (p != s && cm.at(s, p) > 0 && (best < 0 || cm.at(s, p) > cm.at(s, best))) best = p;
    if (best < 0) continue;
    const auto& src = classes.taxa()[s];
    const auto& dst = classes.taxa()[best];
    out.push_back({s, best, acc, cm.at(s, best), static_cast<double>(cm.at(s, best)) / static_cast<double>(cm.fn(s)),
                   src.genus == dst.genus, src.family == dst.family, train_counts[best]});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const AttributionRecord& a, const AttributionRecord& b) { return a.source_accuracy < b.source_accuracy; });
  return out;
}

StrataReport strata_report(const ProbRows& rows, std::span<const int> labels,
                           std::span<const std::set<std::string>> tags, int classes) {
  if (rows.size() != labels.size() || tags.size() != labels.size())
    throw Error(ErrorCode::LengthMismatch, "rows, labels and tags must be parallel");
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < tags.size(); ++i)
    for (const auto& t : tags[i]) {
      auto [it, fresh] = members.try_emplace(t);
      if (fresh) order.push_back(t);
      it->second.push_back(i);
    }
  StrataReport rep;
  for (const auto& tag : order) {
    const auto& idx = members[tag];
    ProbRows sub_rows;
    std::vector<int> sub_labels;
    std::set<int> present;
    for (auto i : idx) {
      sub_rows.push_back(rows[i]);
      sub_labels.push_back(labels[i]);
      present.insert(labels[i]);
    }
    rep.rows.push_back({tag, static_cast<int>(present.size()), evaluate_probs(sub_rows, sub_labels, classes)});
  }
  return rep;
}

nlohmann::json to_json(const PerClassReport& r, const ClassSet* classes) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json j{{"class_id", row.class_id}, {"n_test", row.n_test}, {"train_count", row.train_count}};
    j["accuracy"] = row.accuracy ? nlohmann::json(*row.accuracy) : nlohmann::json("no test data");
    if (classes) j["scientific_name"] = classes->taxa()[row.class_id].scientific_name;
    rows.push_back(j);
  }
  return {{"rows", rows},
          {"summary",
           {{"classes_with_data", r.classes_with_data},
            {"threshold", r.threshold},
            {"fraction_at_100", r.fraction_at_100},
            {"fraction_ge_threshold", r.fraction_ge}}}};
}

nlohmann::json to_json(const AttributionRecord& r, const ClassSet& classes) {
  return {{"source", classes.taxa()[r.source].scientific_name},
          {"source_accuracy", r.source_accuracy},
          {"confounder", classes.taxa()[r.confounder].scientific_name},
          {"count", r.count},
          {"fraction_of_errors", r.fraction_of_errors},
          {"same_genus", r.same_genus},
          {"same_family", r.same_family},
          {"confounder_train_count", r.confounder_train_count}};
}

nlohmann::json to_json(const StrataReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    auto m = to_json(row.metrics);
    m["challenge"] = row.tag;
    m["class_count"] = row.class_count;
    rows.push_back(m);
  }
  return {{"strata", rows}};
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string per_class_to_csv(const PerClassReport& r, const ClassSet* classes) {
  std::ostringstream out;
  out << "class_id,scientific_name,n_test,train_count,accuracy\n";
  for (const auto& row : r.rows)
    out << io::format_csv_row({std::to_string(row.class_id),
                               classes ? classes->taxa()[row.class_id].scientific_name : "",
                               std::to_string(row.n_test), std::to_string(row.train_count),
                               row.accuracy ? fmt(*row.accuracy) : ""});
  return out.str();
}

std::string attribution_to_csv(std::span<const AttributionRecord> records, const ClassSet& classes) {
  std::ostringstream out;
  out << "source,source_accuracy,confounder,count,fraction_of_errors,same_genus,same_family,confounder_train_count\n";
  for (const auto& r : records)
    out << io::format_csv_row({classes.taxa()[r.source].scientific_name, fmt(r.source_accuracy),
                               classes.taxa()[r.confounder].scientific_name, std::to_string(r.count),
                               fmt(r.fraction_of_errors), r.same_genus ? "true" : "false",
                               r.same_family ? "true" : "false", std::to_string(r.confounder_train_count)});
  return out.str();
}

std::string strata_to_csv(const StrataReport& r) {
  std::ostringstream out;
  out << "challenge,class_count,n_images,accuracy,macro_precision,macro_recall,macro_f1\n";
  for (const auto& row : r.rows)
    out << io::format_csv_row({row.tag, std::to_string(row.class_count), std::to_string(row.metrics.n_examples),
                               fmt(row.metrics.accuracy), fmt(row.metrics.macro_precision),
                               fmt(row.metrics.macro_recall), fmt(row.metrics.macro_f1)});
  return out.str();
}

std::string strata_to_text(const StrataReport& r) {
  std::size_t w = 9;
  for (const auto& row : r.rows) w = std::max(w, row.tag.size());
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s %7s %8s %8s %8s %8s %8s\n", static_cast<int>(w), "Challenge", "Classes",
                "Images", "Acc", "MacroP", "MacroR", "MacroF1");
  out << line;
  for (const auto& row : r.rows) {
    const auto& m = row.metrics;
    std::snprintf(line, sizeof line, "%-*s %7d %8lld %8.2f %8.2f %8.2f %8.2f\n", static_cast<int>(w), row.tag.c_str(),
                  row.class_count, static_cast<long long>(m.n_examples), 100 * m.accuracy, 100 * m.macro_precision,
                  100 * m.macro_recall, 100 * m.macro_f1);
    out << line;
  }
  return out.str();
}

}  // namespace weedid::eval
