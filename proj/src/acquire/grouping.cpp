#include "weedid/acquire/grouping.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include <json.hpp>

#include "weedid/error.hpp"

namespace weedid::acquire {
namespace {

std::int64_t median(std::vector<std::int64_t> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

}  // namespace

std::int64_t Grouping::makespan() const {
  return loads.empty() ? 0 : *std::max_element(loads.begin(), loads.end());
}

Grouping lpt_groups(const std::vector<std::int64_t>& sizes, int G) {
  if (G < 1) throw Error(ErrorCode::ConfigError, "group count must be at least 1");
  std::vector<std::size_t> order(sizes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sizes[a] > sizes[b]; });
  Grouping g;
  g.groups.resize(static_cast<std::size_t>(G));
  g.loads.assign(static_cast<std::size_t>(G), 0);
  for (auto i : order) {
    // min_element returns the first minimum, which is the lowest index on ties.
    auto lightest = static_cast<std::size_t>(std::min_element(g.loads.begin(), g.loads.end()) - g.loads.begin());
    g.groups[lightest].push_back(i);
    g.loads[lightest] += sizes[i];
  }
  return g;
}

std::vector<std::int64_t> effective_sizes(const Manifest& manifest) {
  std::map<std::string, std::vector<std::int64_t>> by_host;
  std::vector<std::int64_t> all;
  for (const auto& e : manifest) {
    if (!e.expected_bytes) continue;
    by_host[parse_url(e.url).host_key()].push_back(*e.expected_bytes);
    all.push_back(*e.expected_bytes);
  }
  std::map<std::string, std::int64_t> host_median;
  for (auto& [host, v] : by_host) host_median[host] = median(v);
  const std::int64_t global = all.empty() ? 1 : median(all);

  std::vector<std::int64_t> out;
  out.reserve(manifest.size());
  for (const auto& e : manifest) {
    if (e.expected_bytes) {
      out.push_back(*e.expected_bytes);
      continue;
    }
    auto it = host_median.find(parse_url(e.url).host_key());
    out.push_back(it != host_median.end() ? it->second : global);
  }
  return out;
}

Grouping optimize_groups(const Manifest& manifest, int G) { return lpt_groups(effective_sizes(manifest), G); }

std::string group_file_json(const Grouping& grouping, const std::string& manifest_path) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& group : grouping.groups) {
    auto idx = group;
    std::sort(idx.begin(), idx.end());
    nlohmann::json ranges = nlohmann::json::array();
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i + 1;
      while (j < idx.size() && idx[j] == idx[j - 1] + 1) ++j;
      ranges.push_back({idx[i], idx[j - 1] + 1});
      i = j;
    }
    out.push_back({{"manifest", manifest_path}, {"ranges", ranges}});
  }
  return out.dump(2) + "\n";
}

std::vector<GroupSpec> parse_group_file(std::string_view text) {
  std::vector<GroupSpec> out;
  try {
    auto j = nlohmann::json::parse(text);
    if (!j.is_array()) throw Error(ErrorCode::MalformedFile, "group file must be a JSON list");
    for (const auto& g : j) {
      GroupSpec spec;
      spec.manifest_path = g.at("manifest").get<std::string>();
      for (const auto& r : g.at("ranges")) {
        auto begin = r.at(0).get<std::size_t>();
        auto end = r.at(1).get<std::size_t>();
        if (end < begin) throw Error(ErrorCode::MalformedFile, "group range with end before begin");
        for (auto i = begin; i < end; ++i) spec.indices.push_back(i);
      }
      out.push_back(std::move(spec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedFile, std::string("group file: ") + e.what());
  }
  return out;
}

}  // namespace weedid::acquire
