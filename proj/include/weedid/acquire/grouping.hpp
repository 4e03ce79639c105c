#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "weedid/acquire/manifest.hpp"

namespace weedid::acquire {

struct Grouping {
  std::vector<std::vector<std::size_t>> groups;  // entry indices, in assignment order
  std::vector<std::int64_t> loads;               // bytes per group

  std::int64_t makespan() const;
};

/// Longest-processing-time greedy: entries sorted by size descending (index
/// ascending on ties), each placed on the currently lightest group, lowest
/// group index on ties. G must be at least 1.
Grouping lpt_groups(const std::vector<std::int64_t>& sizes, int G);

/// Sizes for grouping: expected_bytes where known, otherwise the median of the
/// known sizes on the same host, otherwise the median over all known sizes,
/// otherwise 1.
std::vector<std::int64_t> effective_sizes(const Manifest& manifest);

/// lpt_groups over effective_sizes.
Grouping optimize_groups(const Manifest& manifest, int G);

// Group file: a JSON list with one object per group,
//   [{"manifest": "<path>", "ranges": [[begin, end), ...]}, ...]
// where ranges are half-open index intervals into the manifest.
std::string group_file_json(const Grouping& grouping, const std::string& manifest_path);
struct GroupSpec {
  std::string manifest_path;
  std::vector<std::size_t> indices;
};
std::vector<GroupSpec> parse_group_file(std::string_view text);

}  // namespace weedid::acquire
