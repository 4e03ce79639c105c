#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "weedid/core/taxonomy.hpp"

namespace weedid::acquire {

struct Url {
  std::string scheme;  // "http" or "https"
  std::string host;
  int port = 0;
  std::string path;  // starts with '/', includes any query

  /// "scheme://host:port" as used by HTTP clients.
  std::string origin() const;
  /// Host plus port: the unit of politeness accounting.
  std::string host_key() const;
};

/// Throws Error(MalformedIndex) unless `text` is http(s)://host[:port][/path].
Url parse_url(std::string_view text);

struct ManifestEntry {
  std::string url;
  std::string species_id;
  std::optional<std::int64_t> expected_bytes;
  std::optional<std::string> checksum;  // "sha256:<hex>"
  std::string dest_template = "{species}/{split}/{filename}";
  std::string split = "train";
  std::string filename;

  /// Relative destination path with the template placeholders filled in.
  std::string destination() const;

  bool operator==(const ManifestEntry&) const = default;
};

using Manifest = std::vector<ManifestEntry>;

/// Fills {species}, {split} and {filename} in `tpl` from `entry`; the species
/// goes through species_dir.
std::string fill_template(std::string_view tpl, const ManifestEntry& entry);

/// Directory-safe form of a species id: spaces become '_', path separators
/// and control characters are dropped.
std::string species_dir(std::string_view species_id);

/// One JSON object per line.
std::string manifest_to_ndjson(const Manifest& manifest);
/// Throws Error(MalformedIndex) on an unparsable line or an invalid entry.
Manifest manifest_from_ndjson(std::string_view text);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest load_manifest(const std::filesystem::path& path);

struct ManifestCriteria {
  ClassSet class_set;
  std::size_t per_class_limit = 0;  // 0 = no cap
  std::uint64_t seed = 0;
  std::string dest_template = "{species}/{split}/{filename}";
};

/// Builds a manifest from a source index CSV with header
/// `species,url,size` and optional `checksum` and `split` columns. Rows are
/// kept for species in the class set (by scientific name); each species'
/// rows are shuffled under the seed and capped, and species appear in class
/// set order. Duplicate filenames within one destination directory are
/// disambiguated with a numeric suffix. Throws Error(MalformedIndex).
Manifest build_manifest(const ManifestCriteria& criteria, std::string_view index_csv);

}  // namespace weedid::acquire
