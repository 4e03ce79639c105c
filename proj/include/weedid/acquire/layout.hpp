#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "weedid/acquire/download.hpp"
#include "weedid/acquire/manifest.hpp"

namespace weedid::acquire {

struct IndexRow {
  std::string path;  // relative to the layout root
  std::string species_id;
  std::int64_t bytes = 0;
  std::string checksum;  // "sha256:<hex>"
};

struct LayoutResult {
  std::vector<IndexRow> rows;       // sorted by path
  std::size_t files_written = 0;    // 0 on a repeated run
  std::filesystem::path index_path;
};

/// Copies every done entry from the download root into
/// `{out_root}/{species}/{filename}` (or `layout_template`, which accepts the
/// same placeholders as manifest destinations) and writes `index.csv` with
/// header path,species_id,bytes,checksum. Files already present with equal
/// content are left alone, so a second run changes nothing. Throws
/// MissingFile when a done entry's download is absent and ConfigError when two
/// entries map to one destination.
LayoutResult layout_transform(const Manifest& manifest, const DownloadJournal& journal,
                              const std::filesystem::path& download_root, const std::filesystem::path& out_root,
                              const std::string& layout_template = "{species}/{filename}");

}  // namespace weedid::acquire
