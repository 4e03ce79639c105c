#include "weedid/acquire/layout.hpp"

#include <algorithm>
#include <map>

#include "weedid/error.hpp"
#include "weedid/io/csv.hpp"
#include "weedid/io/digest.hpp"
#include "weedid/io/files.hpp"

namespace weedid::acquire {

namespace fs = std::filesystem;

LayoutResult layout_transform(const Manifest& manifest, const DownloadJournal& journal, const fs::path& download_root,
                              const fs::path& out_root, const std::string& layout_template) {
  if (journal.entries.size() != manifest.size())
    throw Error(ErrorCode::LengthMismatch, "journal and manifest sizes differ");
  std::map<std::string, std::size_t> claimed;
  LayoutResult result;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (journal.entries[i].state != EntryState::Done) continue;
    const auto& e = manifest[i];
    const fs::path src = download_root / e.destination();
    if (!fs::exists(src)) throw Error(ErrorCode::MissingFile, "downloaded file missing: " + src.string());
    const std::string rel = fill_template(layout_template, e);
    if (auto [it, fresh] = claimed.emplace(rel, i); !fresh)
      throw Error(ErrorCode::ConfigError, "entries " + std::to_string(it->second) + " and " + std::to_string(i) +
                                              " both map to " + rel);
    const fs::path dest = out_root / rel;
    const std::string sum = "sha256:" + io::sha256_file(src);
    if (!fs::exists(dest) || "sha256:" + io::sha256_file(dest) != sum) {
      fs::create_directories(dest.parent_path());
      io::write_file_atomic(dest, io::read_file(src));
      ++result.files_written;
    }
    result.rows.push_back({rel, e.species_id, static_cast<std::int64_t>(fs::file_size(src)), sum});
  }
  std::sort(result.rows.begin(), result.rows.end(), [](const auto& a, const auto& b) { return a.path < b.path; });

  std::string csv = io::format_csv_row({"path", "species_id", "bytes", "checksum"});
  for (const auto& r : result.rows) csv += io::format_csv_row({r.path, r.species_id, std::to_string(r.bytes), r.checksum});
  result.index_path = out_root / "index.csv";
  fs::create_directories(out_root);
  if (!fs::exists(result.index_path) || io::read_file(result.index_path) != csv) io::write_file_atomic(result.index_path, csv);
  return result;
}

}  // namespace weedid::acquire
