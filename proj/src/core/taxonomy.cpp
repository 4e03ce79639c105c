#include "weedid/core/taxonomy.hpp"

#include <unordered_set>

#include "weedid/error.hpp"
#include "weedid/io/csv.hpp"
#include "weedid/io/files.hpp"

namespace weedid {

namespace {
const io::CsvRow kHeader = {"class_id", "scientific_name", "common_name", "genus", "family", "image_count"};
}

ClassSet::ClassSet(std::string name, std::vector<TaxonRecord> taxa) : name_(std::move(name)), taxa_(std::move(taxa)) {
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < taxa_.size(); ++i) {
    const auto& t = taxa_[i];
    if (t.class_id != static_cast<int>(i))
      throw Error(ErrorCode::MalformedFile, "class ids must be dense 0..C-1; got " + std::to_string(t.class_id) +
                                                " at position " + std::to_string(i));
    if (!seen.insert(t.scientific_name).second)
      throw Error(ErrorCode::MalformedFile, "duplicate scientific name " + t.scientific_name);
    if (t.genus.empty() || t.family.empty())
      throw Error(ErrorCode::MalformedFile, "empty genus/family for " + t.scientific_name);
    if (t.image_count < 0) throw Error(ErrorCode::MalformedFile, "negative image_count for " + t.scientific_name);
  }
}

std::optional<int> ClassSet::find(std::string_view scientific_name) const {
  for (const auto& t : taxa_)
    if (t.scientific_name == scientific_name) return t.class_id;
  return std::nullopt;
}

std::vector<std::int64_t> ClassSet::image_counts() const {
  std::vector<std::int64_t> out;
  out.reserve(taxa_.size());
  for (const auto& t : taxa_) out.push_back(t.image_count);
  return out;
}

ClassSet filter_species(std::span<const TaxonRecord> candidates, std::int64_t min_images, std::string name) {
  if (min_images < 0) throw Error(ErrorCode::ConfigError, "min_images must be >= 0");
  std::vector<TaxonRecord> kept;
  for (const auto& t : candidates) {
    if (t.image_count < min_images) continue;
    kept.push_back(t);
    kept.back().class_id = static_cast<int>(kept.size() - 1);
  }
  return ClassSet(std::move(name), std::move(kept));
}

const TaxonRecord& taxonomy_lookup(const ClassSet& set, int class_id) {
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= set.size())
    throw Error(ErrorCode::UnknownClass, "class id " + std::to_string(class_id) + " not in '" + set.name() + "'");
  return set.taxa()[static_cast<std::size_t>(class_id)];
}

ClassSet make_subset(const ClassSet& parent, std::span<const std::string> scientific_names, std::string name) {
  std::vector<TaxonRecord> taxa;
  for (const auto& sci : scientific_names) {
    auto id = parent.find(sci);
    if (!id) throw Error(ErrorCode::UnknownSubsetClass, sci + " is not in '" + parent.name() + "'");
    taxa.push_back(parent.taxa()[static_cast<std::size_t>(*id)]);
    taxa.back().class_id = static_cast<int>(taxa.size() - 1);
  }
  return ClassSet(std::move(name), std::move(taxa));
}

std::string class_set_to_csv(const ClassSet& set) {
  std::string out = io::format_csv_row(kHeader);
  for (const auto& t : set.taxa()) {
    out += io::format_csv_row({std::to_string(t.class_id), t.scientific_name, t.common_name, t.genus, t.family,
                               std::to_string(t.image_count)});
  }
  return out;
}

ClassSet class_set_from_csv(std::string_view text, std::string name) {
  auto rows = io::parse_csv(text);
  if (rows.empty() || rows.front() != kHeader)
    throw Error(ErrorCode::MalformedFile, "class set CSV must start with header " + io::format_csv_row(kHeader));
  std::vector<TaxonRecord> taxa;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != kHeader.size())
      throw Error(ErrorCode::MalformedFile, "class set CSV row " + std::to_string(r) + " has wrong field count");
    TaxonRecord t;
    try {
      t.class_id = std::stoi(row[0]);
      t.image_count = std::stoll(row[5]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::MalformedFile, "class set CSV row " + std::to_string(r) + " has non-numeric fields");
    }
    t.scientific_name = row[1];
    t.common_name = row[2];
    t.genus = row[3];
    t.family = row[4];
    taxa.push_back(std::move(t));
  }
  return ClassSet(std::move(name), std::move(taxa));
}

void save_class_set(const std::filesystem::path& path, const ClassSet& set) {
  io::write_file_atomic(path, class_set_to_csv(set));
}

ClassSet load_class_set(const std::filesystem::path& path) {
  return class_set_from_csv(io::read_file(path), path.stem().string());
}

}  // namespace weedid
