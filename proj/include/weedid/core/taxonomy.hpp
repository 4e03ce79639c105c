#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace weedid {

struct TaxonRecord {
  int class_id = 0;
  std::string scientific_name;
  std::string common_name;
  std::string genus;
  std::string family;
  std::int64_t image_count = 0;

  bool operator==(const TaxonRecord&) const = default;
};

// Ordered taxa with dense ids 0..C-1. Construction validates the invariants
// (dense ids, unique scientific names, nonempty lineage, nonnegative counts)
// and throws Error(MalformedFile) otherwise.
class ClassSet {
 public:
  ClassSet() = default;
  ClassSet(std::string name, std::vector<TaxonRecord> taxa);

  const std::string& name() const { return name_; }
  const std::vector<TaxonRecord>& taxa() const { return taxa_; }
  std::size_t size() const { return taxa_.size(); }
  bool empty() const { return taxa_.empty(); }

  std::optional<int> find(std::string_view scientific_name) const;
  std::vector<std::int64_t> image_counts() const;

  bool operator==(const ClassSet&) const = default;

 private:
  std::string name_;
  std::vector<TaxonRecord> taxa_;
};

/// Keeps taxa with image_count >= min_images (a species with exactly
/// `min_images` survives), preserving order and re-densifying class ids.
ClassSet filter_species(std::span<const TaxonRecord> candidates, std::int64_t min_images,
                        std::string name = "filtered");

/// Throws Error(UnknownClass) when class_id is outside 0..C-1.
const TaxonRecord& taxonomy_lookup(const ClassSet& set, int class_id);

/// Subset of `parent` in the order of `scientific_names`, re-densified.
/// Throws Error(UnknownSubsetClass) for names absent from `parent`.
ClassSet make_subset(const ClassSet& parent, std::span<const std::string> scientific_names,
                     std::string name);

// CSV with header class_id,scientific_name,common_name,genus,family,image_count
std::string class_set_to_csv(const ClassSet& set);
ClassSet class_set_from_csv(std::string_view text, std::string name);
void save_class_set(const std::filesystem::path& path, const ClassSet& set);
ClassSet load_class_set(const std::filesystem::path& path);

}  // namespace weedid
