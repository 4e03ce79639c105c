#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "weedid/core/dataset.hpp"
#include "weedid/core/taxonomy.hpp"

namespace weedid::pipeline {

/// A labeled image collection together with the class set its labels index.
struct Corpus {
  ClassSet classes;
  std::vector<LabeledExample> examples;

  bool operator==(const Corpus&) const = default;
};

// Stored in the shared container format under magic "WEEDCRPS": the header
// lists the taxa and per-example id, label, tags and shape; the payload holds
// the pixels of every example back to back.
std::string encode_corpus(const Corpus& corpus);
Corpus decode_corpus(std::string_view bytes);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& path);

/// SHA-256 of the encoded corpus; used as the data reference in lineage.
std::string corpus_digest(const Corpus& corpus);

/// Reads PNG images listed in a label CSV with header `filename,label`, where
/// label is a scientific name from `classes` or a numeric class id. Paths are
/// relative to `root`. Images are converted to `channels` and resized to
/// `image_size` square. Optional third column `tags` holds ';'-separated
/// strata tags. Throws MissingFile, UnknownClass or MalformedFile.
Corpus load_image_folder(const std::filesystem::path& root, const std::filesystem::path& labels_csv,
                         const ClassSet& classes, int image_size, int channels);

/// Examples of the named classes, relabeled densely in the order given, with
/// the matching class subset. Throws UnknownSubsetClass for unknown names.
Corpus restrict_corpus(const Corpus& corpus, const std::vector<std::string>& scientific_names,
                       const std::string& name);

}  // namespace weedid::pipeline
