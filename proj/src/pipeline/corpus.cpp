#include "weedid/pipeline/corpus.hpp"

#include <charconv>
#include <map>

#include <json.hpp>

#include "weedid/core/image.hpp"
#include "weedid/error.hpp"
#include "weedid/io/container.hpp"
#include "weedid/io/csv.hpp"
#include "weedid/io/digest.hpp"
#include "weedid/io/files.hpp"

namespace weedid::pipeline {

namespace {

constexpr std::string_view kMagic = "WEEDCRPS";

nlohmann::json taxa_json(const ClassSet& set) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& t : set.taxa())
    out.push_back({{"class_id", t.class_id},
                   {"scientific_name", t.scientific_name},
                   {"common_name", t.common_name},
                   {"genus", t.genus},
                   {"family", t.family},
                   {"image_count", t.image_count}});
  return out;
}

}  // namespace

std::string encode_corpus(const Corpus& corpus) {
  io::Container c;
  c.magic = std::string(kMagic);
  nlohmann::json examples = nlohmann::json::array();
  std::size_t total = 0;
  for (const auto& e : corpus.examples) total += e.image.pixels.size();
  c.payload.reserve(total);
  for (const auto& e : corpus.examples) {
    examples.push_back({{"id", e.id},
                        {"label", e.label},
                        {"tags", e.strata_tags},
                        {"shape", {e.image.height, e.image.width, e.image.channels}}});
    c.payload.insert(c.payload.end(), e.image.pixels.begin(), e.image.pixels.end());
  }
  c.header = {{"format", "weedid-corpus"},
              {"version", 1},
              {"class_set", corpus.classes.name()},
              {"taxa", taxa_json(corpus.classes)},
              {"examples", examples}};
  return io::encode_container(c);
}

Corpus decode_corpus(std::string_view bytes) {
  auto c = io::decode_container(bytes, kMagic);
  try {
    const auto& h = c.header;
    if (h.at("format") != "weedid-corpus") throw Error(ErrorCode::MalformedFile, "not a corpus container");
    std::vector<TaxonRecord> taxa;
    for (const auto& t : h.at("taxa"))
      taxa.push_back({t.at("class_id").get<int>(), t.at("scientific_name").get<std::string>(),
                      t.at("common_name").get<std::string>(), t.at("genus").get<std::string>(),
                      t.at("family").get<std::string>(), t.at("image_count").get<std::int64_t>()});
    Corpus corpus{ClassSet(h.at("class_set").get<std::string>(), std::move(taxa)), {}};
    std::size_t offset = 0;
    const auto C = static_cast<int>(corpus.classes.size());
    for (const auto& e : h.at("examples")) {
      LabeledExample ex;
      ex.id = e.at("id").get<std::string>();
      ex.label = e.at("label").get<int>();
      if (ex.label < 0 || ex.label >= C) throw Error(ErrorCode::MalformedFile, "corpus label out of range: " + ex.id);
      for (const auto& t : e.at("tags")) ex.strata_tags.insert(t.get<std::string>());
      const auto& shape = e.at("shape");
      ex.image = Raster(shape.at(0).get<int>(), shape.at(1).get<int>(), shape.at(2).get<int>());
      const auto n = ex.image.pixels.size();
      if (offset + n > c.payload.size()) throw Error(ErrorCode::MalformedFile, "corpus payload truncated");
      std::copy_n(c.payload.begin() + static_cast<std::ptrdiff_t>(offset), n, ex.image.pixels.begin());
      offset += n;
      corpus.examples.push_back(std::move(ex));
    }
    if (offset != c.payload.size()) throw Error(ErrorCode::MalformedFile, "corpus payload has trailing values");
    return corpus;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedFile, std::string("corpus header: ") + e.what());
  }
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  io::write_file_atomic(path, encode_corpus(corpus));
}

Corpus load_corpus(const std::filesystem::path& path) { return decode_corpus(io::read_file(path)); }

std::string corpus_digest(const Corpus& corpus) { return io::sha256_hex(encode_corpus(corpus)); }

Corpus load_image_folder(const std::filesystem::path& root, const std::filesystem::path& labels_csv,
                         const ClassSet& classes, int image_size, int channels) {
  const auto rows = io::parse_csv(io::read_file(labels_csv));
  if (rows.empty() || rows[0].size() < 2 || rows[0][0] != "filename" || rows[0][1] != "label")
    throw Error(ErrorCode::MalformedFile, "label CSV must start with header filename,label");
  Corpus corpus{classes, {}};
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() == 1 && r[0].empty()) continue;
    if (r.size() < 2) throw Error(ErrorCode::MalformedFile, "label CSV row " + std::to_string(i) + " is short");
    int label = -1;
    if (auto id = classes.find(r[1])) {
      label = *id;
    } else {
      int v = 0;
      const auto* end = r[1].data() + r[1].size();
      auto [p, ec] = std::from_chars(r[1].data(), end, v);
      if (ec != std::errc() || p != end || v < 0 || v >= static_cast<int>(classes.size()))
        throw Error(ErrorCode::UnknownClass, "label '" + r[1] + "' is not in class set " + classes.name());
      label = v;
    }
    LabeledExample ex;
    ex.id = r[0];
    ex.label = label;
    ex.image = resize_bilinear(decode_png(io::read_file(root / r[0]), channels), image_size, image_size);
    if (r.size() >= 3 && !r[2].empty()) {
      std::size_t start = 0;
      while (start <= r[2].size()) {
        const auto stop = std::min(r[2].find(';', start), r[2].size());
        if (stop > start) ex.strata_tags.insert(r[2].substr(start, stop - start));
        start = stop + 1;
      }
    }
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

Corpus restrict_corpus(const Corpus& corpus, const std::vector<std::string>& scientific_names,
                       const std::string& name) {
  const auto subset = make_subset(corpus.classes, scientific_names, name);
  std::map<int, int> remap;
  for (std::size_t i = 0; i < scientific_names.size(); ++i) remap[*corpus.classes.find(scientific_names[i])] = static_cast<int>(i);
  Corpus out{subset, {}};
  for (const auto& e : corpus.examples) {
    auto it = remap.find(e.label);
    if (it == remap.end()) continue;
    auto copy = e;
    copy.label = it->second;
    out.examples.push_back(std::move(copy));
  }
  return out;
}

}  // namespace weedid::pipeline
