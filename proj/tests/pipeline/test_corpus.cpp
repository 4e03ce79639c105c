#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "weedid/core/image.hpp"
#include "weedid/error.hpp"
#include "weedid/io/files.hpp"
#include "weedid/pipeline/corpus.hpp"
#include "weedid/pipeline/synth.hpp"

using namespace weedid;
using namespace weedid::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("weedid-corpus-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Raster gradient_image(int h, int w, int c) {
  Raster r(h, w, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) r.at(y, x, k) = (y * w + x + 7 * k) % 256 / 255.0;
  return r;
}

template <class F>
ErrorCode code_of(F f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("corpus survives a save/load round trip") {
  auto c = default_synth_config(2);
  c.num_classes = 3;
  c.examples_per_class = 4;
  c.lookalike_pairs = {{0, 1, 0.5}};
  const auto corpus = generate_synthetic(c);
  const auto dir = scratch("roundtrip");
  save_corpus(dir / "c.bin", corpus);
  const auto back = load_corpus(dir / "c.bin");
  CHECK(back == corpus);
  CHECK(corpus_digest(back) == corpus_digest(corpus));
}

TEST_CASE("truncated corpus files are rejected") {
  auto c = default_synth_config(2);
  c.examples_per_class = 2;
  auto bytes = encode_corpus(generate_synthetic(c));
  bytes.resize(bytes.size() - 8);
  CHECK(code_of([&] { decode_corpus(bytes); }) == ErrorCode::MalformedFile);
}

TEST_CASE("PNG encode/decode round-trips 8-bit values") {
  for (int channels : {1, 3}) {
    const auto img = gradient_image(9, 13, channels);
    const auto back = decode_png(encode_png(img));
    REQUIRE(back.height == 9);
    REQUIRE(back.width == 13);
    REQUIRE(back.channels == channels);
    double worst = 0.0;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) worst = std::max(worst, std::abs(img.pixels[i] - back.pixels[i]));
    CHECK(worst < 0.5 / 255.0 + 1e-12);
  }
  CHECK(code_of([] { decode_png("not a png at all"); }) == ErrorCode::MalformedFile);
  auto truncated = encode_png(gradient_image(8, 8, 1));
  truncated.resize(truncated.size() / 2);
  CHECK(code_of([&] { decode_png(truncated); }) == ErrorCode::MalformedFile);
}

TEST_CASE("RGB converts to luminance and resizing preserves constants") {
  Raster rgb(4, 4, 3);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      rgb.at(y, x, 0) = 1.0;
      rgb.at(y, x, 1) = 0.0;
      rgb.at(y, x, 2) = 0.0;
    }
  const auto gray = convert_channels(rgb, 1);
  CHECK(gray.at(2, 2, 0) == doctest::Approx(0.299));
  const auto big = resize_bilinear(gray, 10, 7);
  CHECK(big.height == 10);
  CHECK(big.width == 7);
  for (double v : big.pixels) CHECK(v == doctest::Approx(0.299));
}

TEST_CASE("image folder with label CSV loads by name or id") {
  const auto dir = scratch("folder");
  const ClassSet classes("two", {{0, "Amaranthus palmeri", "palmer amaranth", "Amaranthus", "Amaranthaceae", 0},
                                 {1, "Setaria faberi", "giant foxtail", "Setaria", "Poaceae", 0}});
  io::write_file_atomic(dir / "a.png", encode_png(gradient_image(16, 16, 3)));
  io::write_file_atomic(dir / "sub" / "b.png", encode_png(gradient_image(8, 8, 1)));
  io::write_file_atomic(dir / "labels.csv",
                        "filename,label,tags\na.png,Setaria faberi,early;field\nsub/b.png,0,\n");
  const auto corpus = load_image_folder(dir, dir / "labels.csv", classes, 8, 1);
  REQUIRE(corpus.examples.size() == 2);
  CHECK(corpus.examples[0].label == 1);
  CHECK(corpus.examples[0].strata_tags == std::set<std::string>{"early", "field"});
  CHECK(corpus.examples[1].label == 0);
  CHECK(corpus.examples[0].image.height == 8);
  CHECK(corpus.examples[0].image.channels == 1);

  io::write_file_atomic(dir / "bad.csv", "filename,label\na.png,Zea mays\n");
  CHECK(code_of([&] { load_image_folder(dir, dir / "bad.csv", classes, 8, 1); }) == ErrorCode::UnknownClass);
  io::write_file_atomic(dir / "missing.csv", "filename,label\nnope.png,0\n");
  CHECK(code_of([&] { load_image_folder(dir, dir / "missing.csv", classes, 8, 1); }) == ErrorCode::MissingFile);
  io::write_file_atomic(dir / "header.csv", "file,class\na.png,0\n");
  CHECK(code_of([&] { load_image_folder(dir, dir / "header.csv", classes, 8, 1); }) == ErrorCode::MalformedFile);
}

TEST_CASE("restricting a corpus relabels densely in subset order") {
  auto c = default_synth_config(0);
  c.num_classes = 5;
  c.examples_per_class = 3;
  c.lookalike_pairs.clear();
  const auto corpus = generate_synthetic(c);
  const std::vector<std::string> names = {corpus.classes.taxa()[3].scientific_name,
                                          corpus.classes.taxa()[1].scientific_name};
  const auto sub = restrict_corpus(corpus, names, "pair");
  CHECK(sub.classes.size() == 2);
  CHECK(sub.examples.size() == 6);
  CHECK(sub.examples[0].label == 1);  // class-major input: class 1 comes first
  CHECK(sub.examples[3].label == 0);
  CHECK(sub.examples[3].image == corpus.examples[9].image);
  CHECK(code_of([&] { restrict_corpus(corpus, {"Nope nope"}, "x"); }) == ErrorCode::UnknownSubsetClass);
}
