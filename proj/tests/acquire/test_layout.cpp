#include <doctest.h>

#include <fstream>
#include <map>

#include "support/temp_dir.hpp"
#include "weedid/acquire/layout.hpp"
#include "weedid/core/random.hpp"
#include "weedid/error.hpp"
#include "weedid/io/csv.hpp"
#include "weedid/io/digest.hpp"
#include "weedid/io/files.hpp"

using namespace weedid;
using namespace weedid::acquire;
using weedid::testing::TempDir;
namespace fs = std::filesystem;

namespace {

// Manifest plus downloaded files for `n` entries over `species` names.
Manifest stage_downloads(const fs::path& root, int n, const std::vector<std::string>& species) {
  Manifest m;
  for (int i = 0; i < n; ++i) {
    ManifestEntry e;
    e.url = "http://h.example/" + std::to_string(i);
    e.species_id = species[static_cast<std::size_t>(i) % species.size()];
    e.filename = "img" + std::to_string(i) + ".png";
    e.split = i % 3 == 0 ? "val" : "train";
    const auto dest = root / e.destination();
    fs::create_directories(dest.parent_path());
    std::ofstream(dest, std::ios::binary) << "body-" << i;
    m.push_back(e);
  }
  return m;
}

DownloadJournal all_done(std::size_t n) {
  DownloadJournal j;
  j.entries.resize(n);
  for (auto& s : j.entries) s.state = EntryState::Done;
  return j;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& f : fs::recursive_directory_iterator(root))
    if (f.is_regular_file()) out[fs::relative(f.path(), root).string()] = io::read_file(f.path());
  return out;
}

}  // namespace

TEST_CASE("one species with two files gives two rows in one directory") {
  TempDir dir("layout-one");
  auto m = stage_downloads(dir / "dl", 2, {"Amaranthus palmeri"});
  auto r = layout_transform(m, all_done(2), dir / "dl", dir / "out");
  REQUIRE(r.rows.size() == 2);
  CHECK(r.rows[0].path == "Amaranthus_palmeri/img0.png");
  CHECK(r.rows[1].path == "Amaranthus_palmeri/img1.png");
  CHECK(r.rows[0].bytes == 6);
  CHECK(r.rows[0].checksum == "sha256:" + io::sha256_hex(std::string_view("body-0")));
  int dirs = 0;
  for (const auto& f : fs::directory_iterator(dir / "out")) dirs += f.is_directory();
  CHECK(dirs == 1);
  auto csv = io::parse_csv(io::read_file(r.index_path));
  REQUIRE(csv.size() == 3);
  CHECK(csv[0] == io::CsvRow{"path", "species_id", "bytes", "checksum"});
  CHECK(csv[1][1] == "Amaranthus palmeri");
}

TEST_CASE("a second run changes nothing") {
  TempDir dir("layout-idem");
  auto m = stage_downloads(dir / "dl", 9, {"Amaranthus palmeri", "Setaria faberi"});
  auto first = layout_transform(m, all_done(9), dir / "dl", dir / "out");
  CHECK(first.files_written == 9);
  const auto before = snapshot(dir / "out");
  std::map<std::string, fs::file_time_type> times;
  for (const auto& f : fs::recursive_directory_iterator(dir / "out")) times[f.path().string()] = f.last_write_time();
  auto second = layout_transform(m, all_done(9), dir / "dl", dir / "out");
  CHECK(second.files_written == 0);
  CHECK(snapshot(dir / "out") == before);
  for (const auto& f : fs::recursive_directory_iterator(dir / "out")) CHECK(times[f.path().string()] == f.last_write_time());
}

TEST_CASE("index rows match the done entries on random journals") {
  TempDir dir("layout-random");
  auto m = stage_downloads(dir / "dl", 30, {"Amaranthus palmeri", "Setaria faberi", "Zea mays"});
  auto rng = make_rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    DownloadJournal j;
    j.entries.resize(m.size());
    std::size_t done = 0;
    std::map<std::string, std::size_t> per_species;
    for (std::size_t i = 0; i < m.size(); ++i) {
      j.entries[i].state = static_cast<EntryState>(uniform_index(rng, 4));
      if (j.entries[i].state == EntryState::Done) {
        ++done;
        ++per_species[m[i].species_id];
      }
    }
    const auto out = dir / ("out" + std::to_string(trial));
    auto r = layout_transform(m, j, dir / "dl", out);
    CHECK(r.rows.size() == done);
    std::map<std::string, std::size_t> got;
    for (const auto& row : r.rows) ++got[row.species_id];
    CHECK(got == per_species);
    CHECK(io::parse_csv(io::read_file(r.index_path)).size() == done + 1);
  }
}

TEST_CASE("missing downloads and colliding destinations are errors") {
  TempDir dir("layout-errors");
  auto m = stage_downloads(dir / "dl", 3, {"Amaranthus palmeri"});
  fs::remove(dir / "dl" / m[1].destination());
  try {
    layout_transform(m, all_done(3), dir / "dl", dir / "out");
    FAIL("expected MissingFile");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingFile);
  }
  // Not done: the missing file is ignored.
  auto j = all_done(3);
  j.entries[1].state = EntryState::Failed;
  CHECK(layout_transform(m, j, dir / "dl", dir / "out").rows.size() == 2);

  auto twins = stage_downloads(dir / "dl2", 2, {"Amaranthus palmeri"});
  twins[1].filename = twins[0].filename;
  twins[1].split = "val";
  fs::create_directories((dir / "dl2" / twins[1].destination()).parent_path());
  std::ofstream(dir / "dl2" / twins[1].destination()) << "x";
  try {
    layout_transform(twins, all_done(2), dir / "dl2", dir / "out2");
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
  }
}
