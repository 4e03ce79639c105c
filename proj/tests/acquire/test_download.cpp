#include <doctest.h>

#include <fstream>
#include <functional>

#include "support/acquire_fixture.hpp"
#include "support/temp_dir.hpp"
#include "weedid/acquire/download.hpp"
#include "weedid/error.hpp"
#include "weedid/io/files.hpp"

using namespace weedid;
using namespace weedid::acquire;
using weedid::testing::FaultPlan;
using weedid::testing::FaultServer;
using weedid::testing::TempDir;

namespace {

DownloadOptions options_for(const TempDir& dir, bool resume = false) {
  DownloadOptions o;
  o.root = dir / "data";
  o.journal = dir / "journal.ndjson";
  o.resume = resume;
  return o;
}

ManifestEntry entry_for(FaultServer& server, const std::string& path, const std::string& body) {
  ManifestEntry e;
  e.url = server.url("127.0.0.1", path);
  e.species_id = "Amaranthus palmeri";
  e.filename = path.substr(path.rfind('/') + 1);
  e.expected_bytes = static_cast<std::int64_t>(body.size());
  e.checksum = testing::sha256_tag(body);
  return e;
}

int count_events(const std::filesystem::path& journal, const std::string& kind) {
  std::ifstream in(journal);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) n += line.find("\"event\":\"" + kind + "\"") != std::string::npos;
  return n;
}

}  // namespace

TEST_CASE("retry backoff doubles from the base") {
  RetryPolicy r;
  CHECK(r.max_backoff(1).count() == 500);
  CHECK(r.max_backoff(2).count() == 1000);
  CHECK(r.max_backoff(4).count() == 4000);
}

TEST_CASE("policy limits must be positive") {
  for (auto mutate : std::vector<std::function<void(PolitenessPolicy&)>>{
           [](auto& p) { p.max_global_concurrency = 0; }, [](auto& p) { p.max_per_host_concurrency = 0; },
           [](auto& p) { p.bytes_per_second_cap = 0.0; }, [](auto& p) { p.retry.max_attempts = 0; },
           [](auto& p) { p.retry.factor = 0.5; }}) {
    PolitenessPolicy p;
    mutate(p);
    try {
      p.validate();
      FAIL("expected ConfigError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigError);
    }
  }
}

TEST_CASE("an empty manifest succeeds at once with an empty journal") {
  TempDir dir("dl-empty");
  auto j = download_all({}, {}, testing::fast_policy(), options_for(dir));
  CHECK(j.entries.empty());
  CHECK(j.complete());
  CHECK(count_events(dir / "journal.ndjson", "attempt") == 0);
}

TEST_CASE("200 entries with transient failures all finish within the attempt budget") {
  FaultServer server;
  server.set_pacing(4096, std::chrono::milliseconds(1));
  auto manifest = testing::fault_manifest(server, 200, 1);
  TempDir dir("dl-200");
  auto policy = testing::fast_policy();
  auto j = download_all(manifest, {}, policy, options_for(dir));

  CHECK(j.done() == 200);
  CHECK(j.failed() == 0);
  std::int64_t expected_bytes = 0;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& s = j.entries[i];
    CHECK(s.attempts <= 5);
    // Scheduled failures plus the success, no extra requests.
    const int planned = i % 4 == 0 ? 2 + static_cast<int>((i / 4) % 2) : 1;
    CHECK(s.attempts == planned);
    CHECK(s.checksum == *manifest[i].checksum);
    expected_bytes += *manifest[i].expected_bytes;
  }
  CHECK(j.bytes_downloaded == expected_bytes);
  CHECK(testing::verified_files(manifest, dir / "data") == 200);
  CHECK(testing::stray_files(manifest, dir / "data") == 0);
  for (const auto& host : testing::fault_hosts()) {
    const auto key = host + ":" + std::to_string(server.port());
    CHECK(server.max_active(key) <= policy.max_per_host_concurrency);
  }
  CHECK(server.max_active_total() <= policy.max_global_concurrency);
  CHECK(server.max_active_total() > 1);  // the run was actually concurrent

  auto replayed = replay_journal(dir / "journal.ndjson", manifest.size());
  CHECK(replayed.done() == 200);
  CHECK(replayed.bytes_downloaded == expected_bytes);
}

TEST_CASE("a permanent checksum mismatch fails after five attempts and spares the rest") {
  FaultServer server;
  const auto good = testing::payload(1, 3000);
  const auto bad = testing::payload(2, 3000);
  server.add("/good.png", good);
  server.add("/bad.png", bad, FaultPlan{0, 503, true, false});
  Manifest m{entry_for(server, "/good.png", good), entry_for(server, "/bad.png", bad)};
  TempDir dir("dl-corrupt");
  auto j = download_all(m, {}, testing::fast_policy(), options_for(dir));
  CHECK(j.entries[0].state == EntryState::Done);
  CHECK(j.entries[1].state == EntryState::Failed);
  CHECK(j.entries[1].attempts == 5);
  CHECK(j.entries[1].reason == "checksum mismatch");
  CHECK(server.requests("/bad.png") == 5);
  CHECK(!std::filesystem::exists(dir / "data" / m[1].destination()));
  CHECK(testing::stray_files(m, dir / "data") == 0);
  CHECK(!j.complete());
}

TEST_CASE("size mismatches, 404s and refused connections") {
  FaultServer server;
  const auto body = testing::payload(3, 1000);
  server.add("/short.png", body);
  server.add("/gone.png", body, FaultPlan{0, 503, false, true});
  auto wrong_size = entry_for(server, "/short.png", body);
  wrong_size.expected_bytes = 999;
  auto gone = entry_for(server, "/gone.png", body);

  // A port nobody listens on: bind a server, note its port, shut it down.
  int dead_port = 0;
  {
    FaultServer closed;
    dead_port = closed.port();
  }
  auto refused = wrong_size;
  refused.url = "http://127.0.0.1:" + std::to_string(dead_port) + "/x.png";
  refused.filename = "x.png";

  TempDir dir("dl-errors");
  auto policy = testing::fast_policy();
  policy.retry.base_backoff = std::chrono::milliseconds(1);
  policy.retry.max_attempts = 3;
  auto j = download_all({wrong_size, gone, refused}, {}, policy, options_for(dir));
  CHECK(j.entries[0].state == EntryState::Failed);
  CHECK(j.entries[0].attempts == 3);
  CHECK(j.entries[0].reason.rfind("size mismatch", 0) == 0);
  CHECK(j.entries[1].state == EntryState::Failed);
  CHECK(j.entries[1].attempts == 1);  // 404 is not retried
  CHECK(j.entries[1].reason == "http 404");
  CHECK(j.entries[2].state == EntryState::Failed);
  CHECK(j.entries[2].attempts == 3);
  CHECK(j.entries[2].reason.rfind("network", 0) == 0);
}

TEST_CASE("resume skips verified entries and finishes the rest") {
  FaultServer server;
  auto manifest = testing::fault_manifest(server, 40, 2);
  TempDir dir("dl-resume");
  std::vector<std::size_t> first_half(20);
  for (std::size_t i = 0; i < 20; ++i) first_half[i] = i;
  auto j1 = download_all(manifest, first_half, testing::fast_policy(), options_for(dir));
  CHECK(j1.done() == 20);

  // A crash mid-write leaves a torn journal line and a stray partial file.
  {
    std::ofstream(dir / "journal.ndjson", std::ios::app) << "{\"event\":\"att";
    std::filesystem::create_directories((dir / "data" / manifest[25].destination()).parent_path());
    std::ofstream(dir / "data" / (manifest[25].destination() + ".part")) << "partial";
  }
  auto j2 = download_all(manifest, {}, testing::fast_policy(), options_for(dir, true));
  CHECK(j2.done() == 40);
  for (std::size_t i = 0; i < 40; ++i) {
    const auto path = parse_url(manifest[i].url).path;
    CHECK(server.successes(path) == 1);
  }
  CHECK(testing::verified_files(manifest, dir / "data") == 40);
  CHECK(testing::stray_files(manifest, dir / "data") == 0);
  CHECK(replay_journal(dir / "journal.ndjson", 40).done() == 40);
}

TEST_CASE("a file renamed into place before its journal entry is not fetched again") {
  FaultServer server;
  const auto body = testing::payload(4, 5000);
  server.add("/a.png", body);
  Manifest m{entry_for(server, "/a.png", body)};
  TempDir dir("dl-rename");
  download_all(m, {}, testing::fast_policy(), options_for(dir));
  REQUIRE(server.successes("/a.png") == 1);

  // Drop the done event, as if the process died right after the rename.
  std::string kept;
  {
    std::ifstream in(dir / "journal.ndjson");
    std::string line;
    while (std::getline(in, line))
      if (line.find("\"done\"") == std::string::npos) kept += line + "\n";
  }
  io::write_file_atomic(dir / "journal.ndjson", kept);
  CHECK(replay_journal(dir / "journal.ndjson", 1).entries[0].state == EntryState::InFlight);

  auto j = download_all(m, {}, testing::fast_policy(), options_for(dir, true));
  CHECK(j.entries[0].state == EntryState::Done);
  CHECK(server.successes("/a.png") == 1);

  // Without resume the journal starts over and the file is fetched again.
  auto fresh = download_all(m, {}, testing::fast_policy(), options_for(dir));
  CHECK(fresh.done() == 1);
  CHECK(server.successes("/a.png") == 2);
}

TEST_CASE("a corrupted file on disk is fetched again on resume") {
  FaultServer server;
  const auto body = testing::payload(5, 5000);
  server.add("/c.png", body);
  Manifest m{entry_for(server, "/c.png", body)};
  TempDir dir("dl-tamper");
  download_all(m, {}, testing::fast_policy(), options_for(dir));
  std::ofstream(dir / "data" / m[0].destination(), std::ios::binary | std::ios::trunc) << "tampered";
  auto j = download_all(m, {}, testing::fast_policy(), options_for(dir, true));
  CHECK(j.entries[0].state == EntryState::Done);
  CHECK(server.successes("/c.png") == 2);
  CHECK(io::read_file(dir / "data" / m[0].destination()) == body);
  CHECK(j.bytes_downloaded == static_cast<std::int64_t>(body.size()));
}

TEST_CASE("group indices outside the manifest are a configuration error") {
  TempDir dir("dl-range");
  try {
    download_all({}, {3}, testing::fast_policy(), options_for(dir));
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
  }
}
