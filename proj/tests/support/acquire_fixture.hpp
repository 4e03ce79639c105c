#pragma once

// A manifest served by FaultServer: entries spread over three host names
// that all reach the loopback server, with a quarter of them failing their
// first one or two requests.

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "support/fault_server.hpp"
#include "weedid/acquire/download.hpp"
#include "weedid/acquire/manifest.hpp"
#include "weedid/io/digest.hpp"

namespace weedid::testing {

inline const std::vector<std::string>& fault_hosts() {
  static const std::vector<std::string> hosts{"localhost", "127.0.0.1", "127.0.0.2"};
  return hosts;
}

inline acquire::Manifest fault_manifest(FaultServer& server, int n, std::uint64_t seed = 0) {
  static const char* species[] = {"Amaranthus palmeri", "Setaria faberi", "Abutilon theophrasti",
                                  "Ambrosia trifida"};
  static const int statuses[] = {503, 500, 429, 502};
  acquire::Manifest m;
  for (int i = 0; i < n; ++i) {
    const std::string path = "/img/" + std::to_string(seed) + "/" + std::to_string(i) + ".png";
    const auto body = payload(mix_seed(seed, static_cast<std::uint64_t>(i)),
                              2000 + static_cast<std::size_t>((i * 7919) % 18000));
    FaultPlan plan;
    if (i % 4 == 0) {
      plan.fail_first = 1 + (i / 4) % 2;
      plan.fail_status = statuses[(i / 4) % 4];
    }
    server.add(path, body, plan);
    acquire::ManifestEntry e;
    e.url = server.url(fault_hosts()[static_cast<std::size_t>(i) % 3], path);
    e.species_id = species[i % 4];
    e.filename = std::to_string(i) + ".png";
    e.expected_bytes = static_cast<std::int64_t>(body.size());
    e.checksum = sha256_tag(body);
    m.push_back(e);
  }
  return m;
}

inline acquire::PolitenessPolicy fast_policy() {
  acquire::PolitenessPolicy p;
  p.max_global_concurrency = 8;
  p.max_per_host_concurrency = 4;
  p.retry.base_backoff = std::chrono::milliseconds(20);
  p.connect_timeout = std::chrono::milliseconds(2000);
  p.read_timeout = std::chrono::milliseconds(5000);
  return p;
}

/// Number of entries whose final file is present and verifies.
inline std::size_t verified_files(const acquire::Manifest& m, const std::filesystem::path& root) {
  std::size_t ok = 0;
  for (const auto& e : m) ok += acquire::verify_file(root / e.destination(), e).empty();
  return ok;
}

/// Regular files under `root` whose name ends in ".part" or that no entry
/// claims (duplicates left by an interrupted run would show up here).
inline std::size_t stray_files(const acquire::Manifest& m, const std::filesystem::path& root) {
  std::set<std::filesystem::path> expected;
  for (const auto& e : m) expected.insert((root / e.destination()).lexically_normal());
  std::size_t stray = 0;
  for (const auto& f : std::filesystem::recursive_directory_iterator(root))
    if (f.is_regular_file() && !expected.count(f.path().lexically_normal())) ++stray;
  return stray;
}

}  // namespace weedid::testing
