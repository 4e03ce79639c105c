#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "weedid/acquire/manifest.hpp"

namespace weedid::acquire {

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_backoff{500};
  double factor = 2.0;
  bool full_jitter = true;  // sleep uniform in [0, base * factor^(attempt-1)]

  /// Upper end of the wait after failed attempt `attempt` (1-based).
  std::chrono::milliseconds max_backoff(int attempt) const;
};

struct PolitenessPolicy {
  int max_global_concurrency = 8;
  int max_per_host_concurrency = 4;
  std::optional<double> bytes_per_second_cap;
  RetryPolicy retry;
  std::chrono::milliseconds connect_timeout{5000};
  std::chrono::milliseconds read_timeout{30000};
  std::uint64_t seed = 0;  // jitter stream

  /// Throws Error(ConfigError) unless every limit is positive.
  void validate() const;
};

enum class EntryState { Pending, InFlight, Done, Failed };
std::string to_string(EntryState s);

struct EntryStatus {
  EntryState state = EntryState::Pending;
  int attempts = 0;
  std::string reason;          // last failure reason
  std::int64_t bytes = 0;      // size of the verified file
  std::string checksum;        // "sha256:<hex>" of the verified file
  double started_at = 0.0;     // wall clock, seconds since the epoch
  double finished_at = 0.0;
};

/// In-memory view of a journal: the last state of every entry plus totals.
struct DownloadJournal {
  std::vector<EntryStatus> entries;
  std::int64_t bytes_downloaded = 0;  // verified bytes, this and earlier runs
  std::size_t done() const;
  std::size_t failed() const;
  bool complete() const { return done() == entries.size(); }
};

// The journal file is append-only newline-delimited JSON. Events:
//   {"event":"attempt","entry":i,"attempt":n,"t":...}
//   {"event":"retry","entry":i,"attempt":n,"reason":"...","t":...}
//   {"event":"done","entry":i,"attempt":n,"bytes":b,"checksum":"sha256:...","t":...}
//   {"event":"failed","entry":i,"attempts":n,"reason":"...","t":...}
// A torn final line (crash mid-write) is ignored on replay.
DownloadJournal replay_journal(const std::filesystem::path& path, std::size_t entry_count);

struct DownloadOptions {
  std::filesystem::path root;     // destination root; entry paths are relative to it
  std::filesystem::path journal;  // journal file
  bool resume = false;            // keep the journal and skip verified entries
  // Observer for every delivered body chunk (bytes, monotonic seconds);
  // called from worker threads.
  std::function<void(std::int64_t, double)> on_bytes;
};

/// Fetches the given manifest entries (all when `order` is empty) with the
/// politeness limits, verifying size and checksum when the manifest has them.
/// Bodies go to "<dest>.part" and are renamed into place after
/// verification. HTTP 408, 429, 5xx, connection errors and verification
/// failures are retried with backoff; other statuses fail at once. Without
/// `resume` an existing journal is discarded first; with it, verified entries
/// are skipped and the rest start over with a fresh attempt budget.
DownloadJournal download_all(const Manifest& manifest, const std::vector<std::size_t>& order,
                             const PolitenessPolicy& policy, const DownloadOptions& options);

/// Verifies a file against an entry's expected size and checksum. Returns an
/// empty string on success or the failure reason.
std::string verify_file(const std::filesystem::path& path, const ManifestEntry& entry);

}  // namespace weedid::acquire
