#include "weedid/acquire/download.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "weedid/acquire/token_bucket.hpp"
#include "weedid/core/random.hpp"
#include "weedid/error.hpp"
#include "weedid/io/digest.hpp"
#include "weedid/io/files.hpp"

namespace weedid::acquire {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using SteadyClock = std::chrono::steady_clock;

double wall_now() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

double steady_now() { return std::chrono::duration<double>(SteadyClock::now().time_since_epoch()).count(); }

bool transient_status(int status) { return status == 408 || status == 429 || status >= 500; }

struct Attempt {
  bool ok = false;
  bool transient = false;
  std::string reason;
  std::int64_t bytes = 0;
  std::string checksum;
};

fs::path part_path(const fs::path& dest) { return fs::path(dest.string() + ".part"); }

// Single writer: every call happens under the scheduler mutex.
class JournalWriter {
 public:
  explicit JournalWriter(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    // A crash may leave a torn last line; start ours on a fresh one.
    bool needs_newline = false;
    if (fs::exists(path) && fs::file_size(path) > 0) {
      std::ifstream in(path, std::ios::binary);
      in.seekg(-1, std::ios::end);
      needs_newline = in.get() != '\n';
    }
    out_.open(path, std::ios::binary | std::ios::app);
    if (!out_) throw Error(ErrorCode::IoError, "cannot open journal " + path.string());
    if (needs_newline) out_ << '\n';
  }

  void write(json event) {
    event["t"] = wall_now();
    out_ << event.dump() << '\n';
    out_.flush();
    if (!out_) throw Error(ErrorCode::IoError, "journal write failed");
  }

 private:
  std::ofstream out_;
};

struct Job {
  std::size_t entry = 0;
  double not_before = 0.0;  // steady seconds
};

class Scheduler {
 public:
  Scheduler(const Manifest& manifest, const PolitenessPolicy& policy, const DownloadOptions& options,
            DownloadJournal& journal, JournalWriter& writer)
      : manifest_(manifest), policy_(policy), options_(options), journal_(journal), writer_(writer) {
    if (policy.bytes_per_second_cap) {
      const double rate = *policy.bytes_per_second_cap;
      bucket_.emplace(rate, std::max(1.0, rate / 4.0));
    }
  }

  void enqueue(std::size_t entry) { queue_.push_back({entry, 0.0}); }

  void run() {
    const int workers =
        static_cast<int>(std::min<std::size_t>(queue_.size(), static_cast<std::size_t>(policy_.max_global_concurrency)));
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back([this] { worker(); });
    for (auto& t : pool) t.join();
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void worker() {
    try {
      for (;;) {
        std::unique_lock lock(mutex_);
        std::optional<Job> job;
        for (;;) {
          if (error_ || (queue_.empty() && in_flight_ == 0)) return;
          double wake = std::numeric_limits<double>::infinity();
          const double now = steady_now();
          for (auto it = queue_.begin(); it != queue_.end(); ++it) {
            const auto host = parse_url(manifest_[it->entry].url).host_key();
            if (per_host_[host] >= policy_.max_per_host_concurrency) continue;
            if (it->not_before > now) {
              wake = std::min(wake, it->not_before);
              continue;
            }
            job = *it;
            queue_.erase(it);
            break;
          }
          if (job) break;
          if (std::isinf(wake)) cv_.wait(lock);
          else cv_.wait_for(lock, std::chrono::duration<double>(wake - now));
        }
        const auto& entry = manifest_[job->entry];
        const auto host = parse_url(entry.url).host_key();
        auto& status = journal_.entries[job->entry];
        ++per_host_[host];
        ++in_flight_;
        status.state = EntryState::InFlight;
        ++status.attempts;
        status.started_at = wall_now();
        writer_.write({{"event", "attempt"}, {"entry", job->entry}, {"attempt", status.attempts}});
        lock.unlock();

        Attempt result = fetch(entry);

        lock.lock();
        --per_host_[host];
        --in_flight_;
        status.finished_at = wall_now();
        if (result.ok) {
          status.state = EntryState::Done;
          status.bytes = result.bytes;
          status.checksum = result.checksum;
          status.reason.clear();
          journal_.bytes_downloaded += result.bytes;
          writer_.write({{"event", "done"},
                         {"entry", job->entry},
                         {"attempt", status.attempts},
                         {"bytes", result.bytes},
                         {"checksum", result.checksum}});
        } else if (result.transient && status.attempts < policy_.retry.max_attempts) {
          status.state = EntryState::Pending;
          status.reason = result.reason;
          writer_.write(
              {{"event", "retry"}, {"entry", job->entry}, {"attempt", status.attempts}, {"reason", result.reason}});
          queue_.push_back({job->entry, steady_now() + backoff(job->entry, status.attempts)});
        } else {
          status.state = EntryState::Failed;
          status.reason = result.reason;
          writer_.write(
              {{"event", "failed"}, {"entry", job->entry}, {"attempts", status.attempts}, {"reason", result.reason}});
        }
        cv_.notify_all();
      }
    } catch (...) {
      std::lock_guard lock(mutex_);
      if (!error_) error_ = std::current_exception();
      cv_.notify_all();
    }
  }

  double backoff(std::size_t entry, int attempt) const {
    const double cap = std::chrono::duration<double>(policy_.retry.max_backoff(attempt)).count();
    if (!policy_.retry.full_jitter) return cap;
    auto rng = make_rng(mix_seed(policy_.seed, entry), static_cast<std::uint64_t>(attempt));
    return cap * uniform01(rng);
  }

  Attempt fetch(const ManifestEntry& entry) {
    Attempt a;
    const Url url = parse_url(entry.url);
    const fs::path dest = options_.root / entry.destination();
    const fs::path part = part_path(dest);
    fs::create_directories(dest.parent_path());

    httplib::Client client(url.origin());
    client.set_connection_timeout(policy_.connect_timeout);
    client.set_read_timeout(policy_.read_timeout);
    client.set_keep_alive(false);

    std::ofstream out(part, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + part.string());
    int status = 0;
    auto res = client.Get(
        url.path,
        [&](const httplib::Response& r) {
          status = r.status;
          return r.status == 200;
        },
        [&](const char* data, std::size_t n) {
          if (bucket_) bucket_->acquire(static_cast<std::int64_t>(n));
          out.write(data, static_cast<std::streamsize>(n));
          if (options_.on_bytes) options_.on_bytes(static_cast<std::int64_t>(n), steady_now());
          return static_cast<bool>(out);
        });
    out.close();

    if (status != 0 && status != 200) {
      fs::remove(part);
      a.transient = transient_status(status);
      a.reason = "http " + std::to_string(status);
      return a;
    }
    if (!res) {
      fs::remove(part);
      a.transient = true;
      a.reason = "network: " + httplib::to_string(res.error());
      return a;
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + part.string());
    a.reason = verify_file(part, entry);
    if (!a.reason.empty()) {
      fs::remove(part);
      a.transient = true;  // a corrupt transfer may succeed next time
      return a;
    }
    a.bytes = static_cast<std::int64_t>(fs::file_size(part));
    a.checksum = "sha256:" + io::sha256_file(part);
    fs::rename(part, dest);
    a.ok = true;
    return a;
  }

  const Manifest& manifest_;
  const PolitenessPolicy& policy_;
  const DownloadOptions& options_;
  DownloadJournal& journal_;
  JournalWriter& writer_;
  std::optional<TokenBucket> bucket_;

  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Job> queue_;
  std::map<std::string, int> per_host_;
  int in_flight_ = 0;
  std::exception_ptr error_;
};

}  // namespace

std::chrono::milliseconds RetryPolicy::max_backoff(int attempt) const {
  const double ms = static_cast<double>(base_backoff.count()) * std::pow(factor, std::max(0, attempt - 1));
  return std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(ms)));
}

void PolitenessPolicy::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigError, m); };
  if (max_global_concurrency < 1) fail("max_global_concurrency must be positive");
  if (max_per_host_concurrency < 1) fail("max_per_host_concurrency must be positive");
  if (bytes_per_second_cap && !(*bytes_per_second_cap > 0.0)) fail("bytes_per_second_cap must be positive");
  if (retry.max_attempts < 1) fail("retry.max_attempts must be positive");
  if (retry.base_backoff.count() < 0) fail("retry.base_backoff must not be negative");
  if (!(retry.factor >= 1.0)) fail("retry.factor must be at least 1");
  if (connect_timeout.count() <= 0 || read_timeout.count() <= 0) fail("timeouts must be positive");
}

std::string to_string(EntryState s) {
  switch (s) {
    case EntryState::Pending: return "pending";
    case EntryState::InFlight: return "in_flight";
    case EntryState::Done: return "done";
    case EntryState::Failed: return "failed";
  }
  return "unknown";
}

std::size_t DownloadJournal::done() const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.state == EntryState::Done; }));
}

std::size_t DownloadJournal::failed() const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.state == EntryState::Failed; }));
}

DownloadJournal replay_journal(const fs::path& path, std::size_t entry_count) {
  DownloadJournal j;
  j.entries.resize(entry_count);
  if (!fs::exists(path)) return j;
  std::ifstream in(path, std::ios::binary);
  std::string line;
  while (std::getline(in, line)) {
    json ev;
    try {
      ev = json::parse(line);
    } catch (const json::exception&) {
      continue;  // torn write from a crash
    }
    if (!ev.is_object() || !ev.contains("entry")) continue;
    const auto i = ev.at("entry").get<std::size_t>();
    if (i >= entry_count) throw Error(ErrorCode::MalformedFile, "journal entry index out of range");
    auto& s = j.entries[i];
    const auto kind = ev.value("event", "");
    const double t = ev.value("t", 0.0);
    if (kind == "attempt") {
      s.state = EntryState::InFlight;
      s.attempts = ev.value("attempt", s.attempts + 1);
      s.started_at = t;
    } else if (kind == "retry") {
      s.state = EntryState::Pending;
      s.reason = ev.value("reason", "");
      s.finished_at = t;
    } else if (kind == "done") {
      if (s.state == EntryState::Done) j.bytes_downloaded -= s.bytes;
      s.state = EntryState::Done;
      s.bytes = ev.value("bytes", std::int64_t{0});
      s.checksum = ev.value("checksum", "");
      s.reason.clear();
      s.finished_at = t;
      j.bytes_downloaded += s.bytes;
    } else if (kind == "failed") {
      s.state = EntryState::Failed;
      s.attempts = ev.value("attempts", s.attempts);
      s.reason = ev.value("reason", "");
      s.finished_at = t;
    }
  }
  return j;
}

std::string verify_file(const fs::path& path, const ManifestEntry& entry) {
  if (!fs::exists(path)) return "missing file";
  if (entry.expected_bytes) {
    const auto size = static_cast<std::int64_t>(fs::file_size(path));
    if (size != *entry.expected_bytes)
      return "size mismatch: expected " + std::to_string(*entry.expected_bytes) + ", got " + std::to_string(size);
  }
  if (entry.checksum) {
    const auto got = "sha256:" + io::sha256_file(path);
    if (got != *entry.checksum) return "checksum mismatch";
  }
  return {};
}

DownloadJournal download_all(const Manifest& manifest, const std::vector<std::size_t>& order,
                             const PolitenessPolicy& policy, const DownloadOptions& options) {
  policy.validate();
  for (auto i : order)
    if (i >= manifest.size()) throw Error(ErrorCode::ConfigError, "group index outside the manifest");
  for (const auto& e : manifest) parse_url(e.url);
  fs::create_directories(options.root);

  if (!options.resume && fs::exists(options.journal)) fs::remove(options.journal);
  DownloadJournal journal = replay_journal(options.journal, manifest.size());
  JournalWriter writer(options.journal);

  std::vector<std::size_t> todo = order;
  if (todo.empty()) {
    todo.resize(manifest.size());
    for (std::size_t i = 0; i < todo.size(); ++i) todo[i] = i;
  }

  Scheduler scheduler(manifest, policy, options, journal, writer);
  for (auto i : todo) {
    auto& s = journal.entries[i];
    const auto& e = manifest[i];
    const fs::path dest = options.root / e.destination();
    const bool verifiable = e.expected_bytes || e.checksum;
    if (s.state == EntryState::Done && fs::exists(dest) && verify_file(dest, e).empty()) continue;
    // Killed between rename and journal write: the file is already in place.
    if (options.resume && s.state != EntryState::Done && verifiable && fs::exists(dest) && verify_file(dest, e).empty()) {
      s.state = EntryState::Done;
      s.bytes = static_cast<std::int64_t>(fs::file_size(dest));
      s.checksum = "sha256:" + io::sha256_file(dest);
      journal.bytes_downloaded += s.bytes;
      writer.write({{"event", "done"}, {"entry", i}, {"attempt", s.attempts}, {"bytes", s.bytes}, {"checksum", s.checksum}});
      continue;
    }
    if (s.state == EntryState::Done) journal.bytes_downloaded -= s.bytes;
    // Each run gets a fresh attempt budget for unfinished entries.
    s = EntryStatus{};
    scheduler.enqueue(i);
  }
  scheduler.run();
  return journal;
}

}  // namespace weedid::acquire
