#pragma once

// Local HTTP server for downloader tests. Serves registered bodies, fails
// chosen requests on a fixed schedule and records how many requests were in
// progress per Host header at once.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "weedid/core/random.hpp"
#include "weedid/io/digest.hpp"

namespace weedid::testing {

struct FaultPlan {
  int fail_first = 0;     // the first n requests get `fail_status`
  int fail_status = 503;
  bool corrupt = false;   // every 200 response carries a flipped byte
  bool missing = false;   // always 404
};

class FaultServer {
 public:
  explicit FaultServer(int threads = 24) {
    server_.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
    server_.Get(R"(/.*)", [this](const httplib::Request& req, httplib::Response& res) { handle(req, res); });
    port_ = server_.bind_to_any_port("0.0.0.0");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FaultServer() {
    server_.stop();
    thread_.join();
  }
  FaultServer(const FaultServer&) = delete;
  FaultServer& operator=(const FaultServer&) = delete;

  int port() const { return port_; }
  std::string url(const std::string& host, const std::string& path) const {
    return "http://" + host + ":" + std::to_string(port_) + path;
  }

  void add(const std::string& path, std::string body, FaultPlan plan = {}) {
    std::lock_guard lock(mutex_);
    files_[path] = File{std::move(body), plan, 0, 0};
  }

  // Bodies go out in chunks of `chunk` bytes with `pause` after each.
  void set_pacing(std::size_t chunk, std::chrono::milliseconds pause) {
    std::lock_guard lock(mutex_);
    chunk_ = chunk;
    pause_ = pause;
  }

  int max_active(const std::string& host_key) const {
    std::lock_guard lock(mutex_);
    auto it = max_active_.find(host_key);
    return it == max_active_.end() ? 0 : it->second;
  }
  int max_active_total() const {
    std::lock_guard lock(mutex_);
    return max_total_;
  }
  int active_total() const {
    std::lock_guard lock(mutex_);
    return total_;
  }
  // Forgets the recorded peaks; used between two client processes.
  void reset_peaks() {
    std::lock_guard lock(mutex_);
    max_active_.clear();
    max_total_ = 0;
  }
  int requests(const std::string& path) const {
    std::lock_guard lock(mutex_);
    auto it = files_.find(path);
    return it == files_.end() ? 0 : it->second.requests;
  }
  int successes(const std::string& path) const {
    std::lock_guard lock(mutex_);
    auto it = files_.find(path);
    return it == files_.end() ? 0 : it->second.ok;
  }

 private:
  struct File {
    std::string body;
    FaultPlan plan;
    int requests = 0;
    int ok = 0;
  };

  void handle(const httplib::Request& req, httplib::Response& res) {
    const std::string host = req.get_header_value("Host");
    auto body = std::make_shared<std::string>();
    int status = 200;
    std::size_t chunk;
    std::chrono::milliseconds pause;
    {
      std::lock_guard lock(mutex_);
      ++active_[host];
      ++total_;
      max_active_[host] = std::max(max_active_[host], active_[host]);
      max_total_ = std::max(max_total_, total_);
      chunk = chunk_;
      pause = pause_;
      auto it = files_.find(req.path);
      if (it == files_.end() || it->second.plan.missing) {
        status = 404;
        if (it != files_.end()) ++it->second.requests;
      } else {
        auto& f = it->second;
        ++f.requests;
        if (f.requests <= f.plan.fail_first) {
          status = f.plan.fail_status;
        } else {
          *body = f.body;
          if (f.plan.corrupt && !body->empty()) (*body)[0] = static_cast<char>((*body)[0] ^ 0x5a);
          ++f.ok;
        }
      }
    }
    if (status != 200) *body = "error";
    res.status = status;
    // A request counts as active until just before its last byte is written,
    // which is strictly inside the client's own in-flight window even if this
    // thread is preempted right after the write.
    auto released = std::make_shared<std::atomic<bool>>(false);
    auto release = [this, host, released] {
      if (released->exchange(true)) return;
      std::lock_guard lock(mutex_);
      --active_[host];
      --total_;
    };
    res.set_content_provider(
        body->size(), "application/octet-stream",
        [body, chunk, pause, release](std::size_t offset, std::size_t length, httplib::DataSink& sink) {
          const std::size_t n = std::min(length, chunk);
          const bool last = offset + n == body->size();
          if (last) release();
          sink.write(body->data() + offset, n);
          if (!last && pause.count() > 0) std::this_thread::sleep_for(pause);
          return true;
        },
        [release](bool) { release(); });
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;

  mutable std::mutex mutex_;
  std::map<std::string, File> files_;
  std::map<std::string, int> active_;
  std::map<std::string, int> max_active_;
  int total_ = 0;
  int max_total_ = 0;
  std::size_t chunk_ = 1 << 16;
  std::chrono::milliseconds pause_{0};
};

/// Deterministic pseudo-random payload.
inline std::string payload(std::uint64_t seed, std::size_t n) {
  auto rng = make_rng(seed, 77);
  std::string s(n, '\0');
  for (auto& c : s) c = static_cast<char>(rng() & 0xff);
  return s;
}

inline std::string sha256_tag(const std::string& body) { return "sha256:" + io::sha256_hex(body); }

}  // namespace weedid::testing
