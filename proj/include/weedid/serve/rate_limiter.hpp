#pragma once

#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>

namespace weedid::serve {

struct Admission {
  bool admitted = false;
  double retry_after_seconds = 0.0;  // 0 when admitted
};

/// Exact sliding window: a request at `now` is admitted iff fewer than
/// `limit` admitted requests of the same client lie in (now - window, now].
/// On rejection the retry delay is the time until the oldest of those leaves
/// the window. Rejected requests are not recorded. Times are seconds from one
/// clock shared by all clients and must not decrease per client; clients idle
/// for a whole window are forgotten.
class SlidingWindowLimiter {
 public:
  explicit SlidingWindowLimiter(int limit = 30, double window_seconds = 60.0);

  Admission admit(const std::string& client, double now);

  int limit() const { return limit_; }
  double window() const { return window_; }

 private:
  struct Client {
    std::mutex mutex;
    std::deque<double> admitted;
  };

  std::shared_ptr<Client> client(const std::string& key, double now);

  int limit_;
  double window_;
  std::mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Client>> clients_;
  double last_sweep_ = 0.0;
};

}  // namespace weedid::serve
