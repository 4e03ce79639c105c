#pragma once

#include <cstdint>
#include <functional>
#include <mutex>

namespace weedid::acquire {

/// Shared byte-rate limiter. Tokens refill continuously at `rate` per second
/// up to `burst`. A request for n bytes waits until min(n, burst) tokens are
/// available and then takes n, possibly leaving a debt, so requests larger
/// than the burst still make progress. Bytes granted over any interval of
/// length T are at most burst + rate * T + (largest single request).
class TokenBucket {
 public:
  using Clock = std::function<double()>;              // seconds, monotone
  using Sleep = std::function<void(double seconds)>;  // may return early

  TokenBucket(double rate, double burst);
  TokenBucket(double rate, double burst, Clock clock, Sleep sleep);

  /// Blocks until `bytes` may be delivered. Concurrent callers are served one
  /// at a time.
  void acquire(std::int64_t bytes);

  double rate() const { return rate_; }
  double burst() const { return burst_; }

 private:
  void refill(double now);

  double rate_;
  double burst_;
  double tokens_;
  double last_;
  Clock clock_;
  Sleep sleep_;
  std::mutex mutex_;
};

}  // namespace weedid::acquire
