#include "weedid/acquire/token_bucket.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

#include "weedid/error.hpp"

namespace weedid::acquire {
namespace {

double steady_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

void real_sleep(double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); }

}  // namespace

TokenBucket::TokenBucket(double rate, double burst) : TokenBucket(rate, burst, steady_seconds, real_sleep) {}

TokenBucket::TokenBucket(double rate, double burst, Clock clock, Sleep sleep)
    : rate_(rate), burst_(burst), tokens_(burst), clock_(std::move(clock)), sleep_(std::move(sleep)) {
  if (!(rate > 0.0) || !(burst > 0.0)) throw Error(ErrorCode::ConfigError, "token bucket rate and burst must be positive");
  last_ = clock_();
}

void TokenBucket::refill(double now) {
  tokens_ = std::min(burst_, tokens_ + (now - last_) * rate_);
  last_ = now;
}

void TokenBucket::acquire(std::int64_t bytes) {
  if (bytes <= 0) return;
  // Holding the lock while sleeping queues other callers behind this one.
  std::lock_guard lock(mutex_);
  const double need = std::min(static_cast<double>(bytes), burst_);
  for (;;) {
    refill(clock_());
    // Tolerance: a rounding-sized deficit may be below the clock's resolution.
    if (tokens_ + 1e-6 >= need) break;
    sleep_((need - tokens_) / rate_);
  }
  tokens_ -= static_cast<double>(bytes);
}

}  // namespace weedid::acquire
