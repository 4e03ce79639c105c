#include "weedid/serve/rate_limiter.hpp"

#include "weedid/error.hpp"

namespace weedid::serve {

SlidingWindowLimiter::SlidingWindowLimiter(int limit, double window_seconds) : limit_(limit), window_(window_seconds) {
  if (limit < 1 || !(window_seconds > 0.0)) throw Error(ErrorCode::ConfigError, "rate limit must be positive");
}

std::shared_ptr<SlidingWindowLimiter::Client> SlidingWindowLimiter::client(const std::string& key, double now) {
  std::lock_guard lock(map_mutex_);
  // Forget idle clients now and then so the map does not grow without bound.
  if (now - last_sweep_ > window_) {
    last_sweep_ = now;
    for (auto it = clients_.begin(); it != clients_.end();) {
      std::unique_lock c(it->second->mutex, std::try_to_lock);
      const bool idle = c.owns_lock() && (it->second->admitted.empty() || it->second->admitted.back() <= now - window_);
      if (c.owns_lock()) c.unlock();
      it = idle && it->second.use_count() == 1 ? clients_.erase(it) : std::next(it);
    }
  }
  auto& slot = clients_[key];
  if (!slot) slot = std::make_shared<Client>();
  return slot;
}

Admission SlidingWindowLimiter::admit(const std::string& key, double now) {
  auto c = client(key, now);
  std::lock_guard lock(c->mutex);
  auto& q = c->admitted;
  while (!q.empty() && q.front() <= now - window_) q.pop_front();
  if (static_cast<int>(q.size()) < limit_) {
    q.push_back(now);
    return {true, 0.0};
  }
  return {false, q.front() + window_ - now};
}

}  // namespace weedid::serve
