#include <doctest.h>

#include <atomic>
#include <map>
#include <thread>

#include "weedid/core/random.hpp"
#include "weedid/error.hpp"
#include "weedid/serve/rate_limiter.hpp"

using namespace weedid;
using namespace weedid::serve;

TEST_CASE("thirty requests a second apart pass and the thirty-first waits") {
  SlidingWindowLimiter lim;
  for (int t = 0; t < 30; ++t) CHECK(lim.admit("a", t).admitted);
  auto r = lim.admit("a", 30.0);
  CHECK(!r.admitted);
  CHECK(r.retry_after_seconds == doctest::Approx(30.0));
  // t = 0 has left (0.5, 60.5]; only 29 remain inside.
  CHECK(lim.admit("a", 60.5).admitted);
  CHECK(!lim.admit("a", 60.6).admitted);
}

TEST_CASE("a new client is always admitted") {
  SlidingWindowLimiter lim;
  for (int i = 0; i < 30; ++i) lim.admit("busy", 0.0);
  CHECK(!lim.admit("busy", 0.0).admitted);
  CHECK(lim.admit("fresh", 0.0).admitted);
}

TEST_CASE("the window is half-open: a timestamp exactly one window old has left") {
  SlidingWindowLimiter lim(2, 10.0);
  CHECK(lim.admit("c", 0.0).admitted);
  CHECK(lim.admit("c", 5.0).admitted);
  auto r = lim.admit("c", 9.0);
  CHECK(!r.admitted);
  CHECK(r.retry_after_seconds == doctest::Approx(1.0));
  CHECK(lim.admit("c", 10.0).admitted);
}

TEST_CASE("random streams match a brute-force window recount") {
  auto rng = make_rng(17);
  int rejected = 0;
  for (int trial = 0; trial < 50; ++trial) {
    SlidingWindowLimiter lim;
    double now = 0.0;
    std::map<std::string, std::vector<double>> admitted;
    for (int i = 0; i < 600; ++i) {
      const std::string client = "c" + std::to_string(uniform_index(rng, 3));
      // Bursts of simultaneous requests mixed with gaps of up to 1 s.
      if (uniform01(rng) < 0.7) now += uniform01(rng);
      auto& hist = admitted[client];
      int in_window = 0;
      double oldest = now;
      for (double t : hist)
        if (t > now - 60.0 && t <= now) {
          ++in_window;
          oldest = std::min(oldest, t);
        }
      const bool expect = in_window < 30;
      auto got = lim.admit(client, now);
      REQUIRE(got.admitted == expect);
      if (expect) hist.push_back(now);
      else ++rejected;
      if (!expect) CHECK(got.retry_after_seconds == doctest::Approx(oldest + 60.0 - now).epsilon(1e-12));
    }
    for (const auto& [client, hist] : admitted)
      for (double a : hist) {
        int n = 0;
        for (double t : hist) n += t > a - 60.0 && t <= a;
        REQUIRE(n <= 30);
      }
  }
  CHECK(rejected > 1000);
}

TEST_CASE("concurrent callers never get more than the limit") {
  SlidingWindowLimiter lim;
  std::atomic<int> admitted{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&] {
      for (int i = 0; i < 50; ++i) admitted += lim.admit("shared", 1.0).admitted;
    });
  for (auto& th : threads) th.join();
  CHECK(admitted.load() == 30);
}

TEST_CASE("limits must be positive") {
  CHECK_THROWS_AS(SlidingWindowLimiter(0, 60.0), Error);
  CHECK_THROWS_AS(SlidingWindowLimiter(30, 0.0), Error);
}
