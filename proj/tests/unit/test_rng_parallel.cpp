#include <catch_amalgamated.hpp>

#include <atomic>
#include <stdexcept>
#include <vector>

#include <tsgbt/parallel.hpp>
#include <tsgbt/rng.hpp>

using namespace tsgbt;

TEST_CASE("substream seeds depend only on master and path", "[rng]") {
  CHECK(substream_seed(1, {2, 3}) == substream_seed(1, {2, 3}));
  CHECK(substream_seed(1, {2, 3}) != substream_seed(1, {3, 2}));
  CHECK(substream_seed(1, {2}) != substream_seed(2, {2}));
  CHECK(substream_seed(1, {}) != substream_seed(1, {0}));

  Rng a = substream(9, {4});
  Rng b = substream(9, {4});
  for (int i = 0; i < 10; ++i) CHECK(a() == b());
}

TEST_CASE("parallel_for visits every index once for any thread count", "[rng]") {
  for (std::size_t threads : {1u, 2u, 5u}) {
    std::vector<int> hits(37, 0);
    parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) CHECK(h == 1);
  }
  std::atomic<int> calls{0};
  parallel_for(0, 4, [&](std::size_t) { ++calls; });
  CHECK(calls == 0);
}

TEST_CASE("parallel_for rethrows a task exception", "[rng]") {
  auto run = [](std::size_t threads) {
    parallel_for(10, threads, [](std::size_t i) {
      if (i == 3) throw std::runtime_error("task 3");
    });
  };
  CHECK_THROWS_AS(run(1), std::runtime_error);
  CHECK_THROWS_AS(run(3), std::runtime_error);
}
